#ifndef MFS_COMMON_HPP
#define MFS_COMMON_HPP

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>

namespace mfs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Outcome of a structural validation: ok, or a description of the first
/// violation found.
struct ValidationReport {
    bool ok = true;
    std::string message;

    static ValidationReport pass() { return {}; }
    static ValidationReport fail(std::string msg) { return {false, std::move(msg)}; }
    explicit operator bool() const { return ok; }
};

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

} // namespace mfs

#endif
