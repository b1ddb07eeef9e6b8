#ifndef MFS_SCALAR_FN_HPP
#define MFS_SCALAR_FN_HPP

#include "mfs/common.hpp"

namespace mfs {

/// Closed catalog of scalar functions of a spatial point. Everything that is
/// configurable by value in this library (moment weights, jump rates, cost
/// shapes, reward pieces) is drawn from here so configs stay declarative.
///
/// Constant:      c0
/// Affine:        c0 + lin·x
/// AffineClipped: max(0, c0 + lin·x)
/// Quadratic:     c0 + lin·x + sum_c quad[c]*x[c]^2
class ScalarFn {
public:
    enum class Kind { Constant, Affine, AffineClipped, Quadratic };

    ScalarFn() : kind_(Kind::Constant), c0_(0.0) {}

    static ScalarFn constant(double c) {
        ScalarFn f;
        f.kind_ = Kind::Constant;
        f.c0_ = c;
        return f;
    }
    static ScalarFn affine(double c0, Vec lin) {
        ScalarFn f;
        f.kind_ = Kind::Affine;
        f.c0_ = c0;
        f.lin_ = std::move(lin);
        return f;
    }
    static ScalarFn affine_clipped(double c0, Vec lin) {
        ScalarFn f = affine(c0, std::move(lin));
        f.kind_ = Kind::AffineClipped;
        return f;
    }
    static ScalarFn quadratic(double c0, Vec lin, Vec quad) {
        ScalarFn f;
        f.kind_ = Kind::Quadratic;
        f.c0_ = c0;
        f.lin_ = std::move(lin);
        f.quad_ = std::move(quad);
        return f;
    }
    /// x -> x[0], the common one-dimensional identity weight.
    static ScalarFn coordinate(int dim = 1, int axis = 0) {
        Vec lin = Vec::Zero(dim);
        lin[axis] = 1.0;
        return affine(0.0, lin);
    }

    Kind kind() const { return kind_; }

    double operator()(const Vec& x) const {
        switch (kind_) {
            case Kind::Constant: return c0_;
            case Kind::Affine: return c0_ + dot(x);
            case Kind::AffineClipped: return std::max(0.0, c0_ + dot(x));
            case Kind::Quadratic: {
                double v = c0_ + dot(x);
                for (int c = 0; c < quad_.size() && c < x.size(); ++c)
                    v += quad_[c] * x[c] * x[c];
                return v;
            }
        }
        return 0.0;
    }

    Vec grad(const Vec& x) const {
        Vec g = Vec::Zero(x.size());
        switch (kind_) {
            case Kind::Constant: break;
            case Kind::Affine:
                for (int c = 0; c < lin_.size() && c < x.size(); ++c) g[c] = lin_[c];
                break;
            case Kind::AffineClipped:
                if (c0_ + dot(x) > 0.0)
                    for (int c = 0; c < lin_.size() && c < x.size(); ++c) g[c] = lin_[c];
                break;
            case Kind::Quadratic:
                for (int c = 0; c < x.size(); ++c) {
                    double gc = c < lin_.size() ? lin_[c] : 0.0;
                    if (c < quad_.size()) gc += 2.0 * quad_[c] * x[c];
                    g[c] = gc;
                }
                break;
        }
        return g;
    }

    /// Diagonal of the Hessian (the catalog has no cross terms).
    Vec hess_diag(const Vec& x) const {
        Vec h = Vec::Zero(x.size());
        if (kind_ == Kind::Quadratic)
            for (int c = 0; c < quad_.size() && c < x.size(); ++c) h[c] = 2.0 * quad_[c];
        return h;
    }

    double c0() const { return c0_; }
    const Vec& lin() const { return lin_; }
    const Vec& quad() const { return quad_; }

private:
    double dot(const Vec& x) const {
        double s = 0.0;
        for (int c = 0; c < lin_.size() && c < x.size(); ++c) s += lin_[c] * x[c];
        return s;
    }

    Kind kind_;
    double c0_;
    Vec lin_;
    Vec quad_;
};

} // namespace mfs

#endif
