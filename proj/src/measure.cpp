#include "mfs/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace mfs {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kFlowEps = 1e-15;

bool same_point(const Vec& a, const Vec& b, double tol) {
    if (a.size() != b.size()) return false;
    for (int c = 0; c < a.size(); ++c)
        if (std::abs(a[c] - b[c]) > tol) return false;
    return true;
}

// Exact transportation plan by successive shortest augmenting paths. The
// shortest path in the residual graph is found with Bellman-Ford, which
// handles the negative backward arcs directly; supports are desk-sized, so
// the dense relaxation is cheap. Each augmentation keeps the plan optimal
// for its flow value, so the residual graph never holds a negative cycle.
double transport_cost(const std::vector<double>& supply, const std::vector<double>& demand,
                      const Mat& cost) {
    const int n = static_cast<int>(supply.size());
    const int m = static_cast<int>(demand.size());
    std::vector<double> rem_s = supply, rem_d = demand;
    Mat plan = Mat::Zero(n, m);

    double shipped = 0.0;
    const double total = 1.0;
    long rounds = 0;
    const long max_rounds = 4L * (n + m) + 16;
    const double inf = std::numeric_limits<double>::infinity();

    while (total - shipped > kFlowEps) {
        if (++rounds > max_rounds)
            throw NumericError("transport_cost: did not converge");

        std::vector<double> dist_s(n, inf), dist_d(m, inf);
        std::vector<int> parent_d(m, -1);   // source feeding each sink
        std::vector<int> parent_s(n, -1);   // sink feeding each source backward
        for (int i = 0; i < n; ++i)
            if (rem_s[i] > kFlowEps) dist_s[i] = 0.0;

        for (int round = 0; round <= n + m; ++round) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                if (!std::isfinite(dist_s[i])) continue;
                for (int j = 0; j < m; ++j) {
                    const double nd = dist_s[i] + cost(i, j);
                    if (nd < dist_d[j] - 1e-15) {
                        dist_d[j] = nd;
                        parent_d[j] = i;
                        changed = true;
                    }
                }
            }
            for (int j = 0; j < m; ++j) {
                if (!std::isfinite(dist_d[j])) continue;
                for (int i = 0; i < n; ++i) {
                    if (plan(i, j) <= kFlowEps) continue;
                    const double nd = dist_d[j] - cost(i, j);
                    if (nd < dist_s[i] - 1e-15) {
                        dist_s[i] = nd;
                        parent_s[i] = j;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }

        int sink = -1;
        for (int j = 0; j < m; ++j)
            if (rem_d[j] > kFlowEps && std::isfinite(dist_d[j]) &&
                (sink < 0 || dist_d[j] < dist_d[sink]))
                sink = j;
        if (sink < 0)
            throw NumericError("transport_cost: no augmenting path (unbalanced weights?)");

        // Walk back to a source with remaining supply, collecting the path.
        std::vector<std::pair<int, int>> fwd;   // (i, j) arcs gaining flow
        std::vector<std::pair<int, int>> bwd;   // (i, j) arcs losing flow
        double cap = rem_d[sink];
        int j = sink;
        while (true) {
            const int i = parent_d[j];
            fwd.emplace_back(i, j);
            if (parent_s[i] < 0) {
                cap = std::min(cap, rem_s[i]);
                break;
            }
            const int jprev = parent_s[i];
            bwd.emplace_back(i, jprev);
            cap = std::min(cap, plan(i, jprev));
            j = jprev;
        }
        cap = std::min(cap, total - shipped);
        if (cap <= kFlowEps) break;     // remaining dust below resolution
        for (auto [i, jj] : fwd) plan(i, jj) += cap;
        for (auto [i, jj] : bwd) plan(i, jj) -= cap;
        rem_s[fwd.back().first] -= cap;
        rem_d[sink] -= cap;
        shipped += cap;
    }

    double c = 0.0;
    for (int i = 0; i < n; ++i)
        for (int jj = 0; jj < m; ++jj) c += plan(i, jj) * cost(i, jj);
    return c;
}

} // namespace

DiscreteLawS DiscreteLawS::point(Vec x, int mode, int n_modes) {
    DiscreteLawS m;
    m.n_modes = n_modes;
    m.atoms.push_back({std::move(x), mode, 1.0});
    return m;
}

double DiscreteLawS::mode_mass(int i) const {
    double s = 0.0;
    for (const auto& a : atoms)
        if (a.mode == i) s += a.weight;
    return s;
}

DiscreteLawS DiscreteLawS::compacted(double x_tol) const {
    DiscreteLawS out;
    out.n_modes = n_modes;
    for (const auto& a : atoms) {
        if (a.weight <= 0.0) continue;
        bool merged = false;
        for (auto& b : out.atoms) {
            if (b.mode == a.mode && same_point(b.x, a.x, x_tol)) {
                b.weight += a.weight;
                merged = true;
                break;
            }
        }
        if (!merged) out.atoms.push_back(a);
    }
    return out;
}

InterventionKernel InterventionKernel::identity(const DiscreteLawS& m) {
    InterventionKernel k;
    k.rows.reserve(m.atoms.size());
    for (const auto& a : m.atoms) {
        Vec row = Vec::Zero(m.n_modes);
        row[a.mode] = 1.0;
        k.rows.push_back(std::move(row));
    }
    return k;
}

ValidationReport validate_law(const DiscreteLawS& m, double tol) {
    if (m.n_modes <= 0) return ValidationReport::fail("n_modes must be positive");
    double mass = 0.0;
    for (std::size_t k = 0; k < m.atoms.size(); ++k) {
        const auto& a = m.atoms[k];
        if (a.weight < 0.0) {
            std::ostringstream os;
            os << "atom " << k << " has negative weight " << a.weight;
            return ValidationReport::fail(os.str());
        }
        if (a.mode < 0 || a.mode >= m.n_modes) {
            std::ostringstream os;
            os << "atom " << k << " has mode " << a.mode << " outside [0," << m.n_modes << ")";
            return ValidationReport::fail(os.str());
        }
        mass += a.weight;
    }
    if (std::abs(mass - 1.0) > tol) {
        std::ostringstream os;
        os << "weights sum to " << mass;
        return ValidationReport::fail(os.str());
    }
    return ValidationReport::pass();
}

ValidationReport validate_kernel(const InterventionKernel& k, const DiscreteLawS& m,
                                 double tol) {
    if (k.size() != static_cast<int>(m.atoms.size()))
        return ValidationReport::fail("kernel row count does not match atom count");
    for (int r = 0; r < k.size(); ++r) {
        const Vec& row = k.rows[r];
        if (row.size() != m.n_modes)
            return ValidationReport::fail("kernel row " + std::to_string(r) +
                                          " has wrong length");
        double s = 0.0;
        for (int j = 0; j < row.size(); ++j) {
            if (row[j] < -tol || row[j] > 1.0 + tol)
                return ValidationReport::fail("kernel row " + std::to_string(r) +
                                              " has entry outside [0,1]");
            s += row[j];
        }
        if (std::abs(s - 1.0) > 1e-9)
            return ValidationReport::fail("kernel row " + std::to_string(r) +
                                          " sums to " + std::to_string(s));
    }
    return ValidationReport::pass();
}

DiscreteLawS apply_kernel(const DiscreteLawS& m, const InterventionKernel& k) {
    auto rep = validate_kernel(k, m);
    require(rep.ok, "apply_kernel: " + rep.message);
    DiscreteLawS out;
    out.n_modes = m.n_modes;
    out.atoms.reserve(m.atoms.size());
    for (std::size_t a = 0; a < m.atoms.size(); ++a) {
        const auto& atom = m.atoms[a];
        const Vec& row = k.rows[a];
        for (int j = 0; j < m.n_modes; ++j) {
            const double w = atom.weight * row[j];
            if (w > 0.0) out.atoms.push_back({atom.x, j, w});
        }
    }
    return out.compacted();
}

double relabeled_mass(const DiscreteLawS& m, const InterventionKernel& k) {
    double s = 0.0;
    for (std::size_t a = 0; a < m.atoms.size(); ++a)
        s += m.atoms[a].weight * (1.0 - k.rows[a][m.atoms[a].mode]);
    return s;
}

double mode_moment(const DiscreteLawS& m, int mode, const ScalarFn& psi) {
    double s = 0.0;
    for (const auto& a : m.atoms)
        if (a.mode == mode) s += a.weight * psi(a.x);
    return s;
}

double wasserstein(const DiscreteLawS& m1, const DiscreteLawS& m2, int order,
                   double kappa) {
    require(order == 1 || order == 2, "wasserstein: order must be 1 or 2");
    auto r1 = validate_law(m1), r2 = validate_law(m2);
    require(r1.ok, "wasserstein: left measure invalid: " + r1.message);
    require(r2.ok, "wasserstein: right measure invalid: " + r2.message);

    const DiscreteLawS a = m1.compacted();
    const DiscreteLawS b = m2.compacted();
    const int n = static_cast<int>(a.atoms.size());
    const int m = static_cast<int>(b.atoms.size());
    Mat cost(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            double d = (a.atoms[i].x - b.atoms[j].x).norm();
            if (a.atoms[i].mode != b.atoms[j].mode) d += kappa;
            cost(i, j) = order == 1 ? d : d * d;
        }
    }
    std::vector<double> supply(n), demand(m);
    for (int i = 0; i < n; ++i) supply[i] = a.atoms[i].weight;
    for (int j = 0; j < m; ++j) demand[j] = b.atoms[j].weight;
    const double c = transport_cost(supply, demand, cost);
    return order == 1 ? std::max(0.0, c) : std::sqrt(std::max(0.0, c));
}

DominanceResult is_dominated(const DiscreteLawS& m_prime, const DiscreteLawS& m,
                             double x_tol, double mass_tol) {
    auto r1 = validate_law(m_prime), r2 = validate_law(m);
    require(r1.ok, "is_dominated: left measure invalid: " + r1.message);
    require(r2.ok, "is_dominated: right measure invalid: " + r2.message);
    require(m_prime.n_modes == m.n_modes, "is_dominated: mode counts differ");

    const DiscreteLawS mp = m_prime.compacted(x_tol);
    const DiscreteLawS mc = m.compacted(x_tol);

    // Group by spatial point; the order is only defined along shared x-atoms.
    struct Group {
        Vec x;
        Vec base;   // per-mode mass in m
        Vec prime;  // per-mode mass in m'
    };
    std::vector<Group> groups;
    auto find_group = [&](const Vec& x) -> Group* {
        for (auto& g : groups)
            if (same_point(g.x, x, x_tol)) return &g;
        return nullptr;
    };
    for (const auto& atom : mc.atoms) {
        Group* g = find_group(atom.x);
        if (!g) {
            groups.push_back({atom.x, Vec::Zero(mc.n_modes), Vec::Zero(mc.n_modes)});
            g = &groups.back();
        }
        g->base[atom.mode] += atom.weight;
    }
    for (const auto& atom : mp.atoms) {
        Group* g = find_group(atom.x);
        if (!g)
            throw InvalidArgument(
                "is_dominated: measures do not share spatial atoms; the relabeling "
                "order is undecidable across different supports");
        g->prime[atom.mode] += atom.weight;
    }

    DominanceResult out;
    for (const auto& g : groups) {
        const double wb = g.base.sum(), wp = g.prime.sum();
        if (std::abs(wb - wp) > mass_tol) {
            out.dominated = false;
            std::ostringstream os;
            os << "spatial mass differs at a shared atom: " << wb << " vs " << wp;
            out.reason = os.str();
            return out;
        }
    }

    // Any per-x redistribution with matching totals is reachable; build the
    // product witness p_ij(x) = m'(x, j) / m(x), indexed over the atoms of m
    // as given so it can be applied directly.
    InterventionKernel witness;
    witness.rows.reserve(m.atoms.size());
    for (const auto& atom : m.atoms) {
        const Group* g = find_group(atom.x);
        Vec row = Vec::Zero(m.n_modes);
        const double wb = g ? g->base.sum() : 0.0;
        if (g && wb > kMassTol)
            for (int j = 0; j < m.n_modes; ++j) row[j] = g->prime[j] / wb;
        else
            row[atom.mode] = 1.0;
        // Guard round-off so the witness stays row-stochastic.
        row /= row.sum();
        witness.rows.push_back(std::move(row));
    }
    out.dominated = true;
    out.witness = std::move(witness);
    return out;
}

} // namespace mfs
