#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ruot/error.hpp"
#include "ruot/rng.hpp"

/**
 * @file transport.hpp
 *
 * @brief Exact discrete optimal transport between weighted point clouds.
 *
 * The transportation linear program is solved by a primal network simplex on the bipartite
 * graph (sources, sinks, and an artificial root), with block-search pricing and the
 * strongly-feasible leaving-arc rule so degenerate pivots cannot cycle.
 */

namespace ruot {

/// Points are columns of `points` (d x n); weights are nonnegative, normalized on use.
struct WeightedCloud {
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;

    static WeightedCloud uniform(Eigen::MatrixXd pts) {
        auto n = pts.cols();
        if (n == 0) return {std::move(pts), Eigen::VectorXd()};
        return {std::move(pts), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
    }

    Eigen::Index size() const { return points.cols(); }
    Eigen::Index dim() const { return points.rows(); }
};

struct TransportPlan {
    Eigen::MatrixXd coupling;  // n x m, rows = source points
    double cost = 0.0;         // sum of coupling * cost matrix
    /// Dual potentials with f_i + g_j <= c_ij and equality on the support.
    Eigen::VectorXd source_potential;
    Eigen::VectorXd target_potential;
};

struct WassersteinResult {
    double distance = 0.0;
    TransportPlan plan;
};

/// c_ij = |x_i - y_j| (order 1) or |x_i - y_j|^2 (order 2).
inline Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int order) {
    if (x.rows() != y.rows()) throw ShapeError("cost matrix: point dimensions differ");
    if (order != 1 && order != 2) throw UsageError("Wasserstein order must be 1 or 2");
    const Eigen::Index n = x.cols(), m = y.cols(), d = x.rows();
    Eigen::MatrixXd c(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) {
                double diff = x(k, i) - y(k, j);
                s += diff * diff;
            }
            c(i, j) = order == 2 ? s : std::sqrt(s);
        }
    }
    return c;
}

namespace detail {

class TransportSimplex {
public:
    TransportSimplex(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand, const Eigen::MatrixXd& cost)
        : n_(supply.size()), m_(demand.size()) {
        const Eigen::Index nodes = n_ + m_;
        root_ = nodes;
        real_arcs_ = n_ * m_;
        const Eigen::Index arcs = real_arcs_ + nodes;
        flow_.assign(static_cast<std::size_t>(arcs), 0.0);
        in_tree_.assign(static_cast<std::size_t>(arcs), 0);
        parent_.assign(static_cast<std::size_t>(nodes + 1), -1);
        pred_.assign(static_cast<std::size_t>(nodes + 1), -1);
        pred_up_.assign(static_cast<std::size_t>(nodes + 1), 0);
        depth_.assign(static_cast<std::size_t>(nodes + 1), 0);
        pi_.assign(static_cast<std::size_t>(nodes + 1), 0.0);
        adjacency_.assign(static_cast<std::size_t>(nodes + 1), {});

        double max_cost = 0.0;
        for (Eigen::Index j = 0; j < m_; ++j)
            for (Eigen::Index i = 0; i < n_; ++i) max_cost = std::max(max_cost, std::abs(cost(i, j)));
        art_cost_ = (max_cost + 1.0) * static_cast<double>(nodes + 1);
        eps_ = 1e-13 * (max_cost + 1e-300);

        // Initial strongly feasible tree: sources hang below the root via u -> root,
        // sinks via root -> u.
        for (Eigen::Index u = 0; u < nodes; ++u) {
            Eigen::Index e = real_arcs_ + u;
            auto su = static_cast<std::size_t>(u);
            in_tree_[static_cast<std::size_t>(e)] = 1;
            parent_[su] = root_;
            pred_[su] = e;
            depth_[su] = 1;
            adjacency_[su].push_back(e);
            adjacency_[static_cast<std::size_t>(root_)].push_back(e);
            if (u < n_) {
                pred_up_[su] = 1;
                flow_[static_cast<std::size_t>(e)] = supply(u);
                pi_[su] = 0.0;
            } else {
                pred_up_[su] = 0;
                flow_[static_cast<std::size_t>(e)] = demand(u - n_);
                pi_[su] = art_cost_;
            }
        }
        block_ = std::max<Eigen::Index>(10, static_cast<Eigen::Index>(std::sqrt(static_cast<double>(real_arcs_))));
        flat_cost_.resize(static_cast<std::size_t>(real_arcs_));
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < m_; ++j) flat_cost_[static_cast<std::size_t>(i * m_ + j)] = cost(i, j);
    }

    void solve() {
        const long long limit = 50LL * (real_arcs_ + n_ + m_) + 100000;
        long long pivots = 0;
        Eigen::Index in_arc;
        while ((in_arc = find_entering()) >= 0) {
            pivot(in_arc);
            if (++pivots > limit) throw NumericError("transport simplex exceeded its pivot limit");
        }
    }

    Eigen::MatrixXd coupling() const {
        Eigen::MatrixXd p(n_, m_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < m_; ++j) p(i, j) = std::max(0.0, flow_[static_cast<std::size_t>(i * m_ + j)]);
        return p;
    }

    Eigen::VectorXd source_potential() const {
        Eigen::VectorXd f(n_);
        for (Eigen::Index i = 0; i < n_; ++i) f(i) = -pi_[static_cast<std::size_t>(i)];
        return f;
    }

    Eigen::VectorXd target_potential() const {
        Eigen::VectorXd g(m_);
        for (Eigen::Index j = 0; j < m_; ++j) g(j) = pi_[static_cast<std::size_t>(n_ + j)];
        return g;
    }

private:
    Eigen::Index source(Eigen::Index e) const {
        if (e < real_arcs_) return e / m_;
        Eigen::Index u = e - real_arcs_;
        return u < n_ ? u : root_;
    }

    Eigen::Index target(Eigen::Index e) const {
        if (e < real_arcs_) return n_ + e % m_;
        Eigen::Index u = e - real_arcs_;
        return u < n_ ? root_ : u;
    }

    double arc_cost(Eigen::Index e) const {
        if (e < real_arcs_) return flat_cost_[static_cast<std::size_t>(e)];
        return (e - real_arcs_) < n_ ? 0.0 : art_cost_;
    }

    /// Block search: scans arcs cyclically and returns the most negative reduced cost of the
    /// first block that contains one. Tree arcs can round to a tiny negative reduced cost when the
    /// potentials are large, so they are excluded explicitly.
    Eigen::Index find_entering() {
        double best = -eps_;
        Eigen::Index best_arc = -1;
        Eigen::Index scanned = 0;
        Eigen::Index e = next_arc_;
        const double* pj = pi_.data() + n_;
        while (scanned < real_arcs_) {
            const Eigen::Index i = e / m_, j0 = e % m_;
            const Eigen::Index len = std::min(m_ - j0, block_ - scanned % block_);
            const double* c = flat_cost_.data() + e;
            const double pi = pi_[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < len; ++j) {
                double rc = c[j] + pi - pj[j0 + j];
                if (rc < best && !in_tree_[static_cast<std::size_t>(e + j)]) {
                    best = rc;
                    best_arc = e + j;
                }
            }
            e += len;
            if (e == real_arcs_) e = 0;
            scanned += len;
            if (scanned % block_ == 0 && best_arc >= 0) break;
        }
        next_arc_ = e;
        return best_arc;
    }

    void remove_adjacent(Eigen::Index u, Eigen::Index e) {
        auto& list = adjacency_[static_cast<std::size_t>(u)];
        auto it = std::find(list.begin(), list.end(), e);
        *it = list.back();
        list.pop_back();
    }

    void pivot(Eigen::Index in_arc) {
        const Eigen::Index first = source(in_arc);
        const Eigen::Index second = target(in_arc);

        Eigen::Index u = first, v = second;
        while (u != v) {
            if (depth_[static_cast<std::size_t>(u)] > depth_[static_cast<std::size_t>(v)])
                u = parent_[static_cast<std::size_t>(u)];
            else if (depth_[static_cast<std::size_t>(v)] > depth_[static_cast<std::size_t>(u)])
                v = parent_[static_cast<std::size_t>(v)];
            else {
                u = parent_[static_cast<std::size_t>(u)];
                v = parent_[static_cast<std::size_t>(v)];
            }
        }
        const Eigen::Index join = u;

        // Leaving arc: strict comparison on the first side, non-strict on the second.
        const double inf = std::numeric_limits<double>::infinity();
        double delta = inf;
        Eigen::Index u_out = -1;
        int side = 0;
        for (Eigen::Index w = first; w != join; w = parent_[static_cast<std::size_t>(w)]) {
            auto sw = static_cast<std::size_t>(w);
            double d = pred_up_[sw] ? flow_[static_cast<std::size_t>(pred_[sw])] : inf;
            if (d < delta) {
                delta = d;
                u_out = w;
                side = 1;
            }
        }
        for (Eigen::Index w = second; w != join; w = parent_[static_cast<std::size_t>(w)]) {
            auto sw = static_cast<std::size_t>(w);
            double d = pred_up_[sw] ? inf : flow_[static_cast<std::size_t>(pred_[sw])];
            if (d <= delta) {
                delta = d;
                u_out = w;
                side = 2;
            }
        }
        if (u_out < 0) throw NumericError("transport problem is unbounded");

        if (delta > 0.0) {
            flow_[static_cast<std::size_t>(in_arc)] += delta;
            for (Eigen::Index w = first; w != join; w = parent_[static_cast<std::size_t>(w)]) {
                auto sw = static_cast<std::size_t>(w);
                flow_[static_cast<std::size_t>(pred_[sw])] += pred_up_[sw] ? -delta : delta;
            }
            for (Eigen::Index w = second; w != join; w = parent_[static_cast<std::size_t>(w)]) {
                auto sw = static_cast<std::size_t>(w);
                flow_[static_cast<std::size_t>(pred_[sw])] += pred_up_[sw] ? delta : -delta;
            }
        }

        // Swap the leaving arc for the entering arc and re-hang the detached subtree.
        const Eigen::Index out_arc = pred_[static_cast<std::size_t>(u_out)];
        flow_[static_cast<std::size_t>(out_arc)] = 0.0;
        in_tree_[static_cast<std::size_t>(out_arc)] = 0;
        in_tree_[static_cast<std::size_t>(in_arc)] = 1;
        remove_adjacent(u_out, out_arc);
        remove_adjacent(parent_[static_cast<std::size_t>(u_out)], out_arc);
        adjacency_[static_cast<std::size_t>(first)].push_back(in_arc);
        adjacency_[static_cast<std::size_t>(second)].push_back(in_arc);

        const Eigen::Index inside = side == 1 ? first : second;
        const Eigen::Index outside = side == 1 ? second : first;
        rehang(inside, outside, in_arc);
    }

    void set_pred(Eigen::Index node, Eigen::Index par, Eigen::Index arc) {
        auto s = static_cast<std::size_t>(node);
        parent_[s] = par;
        pred_[s] = arc;
        pred_up_[s] = source(arc) == node ? 1 : 0;
        depth_[s] = depth_[static_cast<std::size_t>(par)] + 1;
        // Tree arcs have zero reduced cost: c + pi[source] - pi[target] = 0.
        if (pred_up_[s])
            pi_[s] = pi_[static_cast<std::size_t>(par)] - arc_cost(arc);
        else
            pi_[s] = pi_[static_cast<std::size_t>(par)] + arc_cost(arc);
    }

    void rehang(Eigen::Index start, Eigen::Index par, Eigen::Index arc) {
        stack_.clear();
        set_pred(start, par, arc);
        stack_.push_back(start);
        while (!stack_.empty()) {
            Eigen::Index u = stack_.back();
            stack_.pop_back();
            auto su = static_cast<std::size_t>(u);
            for (Eigen::Index e : adjacency_[su]) {
                if (e == pred_[su]) continue;
                Eigen::Index w = source(e) == u ? target(e) : source(e);
                set_pred(w, u, e);
                stack_.push_back(w);
            }
        }
    }

    Eigen::Index n_, m_;
    Eigen::Index root_ = 0, real_arcs_ = 0, block_ = 0, next_arc_ = 0;
    double art_cost_ = 0.0, eps_ = 0.0;
    std::vector<double> flow_;
    std::vector<double> flat_cost_;  // row-major, arc i * m + j
    std::vector<char> in_tree_;
    std::vector<Eigen::Index> parent_, pred_;
    std::vector<char> pred_up_;
    std::vector<Eigen::Index> depth_;
    std::vector<double> pi_;
    std::vector<std::vector<Eigen::Index>> adjacency_;
    std::vector<Eigen::Index> stack_;
};

/**
 * Rounds weights that sum to about 1 onto multiples of 2^-52 with a total of exactly 1. Every
 * flow the simplex then forms is exact in double precision, which the anti-cycling rule needs.
 */
inline Eigen::VectorXd quantize_unit_mass(const Eigen::VectorXd& w) {
    const double unit = std::ldexp(1.0, -52);
    Eigen::VectorXd q(w.size());
    double total = 0.0;  // exact: multiples of unit below 2
    Eigen::Index largest = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        q(i) = std::round(w(i) / unit) * unit;
        total += q(i);
        if (q(i) > q(largest)) largest = i;
    }
    q(largest) += 1.0 - total;
    return q;
}

inline Eigen::VectorXd normalized_weights(const Eigen::VectorXd& w, const char* which) {
    if (w.size() == 0) throw UsageError(std::string(which) + " cloud is empty");
    if ((w.array() < 0.0).any() || !w.allFinite())
        throw UsageError(std::string(which) + " weights must be finite and nonnegative");
    double s = w.sum();
    if (!(s > 0.0)) throw UsageError(std::string(which) + " weights sum to zero");
    return w / s;
}

}  // namespace detail

/// Weights below this (after normalization) are dropped before solving.
inline constexpr double kNegligibleWeight = 1e-12;

/**
 * Exact optimal transport between two normalized weight vectors for a given cost matrix.
 * Returns the plan, its cost and dual potentials.
 */
inline TransportPlan solve_transport(const Eigen::VectorXd& a_in, const Eigen::VectorXd& b_in,
                                     const Eigen::MatrixXd& cost) {
    if (cost.rows() != a_in.size() || cost.cols() != b_in.size())
        throw ShapeError("cost matrix shape does not match the weight vectors");
    Eigen::VectorXd a = detail::normalized_weights(a_in, "source");
    Eigen::VectorXd b = detail::normalized_weights(b_in, "target");

    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a(i) >= kNegligibleWeight) rows.push_back(i);
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b(j) >= kNegligibleWeight) cols.push_back(j);
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(cols.size());

    Eigen::VectorXd as(n), bs(m);
    Eigen::MatrixXd cs(n, m);
    for (Eigen::Index i = 0; i < n; ++i) as(i) = a(rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j) bs(j) = b(cols[static_cast<std::size_t>(j)]);
    as = detail::quantize_unit_mass(as / as.sum());
    bs = detail::quantize_unit_mass(bs / bs.sum());
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            cs(i, j) = cost(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);

    detail::TransportSimplex simplex(as, bs, cs);
    simplex.solve();
    Eigen::MatrixXd sub = simplex.coupling();
    Eigen::VectorXd f_sub = simplex.source_potential();
    Eigen::VectorXd g_sub = simplex.target_potential();

    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Zero(a.size(), b.size());
    plan.source_potential = Eigen::VectorXd::Constant(a.size(), std::numeric_limits<double>::infinity());
    plan.target_potential = Eigen::VectorXd::Constant(b.size(), std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < n; ++i) plan.source_potential(rows[static_cast<std::size_t>(i)]) = f_sub(i);
    for (Eigen::Index j = 0; j < m; ++j) plan.target_potential(cols[static_cast<std::size_t>(j)]) = g_sub(j);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            plan.coupling(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]) = sub(i, j);

    // Dropped points get c-transform potentials so the duals stay feasible.
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) >= kNegligibleWeight) continue;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j : cols) best = std::min(best, cost(i, j) - plan.target_potential(j));
        plan.source_potential(i) = best;
    }
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (b(j) >= kNegligibleWeight) continue;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i : rows) best = std::min(best, cost(i, j) - plan.source_potential(i));
        plan.target_potential(j) = best;
    }
    plan.cost = plan.coupling.cwiseProduct(cost).sum();
    return plan;
}

/// Exact W1 or W2 between two weighted clouds; the distance is the LP value (order 1) or its root (order 2).
inline WassersteinResult wasserstein(const WeightedCloud& p, const WeightedCloud& q, int order) {
    if (p.size() == 0 || q.size() == 0) throw UsageError("wasserstein: empty cloud");
    if (p.dim() != q.dim()) throw ShapeError("wasserstein: clouds have different dimensions");
    if (p.weights.size() != p.size() || q.weights.size() != q.size())
        throw ShapeError("wasserstein: weight count does not match point count");
    WassersteinResult r;
    r.plan = solve_transport(p.weights, q.weights, cost_matrix(p.points, q.points, order));
    r.distance = order == 2 ? std::sqrt(std::max(0.0, r.plan.cost)) : r.plan.cost;
    return r;
}

/// Pairs of points drawn i.i.d. with probability proportional to the coupling; columns of x0/x1.
struct PairBatch {
    Eigen::MatrixXd x0;
    Eigen::MatrixXd x1;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> indices;
};

inline PairBatch sample_pairs(const TransportPlan& plan, const WeightedCloud& source, const WeightedCloud& target,
                              std::size_t n, Rng& rng) {
    const Eigen::Index rows = plan.coupling.rows(), cols = plan.coupling.cols();
    if (rows != source.size() || cols != target.size()) throw ShapeError("plan does not match the clouds");
    std::vector<double> cdf;
    std::vector<Eigen::Index> cell;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            double v = plan.coupling(i, j);
            if (v > 0.0) {
                acc += v;
                cdf.push_back(acc);
                cell.push_back(i * cols + j);
            }
        }
    if (cdf.empty()) throw UsageError("cannot sample from an all-zero transport plan");

    PairBatch out;
    out.x0.resize(source.dim(), static_cast<Eigen::Index>(n));
    out.x1.resize(target.dim(), static_cast<Eigen::Index>(n));
    out.indices.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        Eigen::Index c = cell[static_cast<std::size_t>(it - cdf.begin())];
        Eigen::Index i = c / cols, j = c % cols;
        out.x0.col(static_cast<Eigen::Index>(k)) = source.points.col(i);
        out.x1.col(static_cast<Eigen::Index>(k)) = target.points.col(j);
        out.indices.emplace_back(i, j);
    }
    return out;
}

inline PairBatch sample_pairs(const TransportPlan& plan, const WeightedCloud& source, const WeightedCloud& target,
                              std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_pairs(plan, source, target, n, rng);
}

}  // namespace ruot
