#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

#include "ouperturb/types.hpp"

namespace oup {

/// One-dimensional quadrature rule: nodes and weights.
struct QuadRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

namespace detail {
/// Golub-Welsch: nodes/weights from the symmetric Jacobi matrix of the
/// orthogonal polynomial family.
inline QuadRule golub_welsch(const Vec& diag, const Vec& subdiag, double total_mass) {
    Eigen::SelfAdjointEigenSolver<Mat> es;
    es.computeFromTridiagonal(diag, subdiag, Eigen::ComputeEigenvectors);
    const int n = static_cast<int>(diag.size());
    QuadRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        r.weights[i] = total_mass * v0 * v0;
    }
    return r;
}
/// Eigensolves are costly relative to rule application, so reference rules
/// are memoized per node count.
template <class Maker>
inline QuadRule cached_rule(int n, std::map<int, QuadRule>& cache, std::mutex& mu, Maker&& mk) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, mk(n)).first;
    return it->second;
}

}  // namespace detail

/// Gauss-Legendre rule on [a, b].
inline QuadRule gauss_legendre(int n, double a, double b) {
    require(n >= 1, "gauss_legendre: need n >= 1");
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    QuadRule r = detail::cached_rule(n, cache, mu, [](int nn) {
        Vec diag = Vec::Zero(nn), sub(std::max(nn - 1, 0));
        for (int k = 1; k < nn; ++k)
            sub(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
        return detail::golub_welsch(diag, sub, 2.0);
    });
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r.nodes[i] = mid + half * r.nodes[i];
        r.weights[i] *= half;
    }
    return r;
}

/// Probabilists' Gauss-Hermite rule: integrates f against N(0,1) exactly for
/// polynomials up to degree 2n-1. Weights sum to 1.
inline QuadRule gauss_hermite(int n) {
    require(n >= 1, "gauss_hermite: need n >= 1");
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    return detail::cached_rule(n, cache, mu, [](int nn) {
        Vec diag = Vec::Zero(nn), sub(std::max(nn - 1, 0));
        for (int k = 1; k < nn; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
        return detail::golub_welsch(diag, sub, 1.0);
    });
}

/// How Gaussian expectations and Laplace transforms are discretized.
struct QuadratureSpec {
    enum class Mode { Tensor, MonteCarlo };
    Mode mode = Mode::Tensor;
    int nodes_per_dim = 64;  // tensor Gauss-Hermite nodes per effective dimension
    int mc_count = 10000;
    std::uint64_t seed = 0;
    double laplace_tmax = 0.0;  // 0 = choose from the tail target
    int laplace_nodes = 128;

    void validate() const {
        require(nodes_per_dim >= 2, "QuadratureSpec: nodes_per_dim must be >= 2");
        require(mc_count >= 100, "QuadratureSpec: mc_count must be >= 100");
        require(laplace_tmax >= 0.0, "QuadratureSpec: laplace_tmax must be > 0 (or 0 = auto)");
        require(laplace_nodes >= 2, "QuadratureSpec: laplace_nodes must be >= 2");
    }
};

/// Discretization of int_0^inf e^{-mu t} G(t) dt for bounded G. Substituting
/// u = e^{-mu t} makes the dominant exponential exact; Gauss-Legendre in u
/// handles the remaining smooth factor. A single panel in u resolves t ~ 1/mu
/// well but starves the far end (t of order 1 maps into a sliver near u = 0),
/// so the rule is composite: panels uniform in t, each spanning about three
/// e-folds of the kernel, with the u-substitution applied per panel. The
/// omitted tail above t_max is bounded by tail_factor * sup|G|.
struct LaplaceRule {
    std::vector<double> t;
    std::vector<double> w;       // weights including the 1/mu Jacobian
    double tail_factor = 0.0;    // e^{-mu T} / mu
    double t_max = 0.0;
    std::size_t size() const { return t.size(); }
};

/// tail_abs bounds the omitted tail e^{-mu T}/mu when t_max is left automatic.
inline LaplaceRule laplace_rule(double mu, int nodes, double t_max = 0.0,
                                double tail_abs = 1e-10) {
    require(mu > 0.0, "laplace_rule: decay rate must be positive");
    double T = t_max;
    if (T <= 0.0) {
        const double u_target = std::min(mu * tail_abs, std::exp(-1.0));
        T = -std::log(u_target) / mu;
    }
    const int panels =
        std::max(1, std::min(24, static_cast<int>(std::ceil(mu * T / 3.0))));
    const int per_panel = std::max(8, (nodes + panels - 1) / panels);
    LaplaceRule r;
    r.t.reserve(static_cast<std::size_t>(panels) * per_panel);
    r.w.reserve(static_cast<std::size_t>(panels) * per_panel);
    for (int k = 0; k < panels; ++k) {
        const double u_lo = std::exp(-mu * T * (k + 1) / panels);
        const double u_hi = std::exp(-mu * T * k / panels);
        QuadRule gl = gauss_legendre(per_panel, u_lo, u_hi);
        for (std::size_t i = 0; i < gl.size(); ++i) {
            r.t.push_back(-std::log(gl.nodes[i]) / mu);
            r.w.push_back(gl.weights[i] / mu);
        }
    }
    r.tail_factor = std::exp(-mu * T) / mu;
    r.t_max = T;
    return r;
}

/// Multi-index iteration over a tensor product of m copies of a 1-D rule.
/// Calls fn(node_vector, weight) for every tensor node.
template <class Fn>
inline void for_each_tensor_node(const QuadRule& rule, int m, Fn&& fn) {
    if (m == 0) {
        Vec empty(0);
        fn(empty, 1.0);
        return;
    }
    std::vector<std::size_t> idx(m, 0);
    Vec node(m);
    while (true) {
        double w = 1.0;
        for (int k = 0; k < m; ++k) {
            node(k) = rule.nodes[idx[k]];
            w *= rule.weights[idx[k]];
        }
        fn(node, w);
        int k = 0;
        while (k < m && ++idx[k] == rule.size()) {
            idx[k] = 0;
            ++k;
        }
        if (k == m) break;
    }
}

}  // namespace oup
