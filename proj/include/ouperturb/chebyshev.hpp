#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ouperturb/types.hpp"

namespace oup {

/// Chebyshev-Lobatto nodes on [lo, hi] in ascending order with the standard
/// barycentric weights (-1)^j, halved at the endpoints. n is the polynomial
/// degree, so there are n+1 nodes.
struct ChebAxis {
    double lo = -1.0;
    double hi = 1.0;
    Vec nodes;
    Vec bary_w;
};

inline ChebAxis cheb_axis(int degree, double lo, double hi) {
    require(degree >= 1, "cheb_axis: degree must be >= 1");
    require(hi > lo, "cheb_axis: need hi > lo");
    ChebAxis ax;
    ax.lo = lo;
    ax.hi = hi;
    ax.nodes.resize(degree + 1);
    ax.bary_w.resize(degree + 1);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (int j = 0; j <= degree; ++j) {
        // ascending: z_j = -cos(pi j / n), endpoints exact
        const double z = -std::cos(M_PI * j / degree);
        ax.nodes(j) = mid + half * z;
        ax.bary_w(j) = (j % 2 == 0 ? 1.0 : -1.0);
    }
    ax.nodes(0) = lo;
    ax.nodes(degree) = hi;
    ax.bary_w(0) *= 0.5;
    ax.bary_w(degree) *= 0.5;
    return ax;
}

/// Projection of Lobatto grid values onto the span of Chebyshev polynomials
/// of degree <= cut: analyze by the type-I discrete cosine transform, zero
/// the coefficients above cut, synthesize back. Acts as the identity on
/// values sampled from any polynomial of degree <= cut.
inline Mat cheb_truncation(int degree, int cut) {
    require(degree >= 1, "cheb_truncation: degree must be >= 1");
    require(cut >= 0 && cut <= degree, "cheb_truncation: need 0 <= cut <= degree");
    const int n = degree;
    Mat synth(n + 1, cut + 1);
    Mat anal(cut + 1, n + 1);
    for (int k = 0; k <= cut; ++k) {
        const double dk = (k == 0 || k == n) ? n : n / 2.0;
        for (int j = 0; j <= n; ++j) {
            const double c = std::cos(M_PI * j * k / n);
            synth(j, k) = c;
            anal(k, j) = ((j == 0 || j == n) ? 0.5 : 1.0) * c / dk;
        }
    }
    return synth * anal;
}

/// Piecewise tensor-product Chebyshev interpolant: each axis is a list of
/// contiguous panels, each panel its own Lobatto grid. A query point uses only
/// the panel that contains it, so a disturbance in one panel's values never
/// bleeds into evaluations inside another panel; that locality is why solvers
/// put buffer panels between a region that must be accurate and a boundary
/// where the discretized equations degrade. Query points outside the overall
/// range are clamped coordinate-wise, so evaluation is total. An interface
/// coordinate belongs to the panel on its left.
class ChebInterp {
public:
    explicit ChebInterp(std::vector<ChebAxis> axes) {
        std::vector<std::vector<ChebAxis>> p;
        p.reserve(axes.size());
        for (auto& ax : axes) p.push_back({std::move(ax)});
        init(std::move(p));
    }
    explicit ChebInterp(std::vector<std::vector<ChebAxis>> panels) { init(std::move(panels)); }

    int dim() const { return static_cast<int>(panels_.size()); }
    std::int64_t size() const { return total_; }
    const std::vector<std::vector<ChebAxis>>& panels() const { return panels_; }
    int axis_size(int k) const { return static_cast<int>(nodes_[k].size()); }
    double lo(int k) const { return panels_[k].front().lo; }
    double hi(int k) const { return panels_[k].back().hi; }

    /// Grid point for a flat index (row-major over the axes). Along an axis the
    /// nodes are the panel grids concatenated left to right, so an interface
    /// coordinate appears twice.
    Vec point(std::int64_t idx) const {
        Vec p(dim());
        for (int k = 0; k < dim(); ++k) {
            const auto n = nodes_[k].size();
            p(k) = nodes_[k][static_cast<std::size_t>((idx / stride_[k]) % n)];
        }
        return p;
    }

    bool inside(const Vec& s) const {
        for (int k = 0; k < dim(); ++k)
            if (s(k) < lo(k) || s(k) > hi(k)) return false;
        return true;
    }

    /// Interpolant value at s (clamped) given grid values in flat-index order.
    double eval(const Vec& s, const Vec& values) const {
        require(values.size() == total_, "ChebInterp: values size mismatch");
        prepare(s);
        double acc = 0.0;
        walk(0, 0, 1.0, [&](std::int64_t idx, double wgt) { acc += wgt * values(idx); });
        return acc;
    }

    /// Writes the weight row c with eval(s, v) = sum_i c_i v_i for every v.
    /// The weights sum to 1.
    void basis_row(const Vec& s, Vec& row) const {
        row = Vec::Zero(total_);
        prepare(s);
        walk(0, 0, 1.0, [&](std::int64_t idx, double wgt) { row(idx) += wgt; });
    }

    /// Accumulates scale * basis_row(s) into row without zeroing it first.
    void accumulate_row(const Vec& s, double scale, Vec& row) const {
        prepare(s);
        walk(0, 0, scale, [&](std::int64_t idx, double wgt) { row(idx) += wgt; });
    }

    /// Per-axis normalized weight vectors at s (clamped); the tensor weight of
    /// node (j_1,...,j_m) is the product of the u[k](j_k). Lets callers fuse the
    /// rank-one structure into vectorized updates. Entries outside the panel
    /// containing s are zero.
    void axis_weights(const Vec& s, std::vector<Vec>& u) const {
        prepare(s);
        u.resize(panels_.size());
        for (std::size_t k = 0; k < panels_.size(); ++k) {
            const auto& w = wk_[k];
            u[k].resize(static_cast<Eigen::Index>(w.size()));
            for (std::size_t j = 0; j < w.size(); ++j) u[k](static_cast<Eigen::Index>(j)) = w[j];
        }
    }

private:
    std::vector<std::vector<ChebAxis>> panels_;
    std::vector<std::vector<double>> nodes_;     // per-axis concatenated panel nodes
    std::vector<std::vector<int>> offset_;       // per-axis start of each panel
    std::vector<std::int64_t> stride_;
    std::int64_t total_ = 1;
    // scratch for the per-axis 1-D weight vectors; reused across calls
    mutable std::vector<std::vector<double>> wk_;

    void init(std::vector<std::vector<ChebAxis>> panels) {
        panels_ = std::move(panels);
        require(!panels_.empty(), "ChebInterp: at least one axis required");
        nodes_.resize(panels_.size());
        offset_.resize(panels_.size());
        for (std::size_t k = 0; k < panels_.size(); ++k) {
            const auto& ps = panels_[k];
            require(!ps.empty(), "ChebInterp: axis needs at least one panel");
            for (std::size_t p = 0; p + 1 < ps.size(); ++p)
                require(ps[p + 1].lo == ps[p].hi,
                        "ChebInterp: panels must be contiguous and ascending");
            for (const auto& ax : ps) {
                offset_[k].push_back(static_cast<int>(nodes_[k].size()));
                for (Eigen::Index j = 0; j < ax.nodes.size(); ++j)
                    nodes_[k].push_back(ax.nodes(j));
            }
        }
        stride_.resize(panels_.size());
        total_ = 1;
        for (int k = static_cast<int>(panels_.size()) - 1; k >= 0; --k) {
            stride_[k] = total_;
            total_ *= static_cast<std::int64_t>(nodes_[k].size());
        }
    }

    void prepare(const Vec& s) const {
        require(s.size() == dim(), "ChebInterp: point dimension mismatch");
        wk_.resize(panels_.size());
        for (int k = 0; k < dim(); ++k) {
            const auto& ps = panels_[k];
            auto& u = wk_[k];
            u.assign(nodes_[k].size(), 0.0);
            const double x = std::min(std::max(s(k), lo(k)), hi(k));
            std::size_t p = 0;
            while (p + 1 < ps.size() && x > ps[p].hi) ++p;
            const ChebAxis& ax = ps[p];
            const int base = offset_[k][p];
            const int n = static_cast<int>(ax.nodes.size());
            int hit = -1;
            for (int j = 0; j < n; ++j) {
                if (x == ax.nodes(j)) {
                    hit = j;
                    break;
                }
            }
            if (hit >= 0) {
                u[base + hit] = 1.0;
                continue;
            }
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                u[base + j] = ax.bary_w(j) / (x - ax.nodes(j));
                sum += u[base + j];
            }
            for (int j = 0; j < n; ++j) u[base + j] /= sum;
        }
    }

    template <class Fn>
    void walk(int k, std::int64_t base, double wgt, Fn&& fn) const {
        if (wgt == 0.0) return;
        if (k == dim()) {
            fn(base, wgt);
            return;
        }
        const auto& u = wk_[k];
        for (int j = 0; j < static_cast<int>(u.size()); ++j) {
            if (u[j] == 0.0) continue;
            walk(k + 1, base + j * stride_[k], wgt * u[j], fn);
        }
    }
};

}  // namespace oup
