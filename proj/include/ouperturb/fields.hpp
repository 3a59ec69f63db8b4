#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ouperturb/sampling.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// sup_x |d/dx sech^2(x)| = 4/(3 sqrt 3), the Lipschitz constant of tanh'.
inline constexpr double kSechSqLipschitz = 0.76980035891950101935;

/// Test function phi with certified norm and modulus metadata. Moduli are
/// supplied bounds, never estimated from data, so inequality checks that
/// consume them stay sound.
struct ScalarField {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;     // empty when unavailable
    std::function<Mat(const Vec&)> hessian;      // empty when unavailable
    std::function<void(const Mat&, Vec&)> batch_value;  // rows = points; optional
    double sup_norm = 0.0;
    std::optional<double> grad_sup_norm;
    std::function<double(double)> grad_modulus;  // empty when unavailable
    bool cylindrical = false;
    std::vector<Vec> cylinder_dirs;  // orthonormal; may be empty (constant field)

    bool has_gradient() const { return static_cast<bool>(gradient); }
    bool has_hessian() const { return static_cast<bool>(hessian); }
    bool has_grad_modulus() const { return static_cast<bool>(grad_modulus); }
};

enum class BuiltinDrift { None, Zero, TanhComponentwise, SigmoidRankOne, SmoothBump };

/// Drift F with jacobian oracle and the exact constants of Hypothesis 1.1 (iv).
/// Builtin drifts carry a tag so hot loops can dispatch without std::function
/// overhead and so the flow-closure structure is known.
struct VectorField {
    int dim = 0;
    std::function<Vec(const Vec&)> value;
    std::function<Mat(const Vec&)> jacobian;
    double f_sup_norm = 0.0;
    double k_const = 0.0;
    std::function<double(double)> df_modulus;
    BuiltinDrift tag = BuiltinDrift::None;
    double scale = 0.0;
    double width = 1.0;  // smooth_bump only
    Vec v, w;            // rank-one and bump direction data
};

/// Devirtualized drift evaluation for integrator and SDE hot loops.
struct DriftEval {
    BuiltinDrift tag = BuiltinDrift::Zero;
    int dim = 0;
    double scale = 0.0;
    double two_width_sq = 2.0;
    Vec v, w;
    const std::function<Vec(const Vec&)>* fallback = nullptr;

    void eval(const Vec& x, Vec& out) const {
        switch (tag) {
            case BuiltinDrift::Zero:
                out.setZero();
                return;
            case BuiltinDrift::TanhComponentwise:
                for (int k = 0; k < dim; ++k) out(k) = scale * std::tanh(x(k));
                return;
            case BuiltinDrift::SigmoidRankOne: {
                const double s = scale * std::tanh(w.dot(x));
                for (int k = 0; k < dim; ++k) out(k) = s * v(k);
                return;
            }
            case BuiltinDrift::SmoothBump: {
                const double s = scale * std::exp(-x.squaredNorm() / two_width_sq);
                for (int k = 0; k < dim; ++k) out(k) = s * v(k);
                return;
            }
            case BuiltinDrift::None:
                out = (*fallback)(x);
                return;
        }
    }

    /// Row-wise evaluation for path-vectorized loops; out must be X-shaped.
    /// tanh goes through exp because Eigen's double tanh is scalar libm while
    /// its double exp is SIMD; 1 - 2/(e^{2x}+1) matches tanh to a few ulp and
    /// saturates to +-1 correctly when e^{2x} over- or underflows.
    void eval_rows(const Mat& X, Mat& out) const {
        switch (tag) {
            case BuiltinDrift::Zero:
                out.setZero();
                return;
            case BuiltinDrift::TanhComponentwise:
                out = scale * (1.0 - 2.0 / ((2.0 * X.array()).exp() + 1.0));
                return;
            case BuiltinDrift::SigmoidRankOne:
                out.noalias() =
                    (scale * (1.0 - 2.0 / ((2.0 * (X * w).array()).exp() + 1.0))).matrix() *
                    v.transpose();
                return;
            case BuiltinDrift::SmoothBump:
                out.noalias() =
                    (scale * (-X.rowwise().squaredNorm().array() / two_width_sq).exp())
                        .matrix() *
                    v.transpose();
                return;
            case BuiltinDrift::None: {
                Vec x(X.cols());
                for (Eigen::Index i = 0; i < X.rows(); ++i) {
                    x = X.row(i).transpose();
                    out.row(i) = (*fallback)(x).transpose();
                }
                return;
            }
        }
    }
};

inline DriftEval make_drift_eval(const VectorField& f) {
    DriftEval e;
    e.tag = f.tag;
    e.dim = f.dim;
    e.scale = f.scale;
    e.two_width_sq = 2.0 * (f.width * f.width);
    e.v = f.v;
    e.w = f.w;
    if (f.tag == BuiltinDrift::None) e.fallback = &f.value;
    return e;
}

/// phi(x) = g(<a_1,x>, ..., <a_m,x>) for orthonormal dirs a_i. The gradient
/// lives in span(dirs), which is what makes Gaussian integrals m-dimensional.
inline ScalarField make_cylindrical(std::function<double(const Vec&)> g,
                                    std::function<Vec(const Vec&)> dg,
                                    std::vector<Vec> dirs, double sup_norm,
                                    std::optional<double> grad_sup_norm = std::nullopt,
                                    std::function<double(double)> grad_modulus = {}) {
    require(static_cast<bool>(g), "make_cylindrical: g oracle required");
    const int m = static_cast<int>(dirs.size());
    for (int i = 0; i < m; ++i) {
        require(dirs[i].size() == dirs[0].size(), "make_cylindrical: mixed direction dimensions");
        for (int j = 0; j <= i; ++j) {
            const double gram = dirs[i].dot(dirs[j]);
            require(std::abs(gram - (i == j ? 1.0 : 0.0)) <= 1e-10,
                    "make_cylindrical: dirs must be orthonormal");
        }
    }
    ScalarField f;
    f.cylindrical = true;
    f.cylinder_dirs = dirs;
    f.sup_norm = sup_norm;
    f.grad_sup_norm = grad_sup_norm;
    f.grad_modulus = std::move(grad_modulus);
    auto project = [dirs, m](const Vec& x) {
        Vec s(m);
        for (int i = 0; i < m; ++i) s(i) = dirs[i].dot(x);
        return s;
    };
    f.value = [g = std::move(g), project](const Vec& x) { return g(project(x)); };
    if (dg) {
        f.gradient = [dg = std::move(dg), dirs, project, m](const Vec& x) {
            const Vec gs = dg(project(x));
            Vec out = Vec::Zero(dirs.empty() ? x.size() : dirs[0].size());
            for (int i = 0; i < m; ++i) out += gs(i) * dirs[i];
            return out;
        };
    }
    return f;
}

inline Vec unit_vector(int d, int k) {
    Vec e = Vec::Zero(d);
    e(k) = 1.0;
    return e;
}

/// cos(<a,x>) with exact metadata (|a|=1).
inline ScalarField phi_cos(const Vec& a) {
    ScalarField f = make_cylindrical([](const Vec& s) { return std::cos(s(0)); },
                                     [](const Vec& s) { return Vec::Constant(1, -std::sin(s(0))); },
                                     {a}, 1.0, 1.0,
                                     [](double r) { return std::min(2.0, r); });
    f.hessian = [a](const Vec& x) { return Mat(-std::cos(a.dot(x)) * a * a.transpose()); };
    f.batch_value = [a](const Mat& X, Vec& out) { out = (X * a).array().cos(); };
    return f;
}

inline ScalarField phi_sin(const Vec& a) {
    ScalarField f = make_cylindrical([](const Vec& s) { return std::sin(s(0)); },
                                     [](const Vec& s) { return Vec::Constant(1, std::cos(s(0))); },
                                     {a}, 1.0, 1.0,
                                     [](double r) { return std::min(2.0, r); });
    f.hessian = [a](const Vec& x) { return Mat(-std::sin(a.dot(x)) * a * a.transpose()); };
    f.batch_value = [a](const Mat& X, Vec& out) { out = (X * a).array().sin(); };
    return f;
}

/// Constant field c, cylindrical with m=0.
inline ScalarField phi_const(int d, double c) {
    ScalarField f = make_cylindrical([c](const Vec&) { return c; },
                                     [d](const Vec&) { return Vec::Zero(d); }, {},
                                     std::abs(c), 0.0, [](double) { return 0.0; });
    f.gradient = [d](const Vec&) { return Vec::Zero(d); };
    f.hessian = [d](const Vec&) { return Mat::Zero(d, d); };
    f.batch_value = [c](const Mat& X, Vec& out) { out.setConstant(X.rows(), c); };
    return f;
}

/// Row-wise field evaluation: the batch oracle when present, else a loop.
inline void eval_field_rows(const ScalarField& f, const Mat& X, Vec& out) {
    out.resize(X.rows());
    if (f.batch_value) {
        f.batch_value(X, out);
        return;
    }
    Vec x(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        x = X.row(i).transpose();
        out(i) = f.value(x);
    }
}

/// Drift families with exact constants. Names: zero, tanh_componentwise,
/// scaled_sigmoid_rank_one, smooth_bump.
inline VectorField builtin_field(const std::string& name, int dim, double scale = 1.0,
                                 Vec v = Vec(), Vec w = Vec(), double width = 1.0) {
    require(dim >= 1, "builtin_field: dim must be >= 1");
    VectorField f;
    f.dim = dim;
    f.scale = scale;
    if (name == "zero") {
        f.tag = BuiltinDrift::Zero;
        f.value = [dim](const Vec&) { return Vec::Zero(dim); };
        f.jacobian = [dim](const Vec&) { return Mat::Zero(dim, dim); };
        f.f_sup_norm = 0.0;
        f.k_const = 0.0;
        f.df_modulus = [](double) { return 0.0; };
        return f;
    }
    if (name == "tanh_componentwise") {
        require(scale >= 0.0, "builtin_field: scale must be nonnegative");
        f.tag = BuiltinDrift::TanhComponentwise;
        f.value = [dim, scale](const Vec& x) {
            Vec y(dim);
            for (int k = 0; k < dim; ++k) y(k) = scale * std::tanh(x(k));
            return y;
        };
        f.jacobian = [dim, scale](const Vec& x) {
            Mat j = Mat::Zero(dim, dim);
            for (int k = 0; k < dim; ++k) {
                const double t = std::tanh(x(k));
                j(k, k) = scale * (1.0 - t * t);
            }
            return j;
        };
        f.f_sup_norm = scale * std::sqrt(static_cast<double>(dim));
        f.k_const = scale;
        f.df_modulus = [scale](double r) { return scale * std::min(1.0, kSechSqLipschitz * r); };
        return f;
    }
    if (name == "scaled_sigmoid_rank_one") {
        require(v.size() == dim && w.size() == dim, "builtin_field: rank-one drift needs v and w");
        require(std::abs(v.norm() - 1.0) <= 1e-10 && std::abs(w.norm() - 1.0) <= 1e-10,
                "builtin_field: v and w must be unit vectors");
        f.tag = BuiltinDrift::SigmoidRankOne;
        f.v = v;
        f.w = w;
        f.value = [v, w, scale](const Vec& x) { return Vec(scale * std::tanh(w.dot(x)) * v); };
        f.jacobian = [v, w, scale](const Vec& x) {
            const double t = std::tanh(w.dot(x));
            return Mat(scale * (1.0 - t * t) * v * w.transpose());
        };
        f.f_sup_norm = scale;
        f.k_const = scale;
        f.df_modulus = [scale](double r) { return scale * std::min(1.0, kSechSqLipschitz * r); };
        return f;
    }
    if (name == "smooth_bump") {
        require(v.size() == dim, "builtin_field: smooth_bump needs a direction v");
        require(std::abs(v.norm() - 1.0) <= 1e-10, "builtin_field: v must be a unit vector");
        require(width > 0.0, "builtin_field: width must be positive");
        f.tag = BuiltinDrift::SmoothBump;
        f.v = v;
        f.width = width;
        const double s2 = width * width;
        f.value = [v, scale, s2](const Vec& x) {
            return Vec(scale * std::exp(-x.squaredNorm() / (2.0 * s2)) * v);
        };
        f.jacobian = [v, scale, s2](const Vec& x) {
            const double e = std::exp(-x.squaredNorm() / (2.0 * s2));
            return Mat(-(scale / s2) * e * v * x.transpose());
        };
        f.f_sup_norm = scale;
        f.k_const = (scale / width) * std::exp(-0.5);
        const double cap = 2.0 * f.k_const;
        f.df_modulus = [scale, s2, cap](double r) { return std::min(cap, (scale / s2) * r); };
        return f;
    }
    throw InvalidArgument("builtin_field: unknown name '" + name + "'");
}

/// Directions spanning a subspace V with span(dirs) <= V such that the drift
/// flow maps functions cylindrical on V to functions cylindrical on V. Only
/// builtin structure is used; smooth_bump and custom drifts return the full
/// coordinate basis.
inline std::vector<Vec> flow_closure(const VectorField& f, const std::vector<Vec>& dirs) {
    const int d = f.dim;
    auto full_basis = [d] {
        std::vector<Vec> b;
        for (int k = 0; k < d; ++k) b.push_back(unit_vector(d, k));
        return b;
    };
    switch (f.tag) {
        case BuiltinDrift::Zero:
            return dirs;
        case BuiltinDrift::TanhComponentwise: {
            // coordinates evolve independently, so close over touched coords
            std::vector<bool> touched(d, false);
            for (const auto& a : dirs)
                for (int k = 0; k < d; ++k)
                    if (a(k) != 0.0) touched[k] = true;
            std::vector<Vec> out;
            for (int k = 0; k < d; ++k)
                if (touched[k]) out.push_back(unit_vector(d, k));
            return out;
        }
        case BuiltinDrift::SigmoidRankOne: {
            // eta(t,x) = x + psi(t,<w,x>) v, so adjoin v and w
            std::vector<Vec> out = dirs;
            out.push_back(f.w);
            out.push_back(f.v);
            return out;
        }
        case BuiltinDrift::SmoothBump:
        case BuiltinDrift::None:
            return full_basis();
    }
    return full_basis();
}

/// Central finite-difference gradient of a scalar field.
inline Vec fd_gradient(const ScalarField& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (int k = 0; k < x.size(); ++k) {
        xp(k) = x(k) + h;
        xm(k) = x(k) - h;
        g(k) = (f.value(xp) - f.value(xm)) / (2.0 * h);
        xp(k) = x(k);
        xm(k) = x(k);
    }
    return g;
}

/// Empirical sup distance max_i |f1(x_i) - f2(x_i)| over the sampler's
/// low-discrepancy ball points. Nested samplers make this nondecreasing in n.
inline double estimate_sup_distance(const ScalarField& f1, const ScalarField& f2,
                                    const SupSampler& sampler, int dim) {
    const auto pts = sample_ball(sampler, dim);
    double worst = 0.0;
    for (const auto& x : pts) worst = std::max(worst, std::abs(f1.value(x) - f2.value(x)));
    return worst;
}

}  // namespace oup
