#pragma once

#include <cmath>
#include <vector>

#include "ouperturb/fields.hpp"
#include "ouperturb/model.hpp"
#include "ouperturb/parallel.hpp"
#include "ouperturb/quadrature.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// Monte Carlo estimate with its standard error.
struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long n = 0;
};

namespace detail {

/// Quadrature frame for R_t phi(x): the integral over N(0, Q_t) collapses to
/// the cylinder subspace when phi is cylindrical. Points are lifted back to
/// full dimension through the direction matrix, so the same oracles serve
/// both paths.
struct RtFrame {
    int m = 0;        // effective integration dimension
    Mat lift;         // d x m, orthonormal columns (identity when full)
    Vec mean;         // m-dim mean: lift^T e^{tA} x
    Mat factor;       // m x m factor of the reduced covariance
    bool reduced = false;
};

inline RtFrame make_rt_frame(const OperatorModel& model, const ScalarField& phi, double t,
                             const Vec& x) {
    require(t >= 0.0, "apply_Rt: t must be nonnegative");
    require(x.size() == model.dim, "apply_Rt: dimension mismatch");
    RtFrame fr;
    const Vec etx = semigroup_apply(model, t, x);
    const Mat qt = covariance_matrix_at(model, t);
    if (phi.cylindrical) {
        fr.reduced = true;
        fr.m = static_cast<int>(phi.cylinder_dirs.size());
        fr.lift.resize(model.dim, fr.m);
        for (int i = 0; i < fr.m; ++i) fr.lift.col(i) = phi.cylinder_dirs[i];
        fr.mean = fr.lift.transpose() * etx;
        fr.factor = psd_factor(Mat(fr.lift.transpose() * qt * fr.lift));
    } else {
        fr.m = model.dim;
        fr.lift = Mat::Identity(model.dim, model.dim);
        fr.mean = etx;
        fr.factor = psd_factor(qt);
    }
    return fr;
}

inline constexpr int kMcBlock = 4096;

/// Deterministic blocked MC mean of fn over N(0, I_m) mapped through the
/// frame; the block reduction order is fixed, so results do not depend on the
/// worker count.
template <class Fn>
inline McEstimate mc_reduce(const RtFrame& fr, int count, std::uint64_t seed, Fn&& fn) {
    const int blocks = (count + kMcBlock - 1) / kMcBlock;
    std::vector<double> sum(blocks, 0.0), sumsq(blocks, 0.0);
    parallel_for_blocks(blocks, [&](int b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        const int lo = b * kMcBlock, hi = std::min(count, lo + kMcBlock);
        Vec z(fr.m), point(fr.mean.size());
        for (int i = lo; i < hi; ++i) {
            for (int k = 0; k < fr.m; ++k) z(k) = rng.normal();
            point = fr.mean + fr.factor * z;
            const double v = fn(point);
            sum[b] += v;
            sumsq[b] += v * v;
        }
    });
    double s1 = 0.0, s2 = 0.0;
    for (int b = 0; b < blocks; ++b) {
        s1 += sum[b];
        s2 += sumsq[b];
    }
    McEstimate est;
    est.n = count;
    est.value = s1 / count;
    const double var = std::max(0.0, (s2 - count * est.value * est.value) / (count - 1.0));
    est.std_error = std::sqrt(var / count);
    return est;
}

}  // namespace detail

/// R_t phi(x) = int phi(e^{tA}x + y) N_{Q_t}(dy) by tensor Gauss-Hermite over
/// the effective dimension. Tensor mode refuses more than 6 effective
/// dimensions; use Monte Carlo there.
inline double apply_Rt(const OperatorModel& model, const ScalarField& phi, double t,
                       const Vec& x, const QuadratureSpec& quad) {
    quad.validate();
    if (t == 0.0) return phi.value(x);
    const auto fr = detail::make_rt_frame(model, phi, t, x);
    require(quad.mode == QuadratureSpec::Mode::MonteCarlo || fr.m <= 6,
            "apply_Rt: tensor quadrature refuses effective dimension > 6; use mc mode");
    if (quad.mode == QuadratureSpec::Mode::MonteCarlo) {
        return detail::mc_reduce(fr, quad.mc_count, quad.seed,
                                 [&](const Vec& p) { return phi.value(fr.lift * p); })
            .value;
    }
    const auto rule = gauss_hermite(quad.nodes_per_dim);
    double acc = 0.0;
    for_each_tensor_node(rule, fr.m, [&](const Vec& z, double w) {
        acc += w * phi.value(fr.lift * (fr.mean + fr.factor * z));
    });
    return acc;
}

/// Monte Carlo R_t with a standard-error estimate.
inline McEstimate apply_Rt_mc(const OperatorModel& model, const ScalarField& phi, double t,
                              const Vec& x, const QuadratureSpec& quad) {
    quad.validate();
    if (t == 0.0) return {phi.value(x), 0.0, 0};
    const auto fr = detail::make_rt_frame(model, phi, t, x);
    return detail::mc_reduce(fr, quad.mc_count, quad.seed,
                             [&](const Vec& p) { return phi.value(fr.lift * p); });
}

/// DR_t phi(x) = int e^{tA^T} Dphi(e^{tA}x + y) N_{Q_t}(dy).
inline Vec apply_DRt(const OperatorModel& model, const ScalarField& phi, double t, const Vec& x,
                     const QuadratureSpec& quad) {
    quad.validate();
    require(phi.has_gradient(), "apply_DRt: phi must supply a gradient oracle");
    if (t == 0.0) return phi.gradient(x);
    const auto fr = detail::make_rt_frame(model, phi, t, x);
    require(quad.mode == QuadratureSpec::Mode::MonteCarlo || fr.m <= 6,
            "apply_DRt: tensor quadrature refuses effective dimension > 6; use mc mode");
    Vec acc = Vec::Zero(model.dim);
    if (quad.mode == QuadratureSpec::Mode::MonteCarlo) {
        const int blocks = (quad.mc_count + detail::kMcBlock - 1) / detail::kMcBlock;
        std::vector<Vec> bsum(blocks, Vec::Zero(model.dim));
        parallel_for_blocks(blocks, [&](int b) {
            Rng rng(derive_seed(quad.seed, static_cast<std::uint64_t>(b)));
            const int lo = b * detail::kMcBlock, hi = std::min(quad.mc_count, lo + detail::kMcBlock);
            Vec z(fr.m);
            for (int i = lo; i < hi; ++i) {
                for (int k = 0; k < fr.m; ++k) z(k) = rng.normal();
                bsum[b] += phi.gradient(fr.lift * (fr.mean + fr.factor * z));
            }
        });
        for (const auto& v : bsum) acc += v;
        acc /= static_cast<double>(quad.mc_count);
    } else {
        const auto rule = gauss_hermite(quad.nodes_per_dim);
        for_each_tensor_node(rule, fr.m, [&](const Vec& z, double w) {
            acc += w * phi.gradient(fr.lift * (fr.mean + fr.factor * z));
        });
    }
    return transition_matrix(model, t).transpose() * acc;
}

/// Generator in Kolmogorov form: L phi(x) = 1/2 tr(Q D^2 phi(x)) + <Ax, Dphi(x)>.
/// Falls back to a finite-difference Hessian only when asked.
inline double apply_L(const OperatorModel& model, const ScalarField& phi, const Vec& x,
                      bool fd_hessian = false, double fd_step = 1e-5) {
    require(phi.has_gradient(), "apply_L: phi must supply a gradient oracle");
    require(x.size() == model.dim, "apply_L: dimension mismatch");
    Mat hess;
    if (phi.has_hessian()) {
        hess = phi.hessian(x);
    } else {
        require(fd_hessian, "apply_L: phi has no Hessian oracle (pass fd_hessian=true to approximate)");
        hess.resize(model.dim, model.dim);
        Vec xp = x, xm = x;
        for (int k = 0; k < model.dim; ++k) {
            xp(k) = x(k) + fd_step;
            xm(k) = x(k) - fd_step;
            hess.col(k) = (phi.gradient(xp) - phi.gradient(xm)) / (2.0 * fd_step);
            xp(k) = x(k);
            xm(k) = x(k);
        }
        hess = 0.5 * (hess + hess.transpose());
    }
    return 0.5 * (model.q_matrix * hess).trace() + (model.a_matrix * x).dot(phi.gradient(x));
}

/// Difference-quotient generator (R_h phi - phi)/h with two Richardson
/// levels; agrees with apply_L to O(h^3).
inline double generator_quotient(const OperatorModel& model, const ScalarField& phi, const Vec& x,
                                 const QuadratureSpec& quad, double h = 0.02) {
    require(h > 0.0, "generator_quotient: h must be positive");
    const double phix = phi.value(x);
    auto q = [&](double hh) { return (apply_Rt(model, phi, hh, x, quad) - phix) / hh; };
    const double q1 = q(h), q2 = q(0.5 * h), q3 = q(0.25 * h);
    const double a1 = 2.0 * q2 - q1, a2 = 2.0 * q3 - q2;
    return (4.0 * a2 - a1) / 3.0;
}

/// Laplace-transform resolvent of L with its truncation-tail budget.
struct LaplaceValue {
    double value = 0.0;
    double tail_budget = 0.0;  // e^{-lambda T} ||phi|| / lambda
};

inline LaplaceValue resolvent_L_detail(const OperatorModel& model, const ScalarField& phi,
                                       double lambda, const Vec& x, const QuadratureSpec& quad) {
    quad.validate();
    require(lambda > std::max(model.omega, 0.0),
            "resolvent_L: lambda must exceed max(omega, 0)");
    const double tail_target = 1e-10 * std::max(phi.sup_norm, 1e-6);
    const auto rule =
        laplace_rule(lambda, quad.laplace_nodes, quad.laplace_tmax, tail_target);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i)
        acc += rule.w[i] * apply_Rt(model, phi, rule.t[i], x, quad);
    return {acc, rule.tail_factor * phi.sup_norm};
}

inline double resolvent_L(const OperatorModel& model, const ScalarField& phi, double lambda,
                          const Vec& x, const QuadratureSpec& quad) {
    return resolvent_L_detail(model, phi, lambda, x, quad).value;
}

/// DR(lambda, L) phi(x) by Laplace quadrature of apply_DRt.
inline Vec resolvent_DL(const OperatorModel& model, const ScalarField& phi, double lambda,
                        const Vec& x, const QuadratureSpec& quad) {
    quad.validate();
    require(lambda > std::max(model.omega, 0.0),
            "resolvent_DL: lambda must exceed max(omega, 0)");
    const double tail_target = 1e-10 * std::max(phi.sup_norm, 1e-6);
    const auto rule =
        laplace_rule(lambda, quad.laplace_nodes, quad.laplace_tmax, tail_target);
    Vec acc = Vec::Zero(model.dim);
    for (std::size_t i = 0; i < rule.size(); ++i)
        acc += rule.w[i] * apply_DRt(model, phi, rule.t[i], x, quad);
    return acc;
}

}  // namespace oup
