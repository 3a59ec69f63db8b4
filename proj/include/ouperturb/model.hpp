#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "ouperturb/quadrature.hpp"
#include "ouperturb/rng.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// Finite-dimensional truncation of the OU data (A, Q) with growth type
/// omega: ||e^{tA}|| <= e^{omega t}. Diagonal A and Q get closed-form paths.
struct OperatorModel {
    int dim = 0;
    Mat a_matrix;
    Mat q_matrix;
    double omega = 0.0;
    bool diagonal = false;
    Vec a_diag;  // cached when diagonal
    Vec q_diag;
};

/// Centered Gaussian N(0, covariance) with a cached factor for sampling.
struct GaussianLaw {
    Vec mean;
    Mat covariance;
    Mat factor;  // factor * factor^T == covariance
};

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// [-1e-12, 0] are clipped to zero; anything lower is rejected.
inline Mat psd_factor(const Mat& cov) {
    require(cov.rows() == cov.cols(), "psd_factor: matrix must be square");
    if (cov.size() == 0) return cov;
    require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()),
            "psd_factor: matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    Vec ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        require(ev(i) >= -1e-12, "psd_factor: matrix has a negative eigenvalue");
        if (ev(i) < 0.0) ev(i) = 0.0;
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

inline GaussianLaw gaussian_law(const Mat& cov) {
    GaussianLaw law;
    law.mean = Vec::Zero(cov.rows());
    law.covariance = cov;
    law.factor = psd_factor(cov);
    return law;
}

/// e^{tA} as a matrix; closed form on the diagonal path.
inline Mat transition_matrix(const OperatorModel& m, double t) {
    require(t >= 0.0, "transition_matrix: t must be nonnegative");
    if (m.diagonal) {
        Mat e = Mat::Zero(m.dim, m.dim);
        for (int k = 0; k < m.dim; ++k) e(k, k) = std::exp(m.a_diag(k) * t);
        return e;
    }
    return (t * m.a_matrix).exp();
}

inline Vec semigroup_apply(const OperatorModel& m, double t, const Vec& x) {
    require(t >= 0.0, "semigroup_apply: t must be nonnegative");
    require(x.size() == m.dim, "semigroup_apply: dimension mismatch");
    if (m.diagonal) {
        Vec y(m.dim);
        for (int k = 0; k < m.dim; ++k) y(k) = std::exp(m.a_diag(k) * t) * x(k);
        return y;
    }
    return transition_matrix(m, t) * x;
}

namespace detail {
inline bool is_diagonal(const Mat& M) {
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j)
            if (i != j && M(i, j) != 0.0) return false;
    return true;
}
}  // namespace detail

/// Validates (A, Q, omega) and caches the diagonal fast path. If omega is not
/// supplied it is set to the numerical abscissa of A, the least rate with
/// ||e^{tA}|| <= e^{omega t} for all t >= 0. Either way the bound is verified
/// on a time grid.
inline OperatorModel build_model(int dim, const Mat& a_matrix, const Mat& q_matrix,
                                 std::optional<double> omega = std::nullopt) {
    require(dim >= 1, "build_model: dim must be >= 1");
    require(a_matrix.rows() == dim && a_matrix.cols() == dim, "build_model: A must be dim x dim");
    require(q_matrix.rows() == dim && q_matrix.cols() == dim, "build_model: Q must be dim x dim");
    const double q_scale = 1.0 + q_matrix.cwiseAbs().maxCoeff();
    require((q_matrix - q_matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * q_scale,
            "build_model: Q must be symmetric");
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(q_matrix);
        require(es.eigenvalues().minCoeff() >= -1e-12, "build_model: Q must be positive semidefinite");
    }

    OperatorModel m;
    m.dim = dim;
    m.a_matrix = a_matrix;
    m.q_matrix = q_matrix;
    m.diagonal = detail::is_diagonal(a_matrix) && detail::is_diagonal(q_matrix);
    if (m.diagonal) {
        m.a_diag = a_matrix.diagonal();
        m.q_diag = q_matrix.diagonal();
    }

    if (omega) {
        m.omega = *omega;
    } else if (m.diagonal) {
        m.omega = m.a_diag.maxCoeff();
    } else {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a_matrix + a_matrix.transpose()));
        m.omega = es.eigenvalues().maxCoeff();
    }

    for (int i = 1; i <= 8; ++i) {
        const double t = 0.25 * i;
        const double growth = operator_norm(transition_matrix(m, t));
        require(growth <= std::exp(m.omega * t) * (1.0 + 1e-9),
                "build_model: omega is below the verified growth rate of e^{tA}");
    }
    return m;
}

/// Q_t = int_0^t e^{sA} Q e^{sA^T} ds. Diagonal models use the closed form
/// q_k expm1(2 a_k t)/(2 a_k); dense models use composite Gauss-Legendre with
/// node count doubling until the Frobenius change drops below 1e-10.
inline Mat covariance_matrix_at(const OperatorModel& m, double t) {
    require(t >= 0.0, "covariance_at: t must be nonnegative");
    if (t == 0.0) return Mat::Zero(m.dim, m.dim);
    if (m.diagonal) {
        Mat qt = Mat::Zero(m.dim, m.dim);
        for (int k = 0; k < m.dim; ++k) {
            const double a = m.a_diag(k);
            qt(k, k) = m.q_diag(k) * (a == 0.0 ? t : std::expm1(2.0 * a * t) / (2.0 * a));
        }
        return qt;
    }
    const int panels = static_cast<int>(std::ceil(t));
    const double h = t / panels;
    Mat prev;
    for (int nodes = 32; nodes <= 1024; nodes *= 2) {
        Mat qt = Mat::Zero(m.dim, m.dim);
        for (int p = 0; p < panels; ++p) {
            const auto rule = gauss_legendre(nodes, p * h, (p + 1) * h);
            for (std::size_t i = 0; i < rule.size(); ++i) {
                const Mat e = transition_matrix(m, rule.nodes[i]);
                qt += rule.weights[i] * e * m.q_matrix * e.transpose();
            }
        }
        qt = 0.5 * (qt + qt.transpose());
        if (prev.size() != 0 && (qt - prev).norm() < 1e-10) return qt;
        prev = qt;
    }
    throw ConvergenceError("covariance_at: quadrature did not stabilize");
}

inline GaussianLaw covariance_at(const OperatorModel& m, double t) {
    return gaussian_law(covariance_matrix_at(m, t));
}

/// int_0^t e^{sA} ds. Diagonal models use expm1(a_k t)/a_k, which stays
/// accurate for |a_k| t near zero where e^{a_k t} - 1 would cancel; dense
/// models reuse the node-doubling Gauss-Legendre scheme of covariance_at.
inline Mat integrated_transition(const OperatorModel& m, double t) {
    require(t >= 0.0, "integrated_transition: t must be nonnegative");
    if (t == 0.0) return Mat::Zero(m.dim, m.dim);
    if (m.diagonal) {
        Mat r = Mat::Zero(m.dim, m.dim);
        for (int k = 0; k < m.dim; ++k) {
            const double a = m.a_diag(k);
            r(k, k) = a == 0.0 ? t : std::expm1(a * t) / a;
        }
        return r;
    }
    const int panels = static_cast<int>(std::ceil(t));
    const double h = t / panels;
    Mat prev;
    for (int nodes = 32; nodes <= 1024; nodes *= 2) {
        Mat r = Mat::Zero(m.dim, m.dim);
        for (int p = 0; p < panels; ++p) {
            const auto rule = gauss_legendre(nodes, p * h, (p + 1) * h);
            for (std::size_t i = 0; i < rule.size(); ++i)
                r += rule.weights[i] * transition_matrix(m, rule.nodes[i]);
        }
        if (prev.size() != 0 && (r - prev).norm() < 1e-10) return r;
        prev = r;
    }
    throw ConvergenceError("integrated_transition: quadrature did not stabilize");
}

/// n independent draws from the law, deterministic in the seed.
inline std::vector<Vec> sample_gaussian(const GaussianLaw& law, int n, std::uint64_t seed) {
    require(n >= 1, "sample_gaussian: n must be >= 1");
    const int d = static_cast<int>(law.mean.size());
    Rng rng(seed);
    std::vector<Vec> out;
    out.reserve(n);
    Vec z(d);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) z(k) = rng.normal();
        out.push_back(law.mean + law.factor * z);
    }
    return out;
}

}  // namespace oup
