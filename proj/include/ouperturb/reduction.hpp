#pragma once

#include <Eigen/QR>
#include <utility>
#include <vector>

#include "ouperturb/fields.hpp"
#include "ouperturb/model.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// Orthonormal basis of a subspace V that is closed under the drift flow and
/// invariant under A^T. On such a V the whole resolvent problem restricts
/// exactly: P^T eta(t,x) = eta_V(t, P^T x), P^T e^{tA} x = e^{tA_V} P^T x and
/// P^T Q_t P = Q_t^V, so cylindrical data never leaves V.
struct ReducedSpace {
    int full_dim = 0;
    int m = 0;
    Mat basis;  // full_dim x m, orthonormal columns
    bool is_full = false;

    Vec restrict_point(const Vec& x) const { return basis.transpose() * x; }
    Vec lift_point(const Vec& s) const { return basis * s; }
};

namespace detail {

/// Span of the columns as an orthonormal basis, rank cut at a relative
/// threshold. Returns an empty matrix for a zero stack.
inline Mat orthonormal_span(const Mat& stack, double rel_tol = 1e-10) {
    if (stack.cols() == 0) return Mat(stack.rows(), 0);
    Eigen::ColPivHouseholderQR<Mat> qr(stack);
    const Mat& r = qr.matrixR();
    const double top = std::abs(r(0, 0));
    if (top == 0.0) return Mat(stack.rows(), 0);
    int rank = 0;
    const int kmax = static_cast<int>(std::min(stack.rows(), stack.cols()));
    for (int k = 0; k < kmax; ++k)
        if (std::abs(r(k, k)) > rel_tol * top) ++rank;
    Mat q = qr.householderQ();
    return q.leftCols(rank);
}

/// True when span(basis) is a coordinate subspace; fills the sorted index set.
inline bool coordinate_span(const Mat& basis, std::vector<int>& idx, double tol = 1e-12) {
    idx.clear();
    const Mat proj = basis * basis.transpose();
    for (int i = 0; i < proj.rows(); ++i) {
        for (int j = 0; j < proj.cols(); ++j) {
            const double want = (i == j) ? proj(i, i) : 0.0;
            if (std::abs(proj(i, j) - want) > tol) return false;
        }
        const double p = proj(i, i);
        if (std::abs(p - 1.0) <= tol)
            idx.push_back(i);
        else if (std::abs(p) > tol)
            return false;
    }
    return static_cast<int>(idx.size()) == static_cast<int>(basis.cols());
}

}  // namespace detail

/// Smallest subspace containing the seed directions that is closed under the
/// flow of F and invariant under A^T, grown by alternating the two closure
/// operations until the rank is stable. Coordinate subspaces are returned with
/// plain unit-vector columns in ascending order; the full space returns the
/// identity basis.
inline ReducedSpace build_reduced_space(const OperatorModel& model, const VectorField& F,
                                        const std::vector<Vec>& seed_dirs) {
    const int d = model.dim;
    require(F.dim == d, "build_reduced_space: drift dimension mismatch");
    for (const auto& a : seed_dirs)
        require(a.size() == d, "build_reduced_space: seed direction dimension mismatch");

    std::vector<Vec> cols = seed_dirs;
    if (cols.empty()) cols.push_back(unit_vector(d, 0));

    Mat basis;
    int rank = -1;
    const Mat at = model.a_matrix.transpose();
    for (int round = 0; round <= d + 1; ++round) {
        const auto closed = flow_closure(F, cols);
        Mat stack(d, static_cast<Eigen::Index>(cols.size() + closed.size()) * 2);
        Eigen::Index c = 0;
        for (const auto& v : cols) {
            stack.col(c++) = v;
            stack.col(c++) = at * v;
        }
        for (const auto& v : closed) {
            stack.col(c++) = v;
            stack.col(c++) = at * v;
        }
        basis = detail::orthonormal_span(stack.leftCols(c));
        const int new_rank = static_cast<int>(basis.cols());
        if (new_rank == rank) break;
        rank = new_rank;
        cols.clear();
        for (int k = 0; k < rank; ++k) cols.push_back(basis.col(k));
        if (rank == d) break;
    }

    ReducedSpace sp;
    sp.full_dim = d;
    sp.m = rank;
    if (rank == d) {
        sp.basis = Mat::Identity(d, d);
        sp.is_full = true;
    } else {
        std::vector<int> idx;
        if (detail::coordinate_span(basis, idx)) {
            sp.basis.resize(d, rank);
            for (int k = 0; k < rank; ++k) sp.basis.col(k) = unit_vector(d, idx[k]);
        } else {
            sp.basis = basis;
        }
    }

    const double anorm = at.cwiseAbs().maxCoeff() + 1.0;
    const Mat atb = at * sp.basis;
    require((atb - sp.basis * (sp.basis.transpose() * atb)).norm() <= 1e-8 * anorm,
            "build_reduced_space: A^T does not stabilize the computed subspace");
    for (const auto& a : seed_dirs)
        require((a - sp.basis * (sp.basis.transpose() * a)).norm() <= 1e-8 * (a.norm() + 1.0),
                "build_reduced_space: seed direction escapes the computed subspace");
    return sp;
}

/// The resolvent problem data carried to the reduced coordinates. For builtin
/// drifts the reduced drift is again builtin, so all certified constants and
/// the devirtualized evaluation path survive the restriction.
struct ReducedProblem {
    ReducedSpace space;
    OperatorModel model;
    VectorField drift;
    ScalarField data;
};

namespace detail {

inline VectorField reduce_drift(const VectorField& F, const ReducedSpace& sp) {
    const int m = sp.m;
    switch (F.tag) {
        case BuiltinDrift::Zero:
            return builtin_field("zero", m);
        case BuiltinDrift::TanhComponentwise: {
            for (int k = 0; k < m; ++k) {
                const Vec col = sp.basis.col(k);
                require(col.maxCoeff() == 1.0 && col.cwiseAbs().sum() == 1.0,
                        "reduce_drift: tanh drift needs a coordinate subspace");
            }
            return builtin_field("tanh_componentwise", m, F.scale);
        }
        case BuiltinDrift::SigmoidRankOne: {
            Vec vr = sp.basis.transpose() * F.v;
            Vec wr = sp.basis.transpose() * F.w;
            require(std::abs(vr.norm() - 1.0) <= 1e-8 && std::abs(wr.norm() - 1.0) <= 1e-8,
                    "reduce_drift: rank-one directions escape the subspace");
            vr /= vr.norm();
            wr /= wr.norm();
            return builtin_field("scaled_sigmoid_rank_one", m, F.scale, vr, wr);
        }
        case BuiltinDrift::SmoothBump:
        case BuiltinDrift::None:
            break;
    }
    // only reachable when the space is full, where restriction is the identity
    require(sp.is_full, "reduce_drift: this drift does not restrict to a proper subspace");
    return F;
}

inline ScalarField reduce_data(const ScalarField& f, const ReducedSpace& sp) {
    const Mat b = sp.basis;
    ScalarField g;
    g.value = [f, b](const Vec& s) { return f.value(b * s); };
    if (f.has_gradient())
        g.gradient = [f, b](const Vec& s) { return Vec(b.transpose() * f.gradient(b * s)); };
    if (f.has_hessian())
        g.hessian = [f, b](const Vec& s) { return Mat(b.transpose() * f.hessian(b * s) * b); };
    g.sup_norm = f.sup_norm;
    g.grad_sup_norm = f.grad_sup_norm;
    g.grad_modulus = f.grad_modulus;
    if (f.cylindrical) {
        g.cylindrical = true;
        for (const auto& a : f.cylinder_dirs) g.cylinder_dirs.push_back(b.transpose() * a);
    }
    return g;
}

}  // namespace detail

/// Restricts (model, F, f) to the closure of f's cylinder directions. Fields
/// without cylindrical structure keep the full space.
inline ReducedProblem build_reduced_problem(const OperatorModel& model, const VectorField& F,
                                            const ScalarField& f) {
    std::vector<Vec> seed;
    if (f.cylindrical) {
        seed = f.cylinder_dirs;
    } else {
        for (int k = 0; k < model.dim; ++k) seed.push_back(unit_vector(model.dim, k));
    }
    ReducedProblem rp;
    rp.space = build_reduced_space(model, F, seed);
    if (rp.space.is_full) {
        rp.model = model;
        rp.drift = F;
        rp.data = f;
        return rp;
    }
    const Mat b = rp.space.basis;
    const Mat qr = b.transpose() * model.q_matrix * b;
    rp.model = build_model(rp.space.m, Mat(b.transpose() * model.a_matrix * b),
                           Mat(0.5 * (qr + qr.transpose())));
    rp.drift = detail::reduce_drift(F, rp.space);
    rp.data = detail::reduce_data(f, rp.space);
    return rp;
}

}  // namespace oup
