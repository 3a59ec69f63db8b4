#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ouperturb/model.hpp"

using namespace oup;

namespace {

Mat mat1(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
}

Mat rotation2(double theta) {
    Mat r(2, 2);
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

}  // namespace

TEST_CASE("build_model on diagonal data picks the top eigenvalue as omega", "[model]") {
    const auto m1 = build_model(1, mat1(-1.0), mat1(1.0));
    CHECK(m1.omega == -1.0);
    CHECK(m1.diagonal);

    Mat a = Mat::Zero(2, 2), q = Mat::Zero(2, 2);
    a.diagonal() << -1.0, -2.0;
    q.diagonal() << 1.0, 0.5;
    const auto m2 = build_model(2, a, q);
    CHECK(m2.omega == -1.0);
}

TEST_CASE("build_model rejects invalid data", "[model][edge]") {
    CHECK_THROWS_AS(build_model(1, mat1(-1.0), mat1(-1.0)), InvalidArgument);  // Q not PSD
    Mat q(2, 2);
    q << 1.0, 0.5, 0.3, 1.0;  // not symmetric
    CHECK_THROWS_AS(build_model(2, Mat::Identity(2, 2) * -1.0, q), InvalidArgument);
    CHECK_THROWS_AS(build_model(0, Mat(), Mat()), InvalidArgument);
    // omega below the true growth rate of e^{tA}
    CHECK_THROWS_AS(build_model(1, mat1(-1.0), mat1(1.0), -2.0), InvalidArgument);
}

TEST_CASE("build_model verifies omega for dense non-normal A", "[model]") {
    Mat a(2, 2);
    a << -1.0, 3.0, 0.0, -2.0;
    const Mat q = Mat::Identity(2, 2);
    const auto m = build_model(2, a, q);  // default omega: numerical abscissa
    CHECK_FALSE(m.diagonal);
    CHECK(m.omega == Catch::Approx(-1.5 + std::sqrt(2.5)).epsilon(1e-12));
    // the spectral abscissa -1 undershoots the transient growth
    CHECK_THROWS_AS(build_model(2, a, q, -1.0), InvalidArgument);
}

TEST_CASE("covariance_at closed form in one dimension", "[model]") {
    const auto m = build_model(1, mat1(-1.0), mat1(1.0));
    const auto law = covariance_at(m, 1.0);
    CHECK(law.covariance(0, 0) == Catch::Approx(0.43233235838169365).epsilon(1e-14));
    CHECK(law.mean.isZero());
    CHECK(covariance_at(m, 0.0).covariance.isZero());
    CHECK_THROWS_AS(covariance_at(m, -0.5), InvalidArgument);
}

TEST_CASE("covariance_at with A=0 grows linearly", "[model][edge]") {
    const auto m = build_model(3, Mat::Zero(3, 3), Mat::Identity(3, 3));
    const Mat qt = covariance_at(m, 2.5).covariance;
    CHECK((qt - 2.5 * Mat::Identity(3, 3)).norm() < 1e-13);
}

TEST_CASE("dense quadrature path matches the rotated closed form", "[model]") {
    const Mat r = rotation2(0.7);
    Mat d = Mat::Zero(2, 2), s = Mat::Zero(2, 2);
    d.diagonal() << -1.0, -2.0;
    s.diagonal() << 1.0, 0.5;
    const auto dense = build_model(2, r * d * r.transpose(), r * s * r.transpose());
    REQUIRE_FALSE(dense.diagonal);
    const double t = 1.3;
    Mat exact_d = Mat::Zero(2, 2);
    for (int k = 0; k < 2; ++k)
        exact_d(k, k) = s(k, k) * std::expm1(2.0 * d(k, k) * t) / (2.0 * d(k, k));
    const Mat exact = r * exact_d * r.transpose();
    CHECK((covariance_at(dense, t).covariance - exact).norm() < 1e-9);
}

TEST_CASE("covariance flow identity holds", "[model]") {
    Mat a(2, 2), q(2, 2);
    a << -1.0, 0.8, -0.8, -1.5;
    q << 1.0, 0.2, 0.2, 0.5;
    const auto m = build_model(2, a, q);
    for (auto [t, s] : {std::pair{0.4, 0.9}, std::pair{1.1, 0.3}}) {
        const Mat q_ts = covariance_at(m, t + s).covariance;
        const Mat es = transition_matrix(m, s);
        const Mat recomposed =
            covariance_at(m, s).covariance + es * covariance_at(m, t).covariance * es.transpose();
        CHECK((q_ts - recomposed).norm() < 1e-8);
    }
}

TEST_CASE("trace of Q_t is nondecreasing", "[model]") {
    Mat a(2, 2), q(2, 2);
    a << -0.5, 1.2, 0.1, -2.0;
    q << 0.7, 0.1, 0.1, 0.9;
    const auto m = build_model(2, a, q);
    double prev = 0.0;
    for (double t = 0.0; t <= 2.01; t += 0.25) {
        const double tr = covariance_at(m, t).covariance.trace();
        CHECK(tr >= prev - 1e-12);
        prev = tr;
    }
}

TEST_CASE("semigroup_apply matches scalar and diagonal exponentials", "[model]") {
    const auto m1 = build_model(1, mat1(-1.0), mat1(1.0));
    Vec x1(1);
    x1 << 2.0;
    CHECK(semigroup_apply(m1, 0.0, x1) == x1);
    CHECK(semigroup_apply(m1, 1.0, x1)(0) == Catch::Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));

    Mat a = Mat::Zero(2, 2);
    a.diagonal() << -1.0, -2.0;
    const auto m2 = build_model(2, a, Mat::Identity(2, 2));
    Vec x2(2);
    x2 << 1.0, 1.0;
    const Vec y = semigroup_apply(m2, std::log(2.0), x2);
    CHECK(y(0) == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(y(1) == Catch::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(semigroup_apply(m2, -1.0, x2), InvalidArgument);
}

TEST_CASE("semigroup law and growth bound on a dense model", "[model]") {
    Mat a(3, 3);
    a << -1.0, 0.5, 0.0, -0.5, -1.0, 0.3, 0.1, -0.3, -2.0;
    const auto m = build_model(3, a, Mat::Identity(3, 3));
    Vec x(3);
    x << 1.0, -2.0, 0.5;
    for (auto [t, s] : {std::pair{0.3, 1.2}, std::pair{0.9, 0.9}, std::pair{2.0, 0.1}}) {
        const Vec lhs = semigroup_apply(m, t + s, x);
        const Vec rhs = semigroup_apply(m, t, semigroup_apply(m, s, x));
        CHECK((lhs - rhs).norm() <= 1e-9 * x.norm());
        CHECK(semigroup_apply(m, t, x).norm() <= std::exp(m.omega * t) * x.norm() * (1.0 + 1e-9));
    }
}

TEST_CASE("psd_factor reproduces the covariance and clips tiny negatives", "[model]") {
    Mat c(2, 2);
    c << 2.0, 0.6, 0.6, 1.0;
    const Mat f = psd_factor(c);
    CHECK((f * f.transpose() - c).norm() < 1e-10);

    Mat degenerate(2, 2);
    degenerate << 1.0, 1.0, 1.0, 1.0;  // rank one
    const Mat g = psd_factor(degenerate);
    CHECK((g * g.transpose() - degenerate).norm() < 1e-10);

    CHECK_THROWS_AS(psd_factor(mat1(-1e-6)), InvalidArgument);
}

TEST_CASE("sample_gaussian is deterministic and zero covariance gives zeros", "[model]") {
    const auto law = gaussian_law(Mat::Zero(2, 2));
    for (const auto& v : sample_gaussian(law, 10, 3)) CHECK(v.isZero());

    Mat c(2, 2);
    c << 1.0, 0.3, 0.3, 0.8;
    const auto law2 = gaussian_law(c);
    const auto a = sample_gaussian(law2, 32, 7);
    const auto b = sample_gaussian(law2, 32, 7);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    CHECK_THROWS_AS(sample_gaussian(law2, 0, 1), InvalidArgument);
}

TEST_CASE("sample variance converges to Q_t", "[model][statistical]") {
    const auto m = build_model(1, mat1(-1.0), mat1(1.0));
    const auto law = covariance_at(m, 1.0);
    const double sigma2 = law.covariance(0, 0);
    const int n = 1000000;
    const auto samples = sample_gaussian(law, n, 17);
    double s1 = 0.0, s2 = 0.0;
    for (const auto& v : samples) {
        s1 += v(0);
        s2 += v(0) * v(0);
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(var - sigma2) < 3.0 * std::sqrt(2.0 / n) * sigma2);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(sigma2 / n));
}
