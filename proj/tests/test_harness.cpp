#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <string>

#include "ouperturb/harness.hpp"

using namespace oup;

namespace {

const char* kReference = R"([model]
dim = 1
a_diag = [-1.0]
q_diag = [1.0]

[phi]
kind = "cos"
dirs = [1.0]

[drift]
name = "tanh_componentwise"
scale = 1.0

[sup_sampler]
radius = 8.0
count = 256
seed = 1

[quad]
mode = "tensor"
nodes_per_dim = 64
laplace_nodes = 128

[perturbation]
lambda = 2.0
eps = 0.1
tol = 1e-6

[sde]
dt = 2e-3
n_paths = 20000
seed = 7
tail_rel = 1e-4
)";

const CheckReport* find_report(const std::vector<CheckReport>& rs, const std::string& id) {
    for (const auto& r : rs)
        if (r.check_id == id) return &r;
    return nullptr;
}

/// Trimmed suite for the fast structural tests: fewer grid cells and a small
/// SDE block, everything else at reference accuracy.
SuiteConfig small_suite() {
    SuiteConfig sc = reference_suite_config();
    sc.sampler.count = 128;
    sc.eps_list = {0.4, 0.2, 0.1};
    sc.flow_times = {0.5, 1.0};
    sc.lambda_grid = {2.0};
    sc.eps_grid = {0.5, 0.1};
    sc.closure_eps = {0.2, 0.1};
    sc.sde.n_paths = 2000;
    sc.sde.dt = 5e-3;
    sc.sde.tail_rel = 1e-3;
    return sc;
}

}  // namespace

TEST_CASE("suite_from_config reads the reference problem", "[harness]") {
    const auto sc = suite_from_config(Config::parse_string(kReference));
    CHECK(sc.model.dim == 1);
    CHECK(sc.model.a_matrix(0, 0) == -1.0);
    CHECK(sc.f_kind == "cos");
    CHECK(sc.f_dir(0) == 1.0);
    CHECK(sc.drift.k_const == 1.0);
    CHECK(sc.sampler.radius == 8.0);
    CHECK(sc.sampler.count == 256);
    CHECK(sc.lambda == 2.0);
    CHECK(sc.eps == 0.1);
    CHECK(sc.tol == 1e-6);
    CHECK(sc.sde.dt == 2e-3);
    CHECK(sc.sde.n_paths == 20000);
    CHECK(sc.quad.nodes_per_dim == 64);
}

TEST_CASE("suite_from_config rejects bad perturbation parameters", "[harness]") {
    std::string bad(kReference);
    const auto pos = bad.find("lambda = 2.0");
    bad.replace(pos, 12, "lambda = -1.");
    CHECK_THROWS_AS(suite_from_config(Config::parse_string(bad)), InvalidArgument);
}

TEST_CASE("worst_per_id keeps the entry closest to failing", "[harness]") {
    std::vector<CheckReport> rs;
    rs.push_back(make_check("a", "ref", 0.1, 1.0, 1e-6));
    rs.push_back(make_check("a", "ref", 0.9, 1.0, 1e-6));
    rs.push_back(make_check("a", "ref", 0.5, 1.0, 1e-6));
    rs.push_back(make_check("b", "ref", 2.0, 1.0, 1e-6));
    const auto out = detail::worst_per_id(std::move(rs));
    REQUIRE(out.size() == 2);
    CHECK(out[0].check_id == "a");
    CHECK(out[0].lhs == 0.9);
    CHECK(out[0].params == std::vector<std::pair<std::string, std::string>>{{"worst_of", "3"}});
    CHECK(out[1].check_id == "b");
    CHECK_FALSE(out[1].pass);
}

TEST_CASE("all_pass skips informational reports", "[harness]") {
    std::vector<CheckReport> rs;
    rs.push_back(make_check("a", "ref", 0.1, 1.0, 0.0));
    rs.push_back(make_check("b", "ref", 2.0, 1.0, 0.0, 0, {}, {{"informational", "true"}}));
    CHECK(all_pass(rs));
    rs.push_back(make_check("c", "ref", 2.0, 1.0, 0.0));
    CHECK_FALSE(all_pass(rs));
}

TEST_CASE("run_suite on the reference problem passes every check", "[harness][heavy]") {
    const auto sc = reference_suite_config();
    const auto rs = run_suite(sc);
    CHECK(rs.size() >= 40);
    CHECK(std::is_sorted(rs.begin(), rs.end(), [](const CheckReport& a, const CheckReport& b) {
        return a.check_id < b.check_id;
    }));
    for (const auto& r : rs) {
        INFO(r.check_id << " lhs=" << r.lhs << " rhs=" << r.rhs << " budget=" << r.error_budget);
        CHECK(r.pass);
        CHECK(!r.paper_ref.empty());
        CHECK(r.error_budget >= 0.0);
    }
    CHECK(all_pass(rs));
    for (const char* id :
         {"flow.e3.62", "flow.e3.70", "ou.rt.closed_form", "ou.generator.quotient",
          "ou.resolvent.identity", "perturbation.e3.13.monotone", "tlambda.e15a.lam=2.eps=0.1",
          "tlambda.e3.19.gradient", "resolvent.e14a.residual", "resolvent.e14a.offgrid",
          "resolvent.e3.18.const", "resolvent.e3.18.linear", "resolvent.lemma1.7.dissipativity",
          "resolvent.e3.16.gradient", "resolvent.thm1.8.c1", "sde.e5.exact_linear",
          "sde.markov", "sde.dt.bias", "sde.closure.monotone", "sde.closure.final"}) {
        INFO(id);
        CHECK(find_report(rs, id) != nullptr);
    }
    const auto* fl = find_report(rs, "flow.e3.66");
    REQUIRE(fl != nullptr);
    bool has_worst_of = false;
    for (const auto& [k, v] : fl->params) has_worst_of |= k == "worst_of";
    CHECK(has_worst_of);
    const auto* info = find_report(rs, "resolvent.thm1.8.c1.paper");
    REQUIRE(info != nullptr);
    CHECK(informational(*info));
}

TEST_CASE("a wrong Lipschitz constant fails the Jacobian bound and the verdict",
          "[harness][heavy]") {
    SuiteConfig sc = small_suite();
    sc.drift.k_const *= 0.5;
    const auto rs = run_suite(sc);
    const auto* jac = find_report(rs, "flow.e3.70");
    REQUIRE(jac != nullptr);
    CHECK_FALSE(jac->pass);
    CHECK_FALSE(all_pass(rs));
}

TEST_CASE("zero-drift suite passes and reruns byte-identically", "[harness][heavy]") {
    SuiteConfig sc = small_suite();
    sc.drift = builtin_field("zero", 1);
    const auto r1 = run_suite(sc);
    const auto r2 = run_suite(sc);
    CHECK(all_pass(r1));
    CHECK(to_json(r1) == to_json(r2));
    // with F = 0 the resolvent solve is exactly R(lambda, L) f at every eps
    const auto* fin = find_report(r1, "sde.closure.final");
    REQUIRE(fin != nullptr);
    CHECK(fin->pass);
}

TEST_CASE("feps study recovers the first-order rate", "[harness][heavy]") {
    const auto sc = reference_suite_config();
    const auto t = convergence_study(sc, "feps", {0.4, 0.2, 0.1, 0.05, 0.025});
    CHECK(t.parameter == "eps");
    REQUIRE(t.errors.size() == 5);
    REQUIRE(t.rate_defined);
    CHECK(t.fitted_rate == Catch::Approx(1.0).margin(0.15));
}

TEST_CASE("feps study with zero drift leaves the rate undefined", "[harness]") {
    SuiteConfig sc = reference_suite_config();
    sc.drift = builtin_field("zero", 1);
    const auto t = convergence_study(sc, "feps", {0.4, 0.2, 0.1});
    for (double e : t.errors) CHECK(e == 0.0);
    CHECK_FALSE(t.rate_defined);
    CHECK(t.notes.find("undefined") != std::string::npos);
}

TEST_CASE("sde-dt study with zero drift sees only roundoff", "[harness]") {
    // the coupled coarse and fine chains agree up to e^{dtA} vs (e^{dtA/2})^2
    SuiteConfig sc = reference_suite_config();
    sc.drift = builtin_field("zero", 1);
    sc.sde.n_paths = 2000;
    const auto t = convergence_study(sc, "sde-dt", {4e-3, 2e-3, 1e-3});
    CHECK(t.parameter == "dt");
    for (double e : t.errors) CHECK(e < 1e-12);
}

TEST_CASE("resolvent-eps study errors shrink toward the oracle", "[harness][heavy]") {
    SuiteConfig sc = reference_suite_config();
    sc.sde.dt = 5e-3;
    sc.sde.tail_rel = 1e-3;
    const auto t = convergence_study(sc, "resolvent-eps", {0.4, 0.2, 0.1});
    CHECK(t.parameter == "eps");
    REQUIRE(t.errors.size() == 3);
    for (double e : t.errors) CHECK(e >= 0.0);
    CHECK(t.errors.front() > t.errors.back());
    CHECK(t.notes.find("Monte Carlo floor") != std::string::npos);
}

TEST_CASE("convergence_study rejects bad arguments", "[harness]") {
    const auto sc = reference_suite_config();
    CHECK_THROWS_AS(convergence_study(sc, "unknown", {0.4, 0.2, 0.1}), InvalidArgument);
    CHECK_THROWS_AS(convergence_study(sc, "feps", {0.4, 0.2}), InvalidArgument);
}
