#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ouperturb/report.hpp"

using namespace oup;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

CheckReport sample_check() {
    return make_check("ou.resolvent_value", "Prop. 1.6, Eq. (e.16a)", 0.1, 0.5, 1e-8, 42,
                      "ball(r=8,n=4096,seed=0)", {{"lambda", "2"}, {"eps", "0.1"}});
}

}  // namespace

TEST_CASE("make_check computes margin and pass", "[report]") {
    const auto r = make_check("id", "ref", 1.0, 1.5, 1e-6);
    CHECK(r.margin == 0.5);
    CHECK(r.pass);
    const auto fail = make_check("id", "ref", 1.5, 1.0, 1e-6);
    CHECK_FALSE(fail.pass);
    // boundary: margin exactly -budget still passes
    const auto edge = make_check("id", "ref", 1.0 + 1e-6, 1.0, 1e-6);
    CHECK(edge.margin >= -edge.error_budget);
    CHECK(edge.pass);
}

TEST_CASE("fit_rate recovers a linear decay", "[report]") {
    ConvergenceTable t;
    t.parameter = "eps";
    t.values = {0.4, 0.2, 0.1, 0.05};
    for (double v : t.values) t.errors.push_back(3.0 * v);
    fit_rate(t);
    REQUIRE(t.rate_defined);
    CHECK(t.fitted_rate == Catch::Approx(1.0).epsilon(1e-12));

    ConvergenceTable q;
    q.parameter = "dt";
    q.values = {0.1, 0.2, 0.4};
    for (double v : q.values) q.errors.push_back(v * v);
    fit_rate(q);
    CHECK(q.fitted_rate == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fit_rate flags degenerate tables", "[report][edge]") {
    ConvergenceTable z;
    z.parameter = "eps";
    z.values = {0.4, 0.2, 0.1};
    z.errors = {0.0, 0.0, 0.0};
    fit_rate(z);
    CHECK_FALSE(z.rate_defined);
    CHECK(z.notes.find("rate undefined") != std::string::npos);

    ConvergenceTable one;
    one.parameter = "n";
    one.values = {10.0};
    one.errors = {0.5};
    fit_rate(one);
    CHECK_FALSE(one.rate_defined);

    ConvergenceTable bad;
    bad.values = {0.1, 0.1, 0.2};
    bad.errors = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS(fit_rate(bad), InvalidArgument);

    ConvergenceTable inf_err;
    inf_err.values = {0.1, 0.2};
    inf_err.errors = {1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(fit_rate(inf_err), InvalidArgument);
}

TEST_CASE("json output is sorted, escaped, and deterministic", "[report]") {
    const std::vector<CheckReport> reports = {sample_check()};
    const std::string a = to_json(reports), b = to_json(reports);
    CHECK(a == b);
    CHECK(a.find("\"check_id\":\"ou.resolvent_value\"") != std::string::npos);
    CHECK(a.find("\"paper_ref\":\"Prop. 1.6, Eq. (e.16a)\"") != std::string::npos);
    CHECK(a.find("\"lhs\":0.10000000000000001") != std::string::npos);  // 17 digits
    CHECK(a.find("\"eps\":\"0.1\"") != std::string::npos);
    // keys appear in sorted order
    CHECK(a.find("\"check_id\"") < a.find("\"error_budget\""));
    CHECK(a.find("\"error_budget\"") < a.find("\"lhs\""));
    CHECK(a.find("\"rhs\"") < a.find("\"sampler\""));
    CHECK(a.find("\"sampler\"") < a.find("\"seed\""));
}

TEST_CASE("empty report list serializes to valid containers", "[report][edge]") {
    const std::vector<CheckReport> none;
    CHECK(to_json(none) == "[\n]\n");
    CHECK(to_csv(none) == "check_id,paper_ref,lhs,rhs,margin,pass,seed\n");
}

TEST_CASE("csv quotes fields containing commas", "[report]") {
    auto r = sample_check();
    const std::string csv = to_csv(std::vector<CheckReport>{r});
    CHECK(csv.rfind("check_id,paper_ref,lhs,rhs,margin,pass,seed\n", 0) == 0);
    CHECK(csv.find("\"Prop. 1.6, Eq. (e.16a)\"") != std::string::npos);
    CHECK(csv.find(",true,42\n") != std::string::npos);
}

TEST_CASE("convergence table serialization", "[report]") {
    ConvergenceTable t;
    t.parameter = "eps";
    t.values = {0.4, 0.2};
    t.errors = {0.12, 0.06};
    fit_rate(t);
    const std::string j = to_json(t);
    CHECK(j.find("\"parameter\":\"eps\"") != std::string::npos);
    CHECK(j.find("\"fitted_rate\":1") != std::string::npos);
    const std::string c = to_csv(t);
    CHECK(c.rfind("eps,error\n", 0) == 0);
    CHECK(c.find("rate,1\n") != std::string::npos);

    ConvergenceTable z;
    z.parameter = "eps";
    z.values = {0.4, 0.2};
    z.errors = {0.0, 0.0};
    fit_rate(z);
    CHECK(to_json(z).find("\"fitted_rate\":null") != std::string::npos);
    CHECK(to_csv(z).find("rate,undefined") != std::string::npos);
}

TEST_CASE("emit_report writes byte-identical files and rejects bad paths", "[report]") {
    const std::vector<CheckReport> reports = {sample_check(), make_check("b", "r", 0.0, 1.0, 0.0)};
    const std::string p1 = "/tmp/oup_report_test1.json", p2 = "/tmp/oup_report_test2.json";
    emit_report(reports, "json", p1);
    emit_report(reports, "json", p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(slurp(p1) == to_json(reports));
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    CHECK_THROWS_AS(emit_report(reports, "yaml", "/tmp/x.yaml"), InvalidArgument);
    CHECK_THROWS_AS(emit_report(reports, "json", "/nonexistent_dir_zz/x.json"), InvalidArgument);
}
