#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ouperturb/config.hpp"

using namespace oup;

namespace {

const char* kReference = R"(# 1-D reference problem
[model]
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
count = 4096
seed = 1

[quad]
mode = "tensor"   # inline comment
nodes_per_dim = 64
laplace_nodes = 128

[perturbation]
lambda = 2.0
eps = 0.1
tol = 1e-6

[sde]
dt = 1e-3
n_paths = 20000
seed = 7
)";

}  // namespace

TEST_CASE("reference config parses into every builder", "[config]") {
    const auto cfg = Config::parse_string(kReference);
    const auto model = model_from_config(cfg);
    CHECK(model.dim == 1);
    CHECK(model.a_matrix(0, 0) == -1.0);
    CHECK(model.omega == -1.0);

    const auto phi = phi_from_config(cfg, model.dim);
    CHECK(phi.value(Vec::Constant(1, 0.0)) == 1.0);
    CHECK(phi.sup_norm == 1.0);
    CHECK(phi.cylindrical);

    const auto drift = drift_from_config(cfg, model.dim);
    CHECK(drift.k_const == 1.0);
    CHECK(drift.value(Vec::Constant(1, 0.3))(0) == Catch::Approx(std::tanh(0.3)));

    const auto sampler = sampler_from_config(cfg);
    CHECK(sampler.radius == 8.0);
    CHECK(sampler.count == 4096);
    CHECK(sampler.seed == 1);

    const auto quad = quad_from_config(cfg);
    CHECK(quad.mode == QuadratureSpec::Mode::Tensor);
    CHECK(quad.nodes_per_dim == 64);
    CHECK(quad.laplace_nodes == 128);

    const auto sde = sde_from_config(cfg);
    CHECK(sde.dt == 1e-3);
    CHECK(sde.n_paths == 20000);
    CHECK(sde.seed == 7);

    CHECK(cfg.get_float("perturbation.lambda") == 2.0);
    CHECK(cfg.get_float("perturbation.eps") == 0.1);
    CHECK(cfg.get_float("perturbation.tol") == 1e-6);
}

TEST_CASE("value forms cover bools strings numbers and lists", "[config]") {
    const auto cfg = Config::parse_string(
        "flag = true\noff = false\nname = \"a b # c\"\nn = 42\nx = -3.5e-2\n"
        "xs = [1, 2.5, -3]\nempty = []\n");
    CHECK(cfg.get_bool("flag"));
    CHECK_FALSE(cfg.get_bool("off"));
    CHECK(cfg.get_str("name") == "a b # c");
    CHECK(cfg.get_int("n") == 42);
    CHECK(cfg.get_float("n") == 42.0);
    CHECK(cfg.get_float("x") == -3.5e-2);
    const auto xs = cfg.get_list("xs");
    REQUIRE(xs.size() == 3);
    CHECK(xs[1] == 2.5);
    CHECK(cfg.get_list("empty").empty());
    CHECK(cfg.has("flag"));
    CHECK_FALSE(cfg.has("missing"));
    CHECK(cfg.get_int("absent", 9) == 9);
    CHECK(cfg.get_str("absent", "d") == "d");
}

TEST_CASE("parse errors carry the offending line number", "[config]") {
    const auto line_of = [](const std::string& text) {
        try {
            Config::parse_string(text, "cfg");
        } catch (const InvalidArgument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(line_of("a = 1\nb 2\n").find("cfg:2") != std::string::npos);
    CHECK(line_of("a = 1\na = 2\n").find("duplicate") != std::string::npos);
    CHECK(line_of("[sec\n").find("cfg:1") != std::string::npos);
    CHECK(line_of("x = 1.2.3\n").find("malformed number") != std::string::npos);
    CHECK(line_of("x = [1, 2\n").find("unterminated list") != std::string::npos);
    CHECK(line_of("s = \"oops\n").find("unterminated string") != std::string::npos);
    CHECK(line_of("x =\n").find("empty value") != std::string::npos);
}

TEST_CASE("lookup errors name the key and expected type", "[config]") {
    const auto cfg = Config::parse_string("a = 1\nb = \"s\"\n", "cfg");
    CHECK_THROWS_WITH(cfg.get_float("zzz"), Catch::Matchers::ContainsSubstring("missing key 'zzz'"));
    CHECK_THROWS_WITH(cfg.get_int("b"), Catch::Matchers::ContainsSubstring("not an integer"));
    CHECK_THROWS_WITH(cfg.get_list("a"), Catch::Matchers::ContainsSubstring("not a list"));
    CHECK_THROWS_WITH(cfg.get_bool("a"), Catch::Matchers::ContainsSubstring("not a boolean"));
}

TEST_CASE("matrix entries accept diagonal or dense row-major lists", "[config]") {
    const auto cfg = Config::parse_string(
        "[model]\ndim = 2\na_matrix = [-1.0, 0.5, 0.0, -2.0]\nq_diag = [1.0, 0.5]\n"
        "omega = -0.5\n");
    const auto m = model_from_config(cfg);
    CHECK(m.a_matrix(0, 1) == 0.5);
    CHECK(m.a_matrix(1, 1) == -2.0);
    CHECK(m.q_matrix(1, 1) == 0.5);
    CHECK(m.omega == -0.5);
    const auto bad = Config::parse_string("[model]\ndim = 2\na_diag = [1.0, 2.0, 3.0]\nq_diag = [1.0, 1.0]\n");
    CHECK_THROWS_AS(model_from_config(bad), InvalidArgument);
}

TEST_CASE("drift builder forwards rank-one vectors", "[config]") {
    const auto cfg = Config::parse_string(
        "[model]\ndim = 2\na_diag = [-1.0, -1.0]\nq_diag = [1.0, 1.0]\n"
        "[drift]\nname = \"scaled_sigmoid_rank_one\"\nscale = 0.5\n"
        "v = [1.0, 0.0]\nw = [0.0, 1.0]\n");
    const auto drift = drift_from_config(cfg, 2);
    CHECK(drift.f_sup_norm == 0.5);
    Vec x(2);
    x << 3.0, 0.7;
    CHECK(drift.value(x)(0) == Catch::Approx(0.5 * std::tanh(0.7)));
    CHECK(drift.value(x)(1) == 0.0);
}

TEST_CASE("file round trip and missing file diagnostics", "[config]") {
    const std::string path = "test_config_roundtrip.toml";
    {
        std::ofstream out(path);
        out << kReference;
    }
    const auto cfg = Config::parse_file(path);
    CHECK(cfg.get_int("model.dim") == 1);
    std::remove(path.c_str());
    CHECK_THROWS_WITH(Config::parse_file("no_such_file.toml"),
                      Catch::Matchers::ContainsSubstring("cannot open"));
}
