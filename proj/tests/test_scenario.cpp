#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nlmarkov/error.hpp"
#include "nlmarkov/scenario.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path kDir = NLMARKOV_TEST_SCENARIOS;

std::string minimal(const std::string& extra = "") {
    return R"({"schema": "nlmarkov.scenario/1", "name": "t", "grid": {"lower": -4, "upper": 4, "n": 32},
              "family": {"kind": "levy", "preset": "heat"}, "initial": {"kind": "gaussian", "mean": 0, "stddev": 1},
              "horizon": 1.0, "delta": 0.1)" +
           extra + "}";
}

std::string field_of(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_CASE("shipped scenarios round-trip", "[scenario][property]") {
    for (const auto& entry : fs::directory_iterator(kDir)) {
        if (entry.path().extension() != ".json") continue;
        const std::string name = entry.path().stem().string();
        if (name == "negative_horizon") continue;
        INFO(name);
        const std::string text = read(entry.path());
        const Scenario s = parse_scenario(text);
        const std::string out = to_json(s);
        CHECK(nlohmann::json::parse(out) == nlohmann::json::parse(text));
        CHECK(to_json(parse_scenario(out)) == out);
    }
}

TEST_CASE("configuration errors name the field", "[scenario]") {
    CHECK(field_of(read(kDir / "negative_horizon.json")) == "horizon");
    CHECK(field_of(minimal(R"(, "colour": 1)")) == "colour");
    CHECK(field_of(minimal(R"(, "seed": -3)")) == "seed");
    CHECK(field_of(minimal(R"(, "tolerances": {"solver": 0})")) == "tolerances.solver");
    CHECK(field_of(minimal(R"(, "sensitivity": {"alpha": 1, "h_list": [0.001, 0.01]})")) == "sensitivity.h_list");
    CHECK(field_of("{not json") == "<document>");
    CHECK(field_of(R"({"schema": "other/2"})") == "schema");
    CHECK(field_of(minimal().replace(minimal().find("\"n\": 32"), 7, "\"n\": 5")) == "grid.n");
    CHECK(field_of(minimal().replace(minimal().find("\"delta\": 0.1"), 12, "\"delta\": 2.0")) == "delta");
    CHECK_THROWS_AS(load_scenario(kDir / "does_not_exist.json"), ConfigError);
}

TEST_CASE("drivers reject incomplete blocks", "[scenario]") {
    const Scenario s = load_scenario(kDir / "missing_alpha.json");
    const fs::path out = fs::temp_directory_path() / "nlmarkov_missing_alpha";
    try {
        run_sensitivity(s, out);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "sensitivity.alpha");
    }
    CHECK_THROWS_AS(run_compare(parse_scenario(minimal()), out), ConfigError);
}

TEST_CASE("presets expand to the documented families", "[scenario]") {
    const Grid g(-6, 6, 128);
    const GridMeasure mu = GridMeasure::gaussian(g, 1.0, 0.5);
    SECTION("mean-field drift") {
        FamilySpec spec;
        spec.kind = "levy";
        spec.preset = "meanfield_drift";
        spec.alpha = 2.0;
        const auto f = std::get<LevyFamily>(build_family(spec, g));
        const LevyCoefficients c = levy_coefficients(f, mu);
        CHECK(c.b[0] == Approx(-2.0 * test::mean(mu)).epsilon(1e-12));
        CHECK(c.G(0, 0) == Approx(0.02));
        const LevyCoefficients d = levy_partial(f, moment_values(f.moments, mu), 2.0, 0.0, kAlpha);
        CHECK(d.b[0] == Approx(-test::mean(mu)).epsilon(1e-12));
    }
    SECTION("interacting Poisson") {
        const Scenario s = load_scenario(kDir / "interacting_poisson.json");
        const Grid grid = s.grid.build();
        const auto f = std::get<OrderOneFamily>(build_family(s.family, grid));
        const GridMeasure m = build_initial(s.initial, grid);
        const auto jumps = f.jumps(0.0, moment_values(f.moments, m), f.alpha, 0.0);
        REQUIRE(jumps.size() == 1);
        CHECK(jumps[0].y[0] == 2.0);
        CHECK(jumps[0].rate == Approx(0.01 * (16.0 - test::mean(m))).epsilon(1e-12));
    }
    SECTION("heavy tail atoms follow the power law") {
        const Scenario s = load_scenario(kDir / "heavy_tail.json");
        const Grid grid = s.grid.build();
        const auto f = std::get<OrderOneFamily>(build_family(s.family, grid));
        const double h = grid.spacing();
        const Vector c = moment_values(f.moments, build_initial(s.initial, grid));
        for (const Jump& j : f.jumps(0.0, c, 1.0, 0.0)) {
            const double y = std::abs(j.y[0]);
            if (y >= 0.5) CHECK(j.rate == Approx(0.1 * std::pow(y, -1.5) * h).epsilon(1e-12));
        }
    }
}

TEST_CASE("initial laws", "[scenario]") {
    const Grid g(-4, 4, 64);
    const GridMeasure gauss = build_initial({"gaussian", 0.5, 1.0, {}, {}, {}}, g);
    CHECK(gauss.mass() == Approx(1.0));
    const GridMeasure dirac = build_initial({"dirac", {}, {}, 1.0, {}, {}}, g);
    CHECK(test::mean(dirac) == Approx(1.0));
    const GridMeasure dip = build_initial({"dipole", {}, {}, 0.5, 0.25, {}}, g);
    CHECK(dip.mass() == Approx(0.0).margin(1e-15));
    CHECK(test::mean(dip) == Approx(1.0).margin(1e-12));

    const fs::path dir = fs::temp_directory_path() / "nlmarkov_histogram";
    fs::create_directories(dir);
    write_measure_csv((dir / "mu.csv").string(), gauss);
    const GridMeasure hist = build_initial({"histogram", {}, {}, {}, {}, "mu.csv"}, g, dir);
    CHECK((hist.weights - gauss.weights).cwiseAbs().maxCoeff() == 0.0);
}
