#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "nlmarkov/acceptance.hpp"
#include "nlmarkov/error.hpp"
#include "nlmarkov/scenario.hpp"

namespace {

constexpr int kExitFailure = 2;
constexpr int kExitConfig = 3;

int validate(const std::string& suite_tag) {
    const nlmarkov::Suite suite = suite_tag == "full" ? nlmarkov::Suite::full : nlmarkov::Suite::fast;
    const auto results = nlmarkov::run_suite(suite, std::cout);
    int failed = 0;
    double seconds = 0.0;
    for (const auto& r : results) {
        failed += r.passed ? 0 : 1;
        seconds += r.seconds;
    }
    std::cout << suite_tag << " suite: " << results.size() - failed << "/" << results.size() << " passed in "
              << seconds << " s" << std::endl;
    return failed == 0 ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlinear Markov evolution solver"};
    app.require_subcommand(1);
    std::string config;
    std::string out = ".";
    std::string suite = "fast";
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    auto add_run = [&](const char* name, const char* help) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("--config", config, "Scenario JSON file")->required();
        cmd->add_option("--out", out, "Output directory");
        cmd->add_option("--seed", seed, "Override the scenario seed");
        return cmd;
    };
    CLI::App* simulate = add_run("simulate", "Solve the kinetic equation");
    CLI::App* sensitivity = add_run("sensitivity", "Propagate the linearized equation and validate by finite differences");
    CLI::App* compare = add_run("compare", "Compare two families and initial laws");
    CLI::App* validate_cmd = app.add_subcommand("validate", "Run the acceptance suite");
    validate_cmd->add_option("--suite", suite, "fast or full")->check(CLI::IsMember({"fast", "full"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (validate_cmd->parsed()) return validate(suite);
        nlmarkov::Scenario s = nlmarkov::load_scenario(config);
        if (seed) s.seed = *seed;
        std::filesystem::create_directories(out);
        if (simulate->parsed()) return nlmarkov::run_simulate(s, out);
        if (sensitivity->parsed()) return nlmarkov::run_sensitivity(s, out);
        if (compare->parsed()) return nlmarkov::run_compare(s, out);
    } catch (const nlmarkov::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitConfig;
    } catch (const nlmarkov::WellPosednessFailure& e) {
        std::cerr << "well-posedness failure: " << e.what() << std::endl;
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
