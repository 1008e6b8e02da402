#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlmarkov {

enum class Suite { fast, full };

struct CriterionResult {
    int id = 0;
    std::string title;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
    double budget = 0.0;  ///< runtime budget in seconds, part of the pass condition
};

/// Criteria of each suite: fast = 1-5 and 11, full = 1-11.
std::vector<int> suite_criteria(Suite suite);

/// Tolerance multiplier for criterion `id` from NLMARKOV_TOL_SCALE ("id:factor[,id:factor]").
double tolerance_scale(int id);

/// Directory holding the shipped scenario files (NLMARKOV_SCENARIO_DIR overrides the built-in path).
std::filesystem::path scenario_dir();

CriterionResult run_criterion(int id);

/// Runs the suite, printing one line per criterion as it completes.
std::vector<CriterionResult> run_suite(Suite suite, std::ostream& out);

std::string format_result(const CriterionResult& r);

}  // namespace nlmarkov
