#include <iostream>
#include <string>

#include "nlmarkov/acceptance.hpp"

int main(int argc, char** argv) {
    const std::string tag = argc > 1 ? argv[1] : "full";
    const auto suite = tag == "fast" ? nlmarkov::Suite::fast : nlmarkov::Suite::full;
    int failed = 0;
    for (const auto& r : nlmarkov::run_suite(suite, std::cout)) failed += r.passed ? 0 : 1;
    return failed == 0 ? 0 : 1;
}
