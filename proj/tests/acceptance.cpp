/// Acceptance run: criteria 1-13 twice with one seed, then the byte comparison of the two reports.
/// Prints one PASS/FAIL line per criterion and exits nonzero when any fails.

#include "cmlab/suite.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace cmlab;

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria 1-14"};
    std::string workdir = "acceptance_work";
    std::uint64_t seed = 1;
    app.add_option("--workdir", workdir, "directory for the report files");
    app.add_option("--seed", seed, "seed of the randomized batteries");
    CLI11_PARSE(app, argc, argv);

    SuiteOptions opt;
    opt.seed = seed;
    opt.log = [](const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; };
    SuiteReport rep;
    try {
        rep = run_acceptance(opt);
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    fs::create_directories(workdir);
    write_json(rep.to_json(), fs::path(workdir) / "acceptance_report.json");
    rep.to_csv().write(fs::path(workdir) / "acceptance_report.csv");
    for (auto& r : rep.results)
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.id << " " << r.name << ": " << r.summary << "\n";
    std::cout << (rep.pass() ? "all criteria pass" : "some criteria fail") << std::endl;
    return rep.pass() ? 0 : 1;
}
