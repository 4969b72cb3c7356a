/// cmlab: generate minimal graphs, measure excess and decay, build Lipschitz approximations and
/// center manifolds, and run the acceptance checks.

#include "cmlab/cli.hpp"

#include <CLI11.hpp>

using namespace cmlab;

namespace {

struct Flags {
    std::string config, out;
    std::uint64_t seed = 0;
    int level = 0;
    std::vector<std::string> params;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration");
    sub->add_option("--out", f.out, "output directory (default cmlab_out)");
    sub->add_option("--seed", f.seed, "seed of the randomized batteries");
    sub->add_option("--level", f.level, "restrict per-level output to this level");
    sub->add_option("--param", f.params, "override key=value (dotted keys reach nested objects)")->take_all();
}

cli::Overrides overrides(CLI::App* sub, const Flags& f) {
    cli::Overrides ov;
    if (sub->count("--config")) ov.config = f.config;
    if (sub->count("--out")) ov.out = f.out;
    if (sub->count("--seed")) ov.seed = f.seed;
    if (sub->count("--level")) ov.level = f.level;
    ov.params = f.params;
    return ov;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"center-manifold laboratory for area-minimizing graphs"};
    app.require_subcommand(1);
    Flags f;
    std::string check = "all";

    auto* gen = app.add_subcommand("generate", "minimize area with preset boundary data; writes u.json/u.bin");
    auto* exc = app.add_subcommand("excess", "spherical and cylindrical excess of a graph at one point");
    auto* dec = app.add_subcommand("decay", "optimal excess over dyadic radii");
    auto* lip = app.add_subcommand("lipapprox", "maximal-function truncation and Lipschitz extension");
    auto* cm = app.add_subcommand("cm", "dyadic interpolations and glued center-manifold approximations");
    auto* ver = app.add_subcommand("verify", "acceptance criteria (all, suite, a name or number) or a field check");
    for (auto* s : {gen, exc, dec, lip, cm, ver}) add_common(s, f);
    ver->add_option("check", check, "all | suite | criterion | oscillation | morrey | harmonic | blowup | taylor | interpolate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    CLI::App* sub = app.get_subcommands().front();
    return cli::guarded(
        [&] {
            RunConfig rc = cli::load_config(overrides(sub, f));
            if (sub == gen) return cli::cmd_generate(rc);
            if (sub == exc) return cli::cmd_excess(rc);
            if (sub == dec) return cli::cmd_decay(rc);
            if (sub == lip) return cli::cmd_lipapprox(rc);
            if (sub == cm) return cli::cmd_cm(rc);
            return cli::cmd_verify(check, rc, std::cerr);
        },
        std::cerr);
}
