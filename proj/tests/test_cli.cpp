/// Configuration merging in process; exit codes, outputs and determinism through the binary.

#include "cmlab/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace cmlab;

namespace {

const fs::path kBin = CMLAB_CLI_PATH;

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "cmlab_cli_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Runs the binary with stderr captured; returns the exit status.
int run(const std::string& args, const fs::path& dir, std::string* err = nullptr) {
    const fs::path log = dir / "stderr.txt";
    std::string cmd = "cd '" + dir.string() + "' && '" + kBin.string() + "' " + args + " 2> '" + log.string() + "' > /dev/null";
    int st = std::system(cmd.c_str());
    if (err) {
        std::ifstream in(log);
        *err = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

const std::string kAffine = "--param 'input.preset={\"kind\":\"affine\",\"slope\":[0.12,-0.05],\"offset\":[0.3]}'";

}  // namespace

TEST(Config, BareKeysRouteToParamsOrOptions) {
    json cfg = json::object();
    cli::apply_param(cfg, "gamma=0.2");
    cli::apply_param(cfg, "r=0.4");
    cli::apply_param(cfg, "input.grid.N=65");
    cli::apply_param(cfg, "input.field=some/path.json");
    cli::apply_param(cfg, "x=[0.1,0.2]");
    EXPECT_EQ(cfg["params"]["gamma"], 0.2);
    EXPECT_EQ(cfg["options"]["r"], 0.4);
    EXPECT_EQ(cfg["input"]["grid"]["N"], 65);
    EXPECT_EQ(cfg["input"]["field"], "some/path.json");
    EXPECT_EQ(cfg["options"]["x"].size(), 2u);
    EXPECT_THROW(cli::apply_param(cfg, "novalue"), ConfigError);
    EXPECT_THROW(cli::apply_param(cfg, "=3"), ConfigError);
    EXPECT_THROW(cli::apply_param(cfg, "a..b=3"), ConfigError);
    EXPECT_THROW(cli::apply_param(cfg, "params.gamma.x=3"), ConfigError);
}

TEST(Config, FlagsWinOverFile) {
    auto dir = scratch("precedence");
    write_json(json{{"params", {{"gamma", 0.2}, {"delta", 0.1}}}, {"options", {{"r", 0.3}}}, {"out", "from_file"}, {"seed", 5}},
               dir / "c.json");
    cli::Overrides ov;
    ov.config = dir / "c.json";
    ov.params = {"r=0.45", "delta=0.12"};
    ov.out = "from_flag";
    auto rc = cli::load_config(ov);
    EXPECT_EQ(rc.params.gamma, 0.2);
    EXPECT_EQ(rc.params.delta, 0.12);
    EXPECT_EQ(cli::option(rc, "r", 0.0), 0.45);
    EXPECT_EQ(rc.out, "from_flag");
    EXPECT_EQ(rc.seed, 5u);
    EXPECT_EQ(rc.to_json()["params"]["beta"], rc.params.beta);
    ov.seed = 9;
    EXPECT_EQ(cli::load_config(ov).seed, 9u);
}

TEST(Config, RejectsBadConfigs) {
    auto dir = scratch("reject");
    cli::Overrides ov;
    ov.params = {"delta=0.3"};  // beta <= 0
    EXPECT_THROW(cli::load_config(ov), ConfigError);
    ov.params = {"params.bogus=1"};
    EXPECT_THROW(cli::load_config(ov), ConfigError);
    ov.params = {};
    std::ofstream(dir / "bad.json") << "{\"params\": {}, \"extra\": 1}";
    ov.config = dir / "bad.json";
    EXPECT_THROW(cli::load_config(ov), ConfigError);
    std::ofstream(dir / "broken.json") << "{not json";
    ov.config = dir / "broken.json";
    EXPECT_THROW(cli::load_config(ov), ConfigError);
    ov.config = dir / "absent.json";
    EXPECT_THROW(cli::load_config(ov), ConfigError);
}

TEST(Config, GridAndPresetParsing) {
    auto g = cli::grid_from_json(json{{"N", 17}, {"L", 2.0}}, 2);
    EXPECT_EQ(g.dims, (std::vector<int>{17, 17}));
    EXPECT_DOUBLE_EQ(g.h, 0.25);
    EXPECT_THROW(cli::grid_from_json(json{{"N", 2}}, 2), ConfigError);
    EXPECT_THROW(cli::grid_from_json(json{{"dims", {5}}, {"origin", {0.0}}, {"spacing", 0.1}}, 2), ConfigError);
    EXPECT_THROW(cli::preset_from_json(json{{"kind", "spiral"}}), ConfigError);
    EXPECT_EQ(cli::preset_from_json(json{{"kind", "poly"}, {"k", 3}}).k, 3);
}

TEST(Binary, GenerateAffine) {
    auto dir = scratch("gen_affine");
    ASSERT_EQ(run("generate --out g " + kAffine + " --param input.grid.N=33", dir), 0);
    auto u = read_field(dir / "g/u.json");
    double worst = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double x[2];
        u.point(i, x);
        worst = std::max(worst, std::abs(u.at(i)[0] - (0.12 * x[0] - 0.05 * x[1] + 0.3)));
    }
    EXPECT_LE(worst, 1e-12);
    auto j = load(dir / "g/generate.json");
    EXPECT_LE(j["first_variation_residual"].get<double>(), 1e-10);
    EXPECT_EQ(j["config"]["params"]["N0"], 4);
}

TEST(Binary, GenerateTrigEnergyMonotone) {
    auto dir = scratch("gen_trig");
    ASSERT_EQ(run("generate --out g --param 'input.preset={\"kind\":\"trig\",\"eps\":0.1,\"k\":2}' --param input.grid.N=33", dir), 0);
    auto h = load(dir / "g/generate.json")["result"]["energy_history"].get<std::vector<double>>();
    ASSERT_GE(h.size(), 2u);
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]);
}

TEST(Binary, ExitCodes) {
    auto dir = scratch("exit_codes");
    std::string err;
    EXPECT_EQ(run("generate --out bad --param 'input.preset={\"kind\":\"trig\",\"eps\":0.4}'", dir, &err), 2);
    EXPECT_FALSE(fs::exists(dir / "bad"));
    EXPECT_NE(err.find("Lipschitz"), std::string::npos);

    EXPECT_EQ(run("excess --param input.field=nowhere/u.json", dir, &err), 2);
    EXPECT_NE(err.find("nowhere/u.json"), std::string::npos);

    EXPECT_EQ(run("excess --config missing.json", dir, &err), 2);
    EXPECT_NE(err.find("missing.json"), std::string::npos);

    EXPECT_EQ(run("", dir), 2);
    EXPECT_EQ(run("decay --seed notanumber", dir), 2);
    EXPECT_EQ(run("verify no-such-check", dir), 2);

    // one Newton step cannot reach the tolerance
    EXPECT_EQ(run("generate --out nc --param max_iter=1 --param tol=1e-14 --param 'input.preset={\"kind\":\"trig\",\"eps\":0.2}'", dir, &err), 3);

    // a field check with an unattainable bound is an assertion failure
    ASSERT_EQ(run("generate --out t --param 'input.preset={\"kind\":\"saddle\",\"eps\":0.1}' --param input.grid.N=33", dir), 0);
    EXPECT_EQ(run("verify taylor --out v --param input.field=t/u.json --param r=0.5 --param max_C=-1", dir), 1);
    EXPECT_EQ(run("verify taylor --out v --param input.field=t/u.json --param r=0.5", dir), 0);
}

TEST(Binary, Determinism) {
    auto dir = scratch("determinism");
    const std::string in = "--param 'input.preset={\"kind\":\"poly\",\"eps\":0.05,\"k\":3}' --param input.grid.N=41 --param input.minimize=true";
    ASSERT_EQ(run("decay --out a --param r0=0.5 " + in, dir), 0);
    ASSERT_EQ(run("decay --out b --param r0=0.5 " + in, dir), 0);
    EXPECT_EQ(slurp(dir / "a/decay.json"), slurp(dir / "b/decay.json"));
    EXPECT_EQ(slurp(dir / "a/decay.csv"), slurp(dir / "b/decay.csv"));
    ASSERT_EQ(run("verify minors-gram --out va --seed 3", dir), 0);
    ASSERT_EQ(run("verify minors-gram --out vb --seed 3", dir), 0);
    EXPECT_EQ(slurp(dir / "va/verify_minors-gram.json"), slurp(dir / "vb/verify_minors-gram.json"));
    auto j = load(dir / "va/verify_minors-gram.json");
    EXPECT_TRUE(j["report"]["pass"].get<bool>());
    EXPECT_EQ(j["config"]["seed"], 3);
}

TEST(Binary, CenterManifoldOnAffineInput) {
    auto dir = scratch("cm_affine");
    ASSERT_EQ(run("cm --out c " + kAffine + " --param input.grid.N=129 --param input.grid.L=2 --param k_max=5 --param cube_samples=2", dir), 0);
    auto j = load(dir / "c/cm.json");
    EXPECT_EQ(j["flat"], true);
    ASSERT_EQ(j["levels"].size(), 2u);
    for (auto& lv : j["levels"]) {
        EXPECT_TRUE(fs::exists(dir / "c" / lv["field"].get<std::string>()));
        EXPECT_LE(lv["norms"]["dist_u"].get<double>(), 1e-10);
    }
    for (auto& s : j["estimates"]["ratios"]) EXPECT_EQ(s["max"].get<double>(), 0) << s["name"];
    EXPECT_TRUE(fs::exists(dir / "c/cubes.csv"));
    EXPECT_TRUE(fs::exists(dir / "c/pairs.csv"));

    // --level keeps one level and rejects levels outside [N0, k_max]
    ASSERT_EQ(run("cm --out one --level 5 " + kAffine + " --param input.grid.N=129 --param input.grid.L=2 --param k_max=5 --param cube_samples=2 --param estimates=false", dir), 0);
    EXPECT_EQ(load(dir / "one/cm.json")["levels"].size(), 1u);
    EXPECT_FALSE(fs::exists(dir / "one/zeta_4.json"));
    EXPECT_EQ(run("cm --out no --level 9 " + kAffine + " --param k_max=5", dir), 2);
}
