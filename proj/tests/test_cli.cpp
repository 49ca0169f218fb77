#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "helpers.hpp"
#include "prunenet/checkpoint.hpp"
#include "prunenet/cli.hpp"

using namespace prunenet;
namespace fs = std::filesystem;

namespace {

struct CapturedRun {
    int exit_code = 0;
    std::string out;
    std::string err;
};

CapturedRun run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
    std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
    const int code = cli::dispatch(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

std::string p(const fs::path& base, const char* leaf) { return (base / leaf).string(); }

}  // namespace

TEST_CASE("threshold subcommand prints the published bound", "[cli]") {
    CapturedRun r = run_cli({"threshold", "--d-hidden", "2560", "--d-intermediate", "10240"});
    CHECK(r.exit_code == 0);
    CHECK(r.out.substr(0, 6) == "0.2941");
}

TEST_CASE("usage errors exit with code one", "[cli]") {
    CHECK(run_cli({"no-such-command"}).exit_code == 1);
    CHECK(run_cli({"threshold"}).exit_code == 1);  // missing required flags
    CHECK(run_cli({}).exit_code == 1);
}

TEST_CASE("out-of-range ratios exit with code one and cite the bounds", "[cli]") {
    testutil::TempDir tmp("cli_ratio");
    CapturedRun synth = run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "16", "--layers",
                                 "2", "--vocab", "12", "--heads", "2", "--seed", "5", "--out",
                                 p(tmp.path(), "m")});
    REQUIRE(synth.exit_code == 0);
    CapturedRun r = run_cli({"prune", "--model", p(tmp.path(), "m"), "--ratio", "1.5",
                             "--selector", "random", "--seed", "1", "--out", p(tmp.path(), "x")});
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("[0, 1)") != std::string::npos);
}

TEST_CASE("missing checkpoints exit with code two", "[cli]") {
    testutil::TempDir tmp("cli_io");
    CapturedRun r = run_cli({"spectrum", "--model", p(tmp.path(), "nowhere"), "--out",
                             p(tmp.path(), "out")});
    CHECK(r.exit_code == 2);
}

TEST_CASE("the full pipeline runs and writes run manifests", "[cli]") {
    testutil::TempDir tmp("cli_pipeline");
    const auto model = p(tmp.path(), "model");
    const auto policy = p(tmp.path(), "policy");
    const auto pruned = p(tmp.path(), "pruned");
    const auto report = p(tmp.path(), "report");
    const auto spec = p(tmp.path(), "spec");

    CHECK(run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "32", "--layers", "3",
                   "--vocab", "20", "--heads", "2", "--ffn", "gated", "--activation", "silu",
                   "--seed", "7", "--out", model})
              .exit_code == 0);
    CHECK(run_cli({"spectrum", "--model", model, "--out", spec}).exit_code == 0);
    CHECK(run_cli({"train-policy", "--model", model, "--ratio", "0.3", "--episodes", "3",
                   "--seed", "11", "--out", policy})
              .exit_code == 0);
    CHECK(run_cli({"prune", "--model", model, "--policy", policy, "--ratio", "0.3", "--selector",
                   "policy", "--seed", "13", "--out", pruned})
              .exit_code == 0);
    CHECK(run_cli({"report", "--before", model, "--after", pruned, "--plan",
                   (fs::path(pruned) / "plan.json").string(), "--seq-len", "64", "--out", report})
              .exit_code == 0);
    CapturedRun drift = run_cli({"eval-drift", "--original", model, "--compressed", pruned,
                                 "--probes", "2", "--seed", "3"});
    CHECK(drift.exit_code == 0);
    CHECK(drift.out.find("\"mse\"") != std::string::npos);

    for (const auto& dir : {model, policy, pruned, report, spec})
        CHECK(fs::exists(fs::path(dir) / "run.json"));
    CHECK(fs::exists(fs::path(policy) / "history.json"));
    CHECK(fs::exists(fs::path(pruned) / "plan.json"));
    CHECK(fs::exists(fs::path(report) / "report.json"));
    CHECK(fs::exists(fs::path(report) / "report.csv"));
    CHECK(fs::exists(fs::path(spec) / "spectrum.csv"));

    // the pruned output loads and respects the requested keep count
    Model compressed = load_checkpoint(pruned);
    for (const Layer& l : compressed.layers) CHECK(l.ffn.n_rows() == 22);  // round(0.7*32)
}

TEST_CASE("reruns with identical argv and seed are byte-identical", "[cli]") {
    testutil::TempDir tmp("cli_rerun");
    auto pipeline = [&](const std::string& root) {
        const auto model = p(tmp.path(), (root + "_m").c_str());
        const auto policy = p(tmp.path(), (root + "_p").c_str());
        const auto pruned = p(tmp.path(), (root + "_x").c_str());
        REQUIRE(run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "24", "--layers", "2",
                         "--vocab", "12", "--heads", "2", "--seed", "21", "--out", model})
                    .exit_code == 0);
        REQUIRE(run_cli({"train-policy", "--model", model, "--ratio", "0.25", "--episodes", "2",
                         "--seed", "22", "--out", policy})
                    .exit_code == 0);
        REQUIRE(run_cli({"prune", "--model", model, "--policy", policy, "--ratio", "0.25",
                         "--seed", "23", "--out", pruned})
                    .exit_code == 0);
        return std::array<std::string, 3>{model, policy, pruned};
    };
    auto a = pipeline("a");
    auto b = pipeline("b");
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (const char* leaf : {"manifest.json", "weights.bin"}) {
            if (!fs::exists(fs::path(a[i]) / leaf)) continue;
            CHECK(testutil::same_bytes(fs::path(a[i]) / leaf, fs::path(b[i]) / leaf));
        }
    }
    CHECK(testutil::same_bytes(fs::path(a[1]) / "history.json", fs::path(b[1]) / "history.json"));
    CHECK(testutil::same_bytes(fs::path(a[2]) / "plan.json", fs::path(b[2]) / "plan.json"));
}

TEST_CASE("PRUNENET_SEED is the fallback for --seed", "[cli]") {
    testutil::TempDir tmp("cli_env");
    setenv("PRUNENET_SEED", "77", 1);
    CHECK(run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "16", "--layers", "1",
                   "--vocab", "10", "--heads", "2", "--out", p(tmp.path(), "env")})
              .exit_code == 0);
    unsetenv("PRUNENET_SEED");
    CHECK(run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "16", "--layers", "1",
                   "--vocab", "10", "--heads", "2", "--seed", "77", "--out",
                   p(tmp.path(), "flag")})
              .exit_code == 0);
    CHECK(testutil::same_bytes(tmp.path() / "env" / "weights.bin",
                               tmp.path() / "flag" / "weights.bin"));
}

TEST_CASE("synth warns when the FFN width equals the hidden width", "[cli]") {
    testutil::TempDir tmp("cli_warn");
    CapturedRun r = run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "8", "--layers", "1",
                             "--vocab", "10", "--heads", "2", "--seed", "1", "--out",
                             p(tmp.path(), "eq")});
    CHECK(r.exit_code == 0);
    CHECK(r.err.find("warning") != std::string::npos);
}
