// Acceptance gate: one line per criterion, nonzero exit on any failure.
// Every tolerance is pinned in code; seeds are fixed so reruns agree.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "prunenet/analysis.hpp"
#include "prunenet/checkpoint.hpp"
#include "prunenet/cli.hpp"
#include "prunenet/model.hpp"
#include "prunenet/policy.hpp"
#include "prunenet/pruner.hpp"
#include "prunenet/spectral.hpp"
#include "prunenet/toyeval.hpp"

using namespace prunenet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

ModelConfig synthetic_config(std::size_t n, std::size_t d, std::size_t layers) {
    ModelConfig c;
    c.d_hidden = d;
    c.d_intermediate = n;
    c.n_layers = layers;
    c.vocab_size = 64;
    c.n_heads = 4;
    return c;
}

// Exact one-sided binomial tail P(X >= wins | n, 1/2).
double sign_test_p(int wins, int n) {
    double total = 0.0;
    for (int k = wins; k <= n; ++k) {
        double c = 1.0;
        for (int i = 0; i < k; ++i) c = c * double(n - i) / double(i + 1);
        total += c;
    }
    return total * std::pow(0.5, n);
}

// Mean KS penalty of a selection rule over eval rounds, all layers, using
// cached full spectra.
template <typename SelectFn>
double mean_ks(const Model& model, const std::vector<std::vector<double>>& sv_full,
               std::size_t keep, std::size_t rounds, SelectFn&& select) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t round = 0; round < rounds; ++round)
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& w = model.layers[l].ffn.w_up;
            auto kept = select(l, round, w);
            total += ks_distance(sv_full[l],
                                 singular_values(gather_rows(w, kept)).values);
            ++count;
        }
    return total / double(count);
}

std::vector<std::vector<double>> full_spectra(const Model& model) {
    std::vector<std::vector<double>> sv(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        sv[l] = singular_values(model.layers[l].ffn.w_up).values;
    return sv;
}

void criterion_1() {
    auto start = Clock::now();
    bool ok = true;
    std::string detail;

    const double phi = intrinsic_threshold(2560, 10240);
    ok &= std::fabs(phi - 0.2941) <= 0.0001;

    std::vector<ModelConfig> configs = {
        synthetic_config(11008, 4096, 32), synthetic_config(10240, 2560, 32),
        synthetic_config(3072, 768, 12),   synthetic_config(1024, 128, 4),
        synthetic_config(64, 64, 2)};
    configs[0].vocab_size = 32000;
    configs[1].vocab_size = 51200;
    configs[2].vocab_size = 50257;
    for (const ModelConfig& c : configs) {
        const double thr = intrinsic_threshold(c.d_hidden, c.d_intermediate);
        for (int i = 0; i < 100; ++i) {
            const double r = double(i) / 100.0;
            IntrinsicParamCounts counts = intrinsic_param_counts(c, r);
            ok &= (r > thr) == (counts.compressed < counts.uncompressed);
        }
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 1.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "lemma threshold %.4f (want 0.2941 +- 0.0001), biconditional on 100-pt grid x 5 "
                  "configs, %.2fs",
                  phi, elapsed);
    report(1, ok, buf);
}

void criterion_2() {
    auto start = Clock::now();
    ModelConfig llama = synthetic_config(11008, 4096, 32);
    llama.vocab_size = 32000;
    llama.n_heads = 32;
    llama.ffn_style = FfnStyle::GatedThreeMatrix;

    const std::size_t keep = keep_count_for(0.30, llama.d_intermediate);
    std::vector<std::size_t> keeps(llama.n_layers, keep);
    const double eff =
        1.0 - double(config_param_count(llama, keeps)) / double(config_param_count(llama));
    const double dense = flops_estimate(llama, 1024);
    const double pruned = flops_estimate(llama, 1024, keeps);
    const double ratio = dense / pruned;

    bool ok = std::fabs(eff - 0.19) <= 0.01;
    ok &= std::fabs(ratio - 1.24) <= 0.05;
    ok &= std::fabs(dense - 1.35e13) / 1.35e13 <= 0.10;
    const double elapsed = seconds_since(start);
    ok &= elapsed < 1.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "effective sparsity %.4f (want 0.19 +- 0.01), flops ratio %.3f (want 1.24 +- "
                  "0.05), dense %.3e (want 1.35e13 +- 10%%), %.2fs",
                  eff, ratio, dense, elapsed);
    report(2, ok, buf);
}

void criterion_3() {
    auto start = Clock::now();
    bool ok = true;
    std::string parts;
    Rng rng(0xACC3);
    const std::size_t draws = 100000;
    for (double alpha : {0.1, 0.3, 0.5, 0.9}) {
        std::vector<double> imp(1, alpha), eps(1);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < draws; ++i) {
            eps[0] = rng.uniform();
            if (perturb_importance(imp, eps)[0] >= 0.5) ++ones;
        }
        const double mean = double(ones) / double(draws);
        ok &= std::fabs(mean - alpha) <= 0.01;
        char b[32];
        std::snprintf(b, sizeof(b), " %.4f", mean);
        parts += b;
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 5.0;
    report(3, ok,
           "thresholded reparametrization means{" + parts + " } match {0.1 0.3 0.5 0.9} +- 0.01, " +
               std::to_string(elapsed).substr(0, 4) + "s");
}

void criterion_4() {
    auto start = Clock::now();
    bool ok = true;
    Rng rng(0xACC4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + std::size_t(rng.below(31));
        const std::size_t d = 1 + std::size_t(rng.below(32));
        auto w = testutil::random_matrix(n, d, rng);
        const std::size_t k = 1 + std::size_t(rng.below(n));
        auto kept = testutil::random_subset(n, k, rng);
        RangeCheck rc = spectrum_range_check(w, kept);
        ok &= rc.min_ok && rc.max_ok;
    }
    // and on every layer actually pruned by compress_model
    ModelConfig c = synthetic_config(64, 16, 8);
    Model model = synthesize_model(c, 0xACC4);
    PolicyParams policy = init_policy(64, 16, 0xACC4);
    CompressionPlan plan = uniform_plan(0.3, 8, PruneTarget::FFN, SelectorKind::Policy, 0xACC4);
    CompressionResult res = compress_model(model, &policy, plan);
    for (std::size_t l = 0; l < 8; ++l) {
        RangeCheck rc = spectrum_range_check(model.layers[l].ffn.w_up, res.layers[l].ffn->kept);
        ok &= rc.min_ok && rc.max_ok;
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "spectrum range subset holds on 200 random slicings + 8 compressed layers at "
                  "1e-8 rel tol, %.2fs",
                  elapsed);
    report(4, ok, buf);
}

void criterion_5() {
    auto start = Clock::now();
    bool ks_ok = true;
    double ad_worst = 0.0;
    Rng rng(0xACC5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t na = 1 + std::size_t(rng.below(15));
        const std::size_t nb = 1 + std::size_t(rng.below(15));
        std::vector<double> a(na), b(nb);
        for (double& v : a) v = std::floor(rng.uniform() * 8.0);
        for (double& v : b) v = std::floor(rng.uniform() * 8.0);
        ks_ok &= ks_distance(a, b) == testutil::ks_bruteforce(a, b);
        if (na >= 2 && nb >= 2)
            ad_worst = std::max(ad_worst,
                                std::fabs(ad_distance(a, b) - testutil::ad_bruteforce(a, b)));
    }
    bool ok = ks_ok && ad_worst <= 1e-10;
    const double elapsed = seconds_since(start);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "KS exact match on 1000 pairs: %s; AD worst dev %.2e (want <= 1e-10), %.2fs",
                  ks_ok ? "yes" : "no", ad_worst, elapsed);
    report(5, ok, buf);
}

void criterion_6() {
    auto start = Clock::now();
    bool ok = true;
    double worst = 0.0;
    Rng shapes(0xACC6);
    for (int instance = 0; instance < 20; ++instance) {
        const std::size_t d = 2 + std::size_t(shapes.below(15));        // up to 16
        const std::size_t n = d + std::size_t(shapes.below(33 - d));    // up to 32, n >= d
        ModelConfig c = synthetic_config(n, d, 3);
        c.n_heads = 1;
        Model model = synthesize_model(c, 0xACC6 + instance);
        PolicyParams policy = init_policy(n, d, 77 + instance);
        TrainConfig config;
        config.ratio = 0.25 + 0.5 * shapes.uniform() * 0.5;
        Rng rng(derive_seed(0xACC6, instance, 1));
        EpisodeResult episode = policy_gradient(model, policy, config, rng);

        auto loss_at = [&](PolicyParams& p) { return selection_loss(model, p, episode.frozen); };
        const double h = 1e-5;
        double diff_sq = 0.0, ref_sq = 0.0;
        auto fd_check = [&](Matrix<double>& param, const Matrix<double>& analytic) {
            for (std::size_t i = 0; i < param.data().size(); ++i) {
                const double saved = param.data()[i];
                param.data()[i] = saved + h;
                const double up = loss_at(policy);
                param.data()[i] = saved - h;
                const double down = loss_at(policy);
                param.data()[i] = saved;
                const double fd = (up - down) / (2.0 * h);
                diff_sq += (analytic.data()[i] - fd) * (analytic.data()[i] - fd);
                ref_sq += fd * fd;
            }
        };
        fd_check(policy.w_inter, episode.grads.w_inter);
        fd_check(policy.w_proj, episode.grads.w_proj);
        const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(ref_sq), 1e-12);
        worst = std::max(worst, rel);
        ok &= rel <= 1e-4;
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "policy gradients vs central differences on 20 instances, worst rel err %.2e "
                  "(want <= 1e-4), %.2fs",
                  worst, elapsed);
    report(6, ok, buf);
}

void criterion_7() {
    auto start = Clock::now();
    const std::size_t n = 256, d = 64, layers = 8;
    const double ratio = 0.3;
    const std::size_t keep = keep_count_for(ratio, n);
    const std::size_t eval_rounds = 32;
    const int n_seeds = 20;

    int wins = 0, losses = 0;
    double policy_ks_total = 0.0, random_ks_total = 0.0;
    double policy_drift_total = 0.0, random_drift_total = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed) {
        ModelConfig c = synthetic_config(n, d, layers);
        Model model = synthesize_model(c, derive_seed(0xACC7, std::uint64_t(seed), 0));

        TrainConfig tc;
        tc.ratio = ratio;
        tc.gamma = 0.99;
        tc.learning_rate = 5e-4;
        tc.episodes = 20;
        tc.seed = derive_seed(0xACC7, std::uint64_t(seed), 1);
        TrainResult trained = train_policy(model, tc);

        auto sv_full = full_spectra(model);
        std::vector<std::vector<double>> imps(layers);
        for (std::size_t l = 0; l < layers; ++l)
            imps[l] = importance_scores(model.layers[l].ffn.w_up, trained.params);

        const double pol_ks =
            mean_ks(model, sv_full, keep, eval_rounds,
                    [&](std::size_t l, std::size_t round, const Matrix<float>& w) {
                        Rng rng(derive_seed(0xACC7 + 11, std::uint64_t(seed * 1000 + round), l));
                        std::vector<double> eps(w.rows());
                        for (double& e : eps) e = rng.uniform();
                        return sample_indices(perturb_importance(imps[l], eps), keep, rng);
                    });
        const double rnd_ks =
            mean_ks(model, sv_full, keep, eval_rounds,
                    [&](std::size_t l, std::size_t round, const Matrix<float>& w) {
                        Rng rng(derive_seed(0xACC7 + 13, std::uint64_t(seed * 1000 + round), l));
                        return random_selection(w.rows(), keep, rng);
                    });
        policy_ks_total += pol_ks;
        random_ks_total += rnd_ks;
        if (pol_ks < rnd_ks) ++wins;
        else if (pol_ks > rnd_ks) ++losses;

        CompressionPlan ppol =
            uniform_plan(ratio, layers, PruneTarget::FFN, SelectorKind::Policy,
                         derive_seed(0xACC7, std::uint64_t(seed), 2));
        CompressionPlan prnd =
            uniform_plan(ratio, layers, PruneTarget::FFN, SelectorKind::Random,
                         derive_seed(0xACC7, std::uint64_t(seed), 3));
        Model pol_model = compress_model(model, &trained.params, ppol).model;
        Model rnd_model = compress_model(model, nullptr, prnd).model;
        const std::uint64_t probe_seed = derive_seed(0xACC7, std::uint64_t(seed), 4);
        policy_drift_total += output_drift(model, pol_model, 16, probe_seed).mse;
        random_drift_total += output_drift(model, rnd_model, 16, probe_seed).mse;
    }
    const double p = sign_test_p(wins, wins + losses);
    const bool mean_ok = policy_ks_total <= random_ks_total;
    const bool sign_ok = p < 0.05;
    const bool drift_ok = policy_drift_total <= random_drift_total;
    const double elapsed = seconds_since(start);
    bool ok = mean_ok && sign_ok && drift_ok && elapsed < 300.0;
    char buf[260];
    std::snprintf(buf, sizeof(buf),
                  "trained-vs-random: mean KS %.5f vs %.5f (%s), sign test %d/%d wins p=%.3f "
                  "(want < 0.05: %s), drift mse %.4f vs %.4f (%s), %.0fs",
                  policy_ks_total / n_seeds, random_ks_total / n_seeds, mean_ok ? "ok" : "FAIL",
                  wins, wins + losses, p, sign_ok ? "ok" : "FAIL",
                  policy_drift_total / n_seeds, random_drift_total / n_seeds,
                  drift_ok ? "ok" : "FAIL", elapsed);
    report(7, ok, buf);
}

void criterion_8() {
    auto start = Clock::now();
    const std::size_t n = 256, d = 64, layers = 8;
    const std::size_t eval_rounds = 8;
    const int n_seeds = 10;
    const std::vector<double> targets = {0.2, 0.25, 0.3};

    bool ok = true;
    std::string detail = "policy reuse 0.4 ->";
    for (double r : targets) {
        double reused_total = 0.0, native_total = 0.0;
        for (int seed = 0; seed < n_seeds; ++seed) {
            ModelConfig c = synthetic_config(n, d, layers);
            Model model = synthesize_model(c, derive_seed(0xACC8, std::uint64_t(seed), 0));
            auto sv_full = full_spectra(model);

            auto train_at = [&](double train_ratio, std::uint64_t tag) {
                TrainConfig tc;
                tc.ratio = train_ratio;
                tc.gamma = 0.99;
                tc.learning_rate = 5e-4;
                tc.episodes = 20;
                tc.seed = derive_seed(0xACC8, std::uint64_t(seed), tag);
                return train_policy(model, tc);
            };
            TrainResult high = train_at(0.4, 1);
            TrainResult native = train_at(r, 2);

            const std::size_t keep = keep_count_for(r, n);
            auto eval_policy = [&](const PolicyParams& params, std::uint64_t tag) {
                std::vector<std::vector<double>> imps(layers);
                for (std::size_t l = 0; l < layers; ++l)
                    imps[l] = importance_scores(model.layers[l].ffn.w_up, params);
                return mean_ks(model, sv_full, keep, eval_rounds,
                               [&](std::size_t l, std::size_t round, const Matrix<float>& w) {
                                   Rng rng(derive_seed(tag, std::uint64_t(seed * 100 + round), l));
                                   std::vector<double> eps(w.rows());
                                   for (double& e : eps) e = rng.uniform();
                                   return sample_indices(perturb_importance(imps[l], eps), keep,
                                                         rng);
                               });
            };
            reused_total += eval_policy(high.params, 0xACC8 + 21);
            native_total += eval_policy(native.params, 0xACC8 + 23);

            // reuse must also produce structurally valid compressions
            CompressionPlan plan = uniform_plan(r, layers, PruneTarget::FFN, SelectorKind::Policy,
                                                derive_seed(0xACC8, std::uint64_t(seed), 5));
            Model reused_model = compress_model(model, &high.params, plan).model;
            validate(reused_model);
            for (const Layer& l : reused_model.layers) ok &= l.ffn.n_rows() == keep;
        }
        const double reused = reused_total / n_seeds;
        const double native = native_total / n_seeds;
        const double rel = std::fabs(reused - native) / native;
        ok &= rel <= 0.25;
        char b[96];
        std::snprintf(b, sizeof(b), " r=%.2f: reused %.4f native %.4f rel %.3f;", r, reused,
                      native, rel);
        detail += b;
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 600.0;
    char b[48];
    std::snprintf(b, sizeof(b), " (want rel <= 0.25) %.0fs", elapsed);
    report(8, ok, detail + b);
}

int run_cli(const std::vector<std::string>& args) {
    std::ostringstream sink;
    std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
    const int code = cli::dispatch(args);
    std::cout.rdbuf(old);
    return code;
}

void criterion_9() {
    auto start = Clock::now();
    testutil::TempDir tmp("acc9");
    bool ok = true;

    ModelConfig c = synthetic_config(24, 8, 3);
    c.ffn_style = FfnStyle::GatedThreeMatrix;
    Model m = synthesize_model(c, 0xACC9);
    save_checkpoint(m, tmp.path() / "m");
    ok &= load_checkpoint(tmp.path() / "m") == m;

    CompressionPlan plan{{0.2, 0.4, 0.0}, PruneTarget::FFN, SelectorKind::Random, 0xACC9};
    Model pruned = compress_model(m, nullptr, plan).model;
    save_checkpoint(pruned, tmp.path() / "p");
    ok &= load_checkpoint(tmp.path() / "p") == pruned;

    auto pipeline = [&](const std::string& tag) {
        const std::string model = (tmp.path() / (tag + "_m")).string();
        const std::string policy = (tmp.path() / (tag + "_pol")).string();
        const std::string out = (tmp.path() / (tag + "_x")).string();
        ok &= run_cli({"synth", "--d-hidden", "8", "--d-intermediate", "24", "--layers", "3",
                       "--vocab", "16", "--heads", "2", "--seed", "41", "--out", model}) == 0;
        ok &= run_cli({"train-policy", "--model", model, "--ratio", "0.3", "--episodes", "3",
                       "--seed", "42", "--out", policy}) == 0;
        ok &= run_cli({"prune", "--model", model, "--policy", policy, "--ratio", "0.3", "--seed",
                       "43", "--out", out}) == 0;
        return std::array<std::string, 3>{model, policy, out};
    };
    auto a = pipeline("a");
    auto b = pipeline("b");
    for (std::size_t i = 0; i < a.size(); ++i)
        for (const char* leaf : {"manifest.json", "weights.bin", "history.json", "plan.json"}) {
            const fs::path fa = fs::path(a[i]) / leaf;
            if (!fs::exists(fa)) continue;
            ok &= testutil::same_bytes(fa, fs::path(b[i]) / leaf);
        }
    const double elapsed = seconds_since(start);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "PNCK round-trips bit-exact (dense + ragged) and CLI reruns byte-identical "
                  "outside run.json, %.1fs",
                  elapsed);
    report(9, ok, buf);
}

void criterion_10() {
    auto start = Clock::now();
    testutil::TempDir tmp("acc10");
    bool ok = true;

    const std::string model = (tmp.path() / "model").string();
    const std::string policy = (tmp.path() / "policy").string();
    const std::string pruned = (tmp.path() / "pruned").string();
    const std::string rep = (tmp.path() / "report").string();
    const std::string drift = (tmp.path() / "drift").string();

    ok &= run_cli({"synth", "--d-hidden", "16", "--d-intermediate", "64", "--layers", "4",
                   "--vocab", "32", "--heads", "4", "--ffn", "gated", "--activation", "silu",
                   "--seed", "10", "--out", model}) == 0;
    ok &= run_cli({"train-policy", "--model", model, "--ratio", "0.3", "--episodes", "20",
                   "--seed", "11", "--out", policy}) == 0;
    ok &= run_cli({"prune", "--model", model, "--policy", policy, "--ratio", "0.3", "--selector",
                   "policy", "--seed", "12", "--out", pruned}) == 0;
    ok &= run_cli({"report", "--before", model, "--after", pruned, "--plan",
                   (fs::path(pruned) / "plan.json").string(), "--seq-len", "128", "--out", rep}) == 0;
    ok &= run_cli({"eval-drift", "--original", model, "--compressed", pruned, "--probes", "8",
                   "--seed", "13", "--out", drift}) == 0;

    if (ok) {
        Model before = load_checkpoint(model);
        Model after = load_checkpoint(pruned);
        validate(before);
        validate(after);
        const std::size_t keep = keep_count_for(0.3, 64);
        for (const Layer& l : after.layers) ok &= l.ffn.n_rows() == keep;

        std::ifstream rj(fs::path(rep) / "report.json");
        nlohmann::json rjson;
        rj >> rjson;
        const double eff = rjson.at("effective_sparsity").get<double>();
        ok &= eff > 0.0 && eff <= 0.3 + 1e-9;
        ok &= rjson.at("params_after").get<std::uint64_t>() ==
              std::uint64_t(std::llround(rjson.at("params_before").get<double>() * (1.0 - eff)));
        ok &= rjson.at("flops_before").get<double>() > rjson.at("flops_after").get<double>();

        std::ifstream dj(fs::path(drift) / "drift.json");
        nlohmann::json djson;
        dj >> djson;
        ok &= std::isfinite(djson.at("mse").get<double>());
        ok &= djson.at("mse").get<double>() > 0.0;
        ok &= djson.at("cosine_mean").get<double>() <= 1.0;
    }
    const double elapsed = seconds_since(start);
    ok &= elapsed < 60.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "synth -> train-policy -> prune -> report -> eval-drift pipeline with invariant "
                  "checks, %.1fs (want < 60s)",
                  elapsed);
    report(10, ok, buf);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d acceptance criteria failed\n", failures);
    return failures;
}
