#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prunenet/analysis.hpp"
#include "prunenet/checkpoint.hpp"
#include "prunenet/errors.hpp"
#include "prunenet/model.hpp"
#include "prunenet/parallel.hpp"
#include "prunenet/policy.hpp"
#include "prunenet/pruner.hpp"
#include "prunenet/spectral.hpp"
#include "prunenet/toyeval.hpp"

namespace prunenet::cli {

constexpr const char* kToolVersion = "0.1.0";

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

inline void write_run_manifest(const std::filesystem::path& dir, const std::string& command,
                               const std::vector<std::string>& argv, std::uint64_t seed,
                               const std::string& started) {
    nlohmann::json manifest = {{"command", command},
                               {"argv", argv},
                               {"seed", seed},
                               {"tool_version", kToolVersion},
                               {"started_utc", started},
                               {"finished_utc", utc_timestamp()}};
    write_text(dir / "run.json", manifest.dump(2) + "\n");
}

inline std::string format_sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::vector<double> parse_ratios(const std::string& text, std::size_t layers) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const double r = std::stod(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            out.push_back(r);
        } catch (const std::exception&) {
            throw DomainError("cannot parse ratio '" + item + "'");
        }
    }
    require(!out.empty(), "no ratios given");
    if (out.size() == 1) out.assign(layers, out[0]);
    require(out.size() == layers,
            "expected 1 or " + std::to_string(layers) + " ratios, got " + std::to_string(out.size()));
    for (double r : out)
        require(r >= 0.0 && r < 1.0,
                "ratio " + format_sig9(r) + " outside the valid range [0, 1)");
    return out;
}

inline RewardKind parse_reward(const std::string& s) {
    if (s == "ks") return RewardKind::KS;
    if (s == "ad") return RewardKind::AD;
    throw DomainError("unknown reward '" + s + "' (expected ks or ad)");
}

inline PruneTarget parse_target(const std::string& s) {
    if (s == "ffn") return PruneTarget::FFN;
    if (s == "attn") return PruneTarget::Attention;
    if (s == "both") return PruneTarget::Both;
    throw DomainError("unknown target '" + s + "'");
}

inline SelectorKind parse_selector(const std::string& s) {
    if (s == "policy") return SelectorKind::Policy;
    if (s == "random") return SelectorKind::Random;
    if (s == "topk") return SelectorKind::TopK;
    throw DomainError("unknown selector '" + s + "'");
}

inline std::string target_name(PruneTarget t) {
    switch (t) {
        case PruneTarget::FFN: return "ffn";
        case PruneTarget::Attention: return "attn";
        case PruneTarget::Both: return "both";
    }
    return "ffn";
}

inline std::string selector_name(SelectorKind s) {
    switch (s) {
        case SelectorKind::Policy: return "policy";
        case SelectorKind::Random: return "random";
        case SelectorKind::TopK: return "topk";
    }
    return "policy";
}

inline nlohmann::json plan_to_json(const CompressionPlan& plan,
                                   const std::vector<LayerDiag>& diags) {
    nlohmann::json per_layer = nlohmann::json::array();
    for (std::size_t l = 0; l < diags.size(); ++l) {
        nlohmann::json entry = {{"layer", l}, {"ratio", plan.per_layer_ratio[l]}};
        if (diags[l].ffn)
            entry["ffn"] = {{"keep_count", diags[l].ffn->kept.size()},
                            {"ks_distance", diags[l].ffn->ks_distance}};
        if (diags[l].attn)
            entry["attn"] = {{"keep_count", diags[l].attn->kept.size()},
                             {"ks_distance", diags[l].attn->ks_distance}};
        per_layer.push_back(entry);
    }
    return {{"target", target_name(plan.target)},
            {"selector", selector_name(plan.selector)},
            {"seed", plan.seed},
            {"per_layer", per_layer}};
}

inline nlohmann::json drift_to_json(const DriftMetrics& m) {
    return {{"mse", m.mse}, {"max_abs", m.max_abs}, {"cosine_mean", m.cosine_mean}};
}

}  // namespace detail

struct CommonOut {
    std::string out;
    std::uint64_t seed = 0;
};

// Parses argv (excluding the program name) and runs one subcommand.
// Exit codes: 0 success, 1 domain/usage error, 2 I/O error.
inline int dispatch(const std::vector<std::string>& args) {
    const std::string started = detail::utc_timestamp();

    CLI::App app{"Calibration-free structured pruning for transformer-style checkpoints"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker cap (0 = hardware concurrency)");

    // synth -----------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "synthesize a random model checkpoint");
    struct {
        std::size_t d_hidden = 64, d_intermediate = 256, layers = 4, vocab = 128, heads = 4;
        std::string ffn = "two", activation = "gelu", out;
        bool biases = false;
        std::uint64_t seed = 0;
    } sy;
    synth->add_option("--d-hidden", sy.d_hidden, "hidden width");
    synth->add_option("--d-intermediate", sy.d_intermediate, "FFN width");
    synth->add_option("--layers", sy.layers, "layer count");
    synth->add_option("--vocab", sy.vocab, "vocabulary size");
    synth->add_option("--heads", sy.heads, "attention heads");
    synth->add_option("--ffn", sy.ffn, "FFN style: two|gated");
    synth->add_option("--activation", sy.activation, "activation: gelu|silu");
    synth->add_flag("--biases", sy.biases, "attach zero FFN biases (two-matrix style only)");
    synth->add_option("--seed", sy.seed, "RNG seed")->envname("PRUNENET_SEED");
    synth->add_option("--out", sy.out, "output checkpoint directory")->required();

    // spectrum --------------------------------------------------------------
    auto* spectrum = app.add_subcommand("spectrum", "emit per-layer FFN1 singular values as CSV");
    struct {
        std::string model, out;
    } sp;
    spectrum->add_option("--model", sp.model, "model checkpoint")->required();
    spectrum->add_option("--out", sp.out, "output directory")->required();

    // train-policy ----------------------------------------------------------
    auto* train = app.add_subcommand("train-policy", "train the row-selection policy");
    struct {
        std::string model, reward = "ks", out;
        double ratio = 0.3, gamma = 0.99, lr = 5e-4;
        std::size_t episodes = 20;
        std::uint64_t seed = 0;
    } tr;
    train->add_option("--model", tr.model, "model checkpoint")->required();
    train->add_option("--ratio", tr.ratio, "compression ratio in (0,1)");
    train->add_option("--gamma", tr.gamma, "discount factor");
    train->add_option("--lr", tr.lr, "AdamW learning rate");
    train->add_option("--episodes", tr.episodes, "training episodes");
    train->add_option("--seed", tr.seed, "RNG seed")->envname("PRUNENET_SEED");
    train->add_option("--reward", tr.reward, "penalty measure: ks|ad");
    train->add_option("--out", tr.out, "output directory (policy checkpoint + history.json)")
        ->required();

    // prune -----------------------------------------------------------------
    auto* prune = app.add_subcommand("prune", "apply a selection policy and slice the model");
    struct {
        std::string model, policy = "none", ratio = "0.3", target = "ffn", selector = "policy", out;
        std::uint64_t seed = 0;
    } pr;
    prune->add_option("--model", pr.model, "input model checkpoint")->required();
    prune->add_option("--policy", pr.policy, "policy checkpoint, or 'none'");
    prune->add_option("--ratio", pr.ratio, "ratio r, or comma list of L ratios");
    prune->add_option("--target", pr.target, "ffn|attn|both");
    prune->add_option("--selector", pr.selector, "policy|random|topk");
    prune->add_option("--seed", pr.seed, "RNG seed")->envname("PRUNENET_SEED");
    prune->add_option("--out", pr.out, "output checkpoint directory")->required();

    // report ----------------------------------------------------------------
    auto* report = app.add_subcommand("report", "compression accounting for a pruned model");
    struct {
        std::string before, after, plan, out;
        std::size_t seq_len = 1024;
    } re;
    report->add_option("--before", re.before, "original checkpoint")->required();
    report->add_option("--after", re.after, "compressed checkpoint")->required();
    report->add_option("--plan", re.plan, "plan.json from prune")->required();
    report->add_option("--seq-len", re.seq_len, "sequence length for the FLOPs estimate");
    report->add_option("--out", re.out, "output directory")->required();

    // eval-drift ------------------------------------------------------------
    auto* drift = app.add_subcommand("eval-drift", "output drift between two checkpoints");
    struct {
        std::string original, compressed, out;
        std::size_t probes = 16;
        std::uint64_t seed = 0;
    } dr;
    drift->add_option("--original", dr.original, "original checkpoint")->required();
    drift->add_option("--compressed", dr.compressed, "compressed checkpoint")->required();
    drift->add_option("--probes", dr.probes, "number of probe batches");
    drift->add_option("--seed", dr.seed, "RNG seed")->envname("PRUNENET_SEED");
    drift->add_option("--out", dr.out, "optional output directory");

    // threshold -------------------------------------------------------------
    auto* threshold = app.add_subcommand("threshold", "intrinsic-compression break-even ratio");
    struct {
        std::size_t d_hidden = 0, d_intermediate = 0;
        std::string out;
    } th;
    threshold->add_option("--d-hidden", th.d_hidden, "hidden width")->required();
    threshold->add_option("--d-intermediate", th.d_intermediate, "FFN width")->required();
    threshold->add_option("--out", th.out, "optional output directory");

    std::vector<std::string> cli_args(args.rbegin(), args.rend());  // CLI11 wants reversed
    try {
        app.parse(cli_args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    worker_cap() = threads;

    try {
        if (*synth) {
            ModelConfig config{sy.d_hidden, sy.d_intermediate, sy.layers, sy.vocab, sy.heads,
                               sy.ffn == "gated" ? FfnStyle::GatedThreeMatrix : FfnStyle::TwoMatrix,
                               activation_from_string(sy.activation), sy.biases};
            if (sy.ffn != "two" && sy.ffn != "gated")
                throw DomainError("unknown ffn style '" + sy.ffn + "'");
            if (config.d_intermediate == config.d_hidden)
                std::cerr << "warning: d_intermediate equals d_hidden\n";
            Model model = synthesize_model(config, sy.seed);
            save_checkpoint(model, sy.out);
            detail::write_run_manifest(sy.out, "synth", args, sy.seed, started);
        } else if (*spectrum) {
            Model model = load_checkpoint(sp.model);
            std::vector<std::string> rows(model.layers.size());
            parallel_for(model.layers.size(), [&](std::size_t l) {
                SpectrumSummary s = singular_values(model.layers[l].ffn.w_up);
                std::string block;
                for (std::size_t i = 0; i < s.values.size(); ++i) {
                    const double v = s.values[s.values.size() - 1 - i];  // ascending
                    block += std::to_string(l) + "," + std::to_string(i) + "," +
                             detail::format_sig9(v) + "\n";
                }
                rows[l] = std::move(block);
            });
            std::string csv = "layer,index,singular_value\n";
            for (const auto& r : rows) csv += r;
            detail::write_text(std::filesystem::path(sp.out) / "spectrum.csv", csv);
            detail::write_run_manifest(sp.out, "spectrum", args, 0, started);
        } else if (*train) {
            Model model = load_checkpoint(tr.model);
            TrainConfig config;
            config.ratio = tr.ratio;
            config.gamma = tr.gamma;
            config.learning_rate = tr.lr;
            config.episodes = tr.episodes;
            config.seed = tr.seed;
            config.reward = detail::parse_reward(tr.reward);
            TrainResult result = train_policy(model, config);
            save_policy_checkpoint(result.params, model.config, tr.out);
            nlohmann::json episodes = nlohmann::json::array();
            for (std::size_t e = 0; e < result.history.size(); ++e) {
                const EpisodeStats& st = result.history[e];
                episodes.push_back({{"episode", e},
                                    {"per_layer_penalty", st.per_layer_penalty},
                                    {"returns", st.returns},
                                    {"loss", st.loss},
                                    {"grad_norm", st.grad_norm}});
            }
            nlohmann::json history = {{"episodes", episodes}};
            detail::write_text(std::filesystem::path(tr.out) / "history.json",
                               history.dump(2) + "\n");
            detail::write_run_manifest(tr.out, "train-policy", args, tr.seed, started);
        } else if (*prune) {
            Model model = load_checkpoint(pr.model);
            CompressionPlan plan;
            plan.per_layer_ratio = detail::parse_ratios(pr.ratio, model.layers.size());
            plan.target = detail::parse_target(pr.target);
            plan.selector = detail::parse_selector(pr.selector);
            plan.seed = pr.seed;
            std::optional<LoadedPolicy> policy;
            if (pr.policy != "none") policy = load_policy_checkpoint(pr.policy);
            CompressionResult result =
                compress_model(model, policy ? &policy->params : nullptr, plan);
            save_checkpoint(result.model, pr.out);
            detail::write_text(std::filesystem::path(pr.out) / "plan.json",
                               detail::plan_to_json(plan, result.layers).dump(2) + "\n");
            detail::write_run_manifest(pr.out, "prune", args, pr.seed, started);
        } else if (*report) {
            Model before = load_checkpoint(re.before);
            Model after = load_checkpoint(re.after);
            std::ifstream pf(re.plan);
            if (!pf) throw IoError("cannot open " + re.plan);
            nlohmann::json plan_json;
            try {
                pf >> plan_json;
            } catch (const nlohmann::json::exception& e) {
                throw IoError(std::string("malformed plan.json: ") + e.what());
            }
            std::vector<double> ratios;
            std::vector<ReportLayer> layers;
            try {
                for (const auto& entry : plan_json.at("per_layer")) {
                    ratios.push_back(entry.at("ratio").get<double>());
                    const auto& slice = entry.contains("ffn") ? entry.at("ffn") : entry.at("attn");
                    layers.push_back({entry.at("layer").get<std::size_t>(),
                                      slice.at("keep_count").get<std::size_t>(),
                                      slice.at("ks_distance").get<double>()});
                }
            } catch (const nlohmann::json::exception& e) {
                throw IoError(std::string("malformed plan.json: ") + e.what());
            }
            CompressionReport rep = build_report(before, after, ratios, layers, re.seq_len);
            detail::write_text(std::filesystem::path(re.out) / "report.json",
                               to_json(rep).dump(2) + "\n");
            std::string csv = "layer,kept_rows,ks_distance\n";
            for (const auto& l : rep.per_layer)
                csv += std::to_string(l.layer) + "," + std::to_string(l.kept_rows) + "," +
                       detail::format_sig9(l.ks_distance) + "\n";
            detail::write_text(std::filesystem::path(re.out) / "report.csv", csv);
            detail::write_run_manifest(re.out, "report", args, 0, started);
        } else if (*drift) {
            Model original = load_checkpoint(dr.original);
            Model compressed = load_checkpoint(dr.compressed);
            DriftMetrics metrics = output_drift(original, compressed, dr.probes, dr.seed);
            std::cout << detail::drift_to_json(metrics).dump(2) << "\n";
            if (!dr.out.empty()) {
                detail::write_text(std::filesystem::path(dr.out) / "drift.json",
                                   detail::drift_to_json(metrics).dump(2) + "\n");
                detail::write_run_manifest(dr.out, "eval-drift", args, dr.seed, started);
            }
        } else if (*threshold) {
            const double value = intrinsic_threshold(th.d_hidden, th.d_intermediate);
            std::cout << detail::format_sig9(value) << "\n";
            if (!th.out.empty()) {
                nlohmann::json j = {{"d_hidden", th.d_hidden},
                                    {"d_intermediate", th.d_intermediate},
                                    {"threshold", value}};
                detail::write_text(std::filesystem::path(th.out) / "threshold.json",
                                   j.dump(2) + "\n");
                detail::write_run_manifest(th.out, "threshold", args, 0, started);
            }
        }
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

inline int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace prunenet::cli
