#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/model.hpp"
#include "prunenet/parallel.hpp"
#include "prunenet/policy.hpp"
#include "prunenet/spectral.hpp"

namespace prunenet {

enum class PruneTarget { FFN, Attention, Both };
enum class SelectorKind { Policy, Random, TopK };

struct CompressionPlan {
    std::vector<double> per_layer_ratio;  // length L
    PruneTarget target = PruneTarget::FFN;
    SelectorKind selector = SelectorKind::Policy;
    std::uint64_t seed = 0;
};

inline CompressionPlan uniform_plan(double ratio, std::size_t layers,
                                    PruneTarget target = PruneTarget::FFN,
                                    SelectorKind selector = SelectorKind::Policy,
                                    std::uint64_t seed = 0) {
    return {std::vector<double>(layers, ratio), target, selector, seed};
}

namespace detail {

inline void check_kept_indices(std::span<const std::size_t> kept, std::size_t bound,
                               const char* what) {
    require(!kept.empty(), std::string(what) + ": empty kept set");
    for (std::size_t i = 0; i < kept.size(); ++i) {
        require(kept[i] < bound, std::string(what) + ": index out of range");
        if (i > 0)
            require(kept[i] > kept[i - 1],
                    std::string(what) + ": indices must be strictly ascending (no duplicates)");
    }
}

}  // namespace detail

// Keep rows S of FFN1 (and the gate), the matching columns of
// FFN2, and the matching bias entries. Returns a fresh value.
inline FFNWeights prune_ffn_layer(const FFNWeights& ffn, std::span<const std::size_t> kept) {
    detail::check_kept_indices(kept, ffn.n_rows(), "prune_ffn_layer");
    FFNWeights out;
    out.w_up = gather_rows(ffn.w_up, kept);
    out.w_down = gather_cols(ffn.w_down, kept);
    if (ffn.w_gate) out.w_gate = gather_rows(*ffn.w_gate, kept);
    if (ffn.b_up) {
        std::vector<float> b(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) b[i] = (*ffn.b_up)[kept[i]];
        out.b_up = std::move(b);
    }
    out.b_down = ffn.b_down;
    return out;
}

// Attention variant: keep columns S of the output projection and rows S of
// q/k/v. S must keep the same number of channels in every head block.
inline AttentionWeights prune_attention_layer(const AttentionWeights& attn,
                                              std::span<const std::size_t> kept,
                                              std::size_t n_heads) {
    detail::check_kept_indices(kept, attn.d_attn(), "prune_attention_layer");
    require(n_heads >= 1 && attn.d_attn() % n_heads == 0,
            "prune_attention_layer: invalid head partition");
    require(kept.size() % n_heads == 0,
            "prune_attention_layer: kept size not divisible by n_heads");
    const std::size_t head_dim = attn.d_attn() / n_heads;
    const std::size_t per_head = kept.size() / n_heads;
    std::vector<std::size_t> per_block(n_heads, 0);
    for (std::size_t i : kept) per_block[i / head_dim] += 1;
    for (std::size_t c : per_block)
        require(c == per_head, "prune_attention_layer: kept indices break head uniformity");
    AttentionWeights out;
    out.w_q = gather_rows(attn.w_q, kept);
    out.w_k = gather_rows(attn.w_k, kept);
    out.w_v = gather_rows(attn.w_v, kept);
    out.w_o = gather_cols(attn.w_o, kept);
    return out;
}

struct SliceDiag {
    std::vector<std::size_t> kept;
    double ks_distance = 0.0;
};

struct LayerDiag {
    std::optional<SliceDiag> ffn;
    std::optional<SliceDiag> attn;
};

struct CompressionResult {
    Model model;
    std::vector<LayerDiag> layers;

    std::vector<double> ffn_ks() const {
        std::vector<double> out;
        for (const auto& l : layers) out.push_back(l.ffn ? l.ffn->ks_distance : 0.0);
        return out;
    }
};

namespace detail {

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

// Selection over the rows of a generic n x d state matrix.
template <typename T>
std::vector<std::size_t> select_rows(const Matrix<T>& state, SelectorKind selector,
                                     const PolicyParams* policy, std::size_t keep, Rng& rng) {
    switch (selector) {
        case SelectorKind::Random:
            return random_selection(state.rows(), keep, rng);
        case SelectorKind::TopK: {
            require(policy != nullptr, "compress_model: top-k selector needs a policy");
            return topk_selection(importance_scores(state, *policy), keep);
        }
        case SelectorKind::Policy: {
            require(policy != nullptr, "compress_model: policy selector needs a policy");
            std::vector<double> imp = importance_scores(state, *policy);
            std::vector<double> eps(imp.size());
            for (double& e : eps) e = rng.uniform();
            return sample_indices(perturb_importance(imp, eps), keep, rng);
        }
    }
    throw DomainError("compress_model: unknown selector");
}

// Head-uniform attention selection: per head block, keep the same number of
// channels, chosen by the selector restricted to that block.
inline std::vector<std::size_t> select_attention(const AttentionWeights& attn,
                                                 SelectorKind selector,
                                                 const PolicyParams* policy, double ratio,
                                                 std::size_t n_heads, Rng& rng) {
    const std::size_t d_attn = attn.d_attn();
    const std::size_t head_dim = d_attn / n_heads;
    std::size_t per_head = keep_count_for(ratio, head_dim);

    Matrix<float> state(d_attn, attn.d_hidden());  // w_o^T: rows are channels
    for (std::size_t i = 0; i < d_attn; ++i)
        for (std::size_t j = 0; j < attn.d_hidden(); ++j) state(i, j) = attn.w_o(j, i);

    std::vector<double> scores;
    if (selector != SelectorKind::Random) {
        require(policy != nullptr, "compress_model: selector needs a policy");
        scores = importance_scores(state, *policy);
        if (selector == SelectorKind::Policy) {
            std::vector<double> eps(scores.size());
            for (double& e : eps) e = rng.uniform();
            scores = perturb_importance(scores, eps);
        }
    }

    std::vector<std::size_t> kept;
    kept.reserve(per_head * n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t base = h * head_dim;
        std::vector<std::size_t> local;
        if (selector == SelectorKind::Random) {
            local = random_selection(head_dim, per_head, rng);
        } else {
            std::span<const double> block(scores.data() + base, head_dim);
            local = (selector == SelectorKind::TopK) ? topk_selection(block, per_head)
                                                     : sample_indices(block, per_head, rng);
        }
        for (std::size_t i : local) kept.push_back(base + i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace detail

inline void validate(const CompressionPlan& plan, const Model& model) {
    require(plan.per_layer_ratio.size() == model.layers.size(),
            "CompressionPlan: ratio count does not match layer count");
    for (std::size_t l = 0; l < plan.per_layer_ratio.size(); ++l) {
        const double r = plan.per_layer_ratio[l];
        require(r >= 0.0 && r < 1.0, "CompressionPlan: ratio outside [0,1)");
        if (plan.target != PruneTarget::Attention)
            require(std::floor((1.0 - r) * double(model.layers[l].ffn.n_rows())) >= 1.0,
                    "CompressionPlan: ratio removes every FFN row");
        if (plan.target != PruneTarget::FFN) {
            const std::size_t head_dim =
                model.layers[l].attention.d_attn() / model.config.n_heads;
            require(std::floor((1.0 - r) * double(head_dim)) >= 1.0,
                    "CompressionPlan: ratio removes every attention channel");
        }
    }
}

// Applies the plan layer by layer. d_hidden, vocab tensors and layer count
// are untouched; only FFN widths (and d_attn when targeted) shrink. KS
// diagnostics always measure the FFN1 (or w_o^T) spectrum shift, whatever the
// selector.
inline CompressionResult compress_model(const Model& model, const PolicyParams* policy,
                                        const CompressionPlan& plan) {
    validate(model);
    validate(plan, model);
    if (plan.selector == SelectorKind::Policy || plan.selector == SelectorKind::TopK)
        require(policy != nullptr, "compress_model: selector needs a policy");
    if (plan.selector == SelectorKind::Random)
        require(policy == nullptr, "compress_model: random selector takes no policy");
    if (policy && plan.target != PruneTarget::Attention)
        require(policy->n() == model.config.d_intermediate && policy->d() == model.config.d_hidden,
                "compress_model: policy shape does not match model FFN");

    const std::size_t layers = model.layers.size();
    CompressionResult result;
    result.model.config = model.config;
    result.model.embed = model.embed;
    result.model.head = model.head;
    result.model.layers.resize(layers);
    result.layers.resize(layers);

    parallel_for(layers, [&](std::size_t l) {
        const Layer& src = model.layers[l];
        Layer dst = src;
        const double ratio = plan.per_layer_ratio[l];
        LayerDiag diag;

        if (plan.target != PruneTarget::Attention) {
            const std::size_t n = src.ffn.n_rows();
            const std::size_t keep = keep_count_for(ratio, n);
            SliceDiag sd;
            if (keep == n) {
                sd.kept = detail::all_indices(n);
                sd.ks_distance = 0.0;
            } else {
                Rng rng(derive_seed(plan.seed, 0x0F0F + l, 0));
                if (policy)
                    require(policy->n() == n,
                            "compress_model: layer width does not match policy capacity");
                sd.kept = detail::select_rows(src.ffn.w_up, plan.selector, policy, keep, rng);
                dst.ffn = prune_ffn_layer(src.ffn, sd.kept);
                sd.ks_distance = ks_distance(singular_values(src.ffn.w_up).values,
                                             singular_values(dst.ffn.w_up).values);
            }
            diag.ffn = std::move(sd);
        }

        if (plan.target != PruneTarget::FFN) {
            const std::size_t d_attn = src.attention.d_attn();
            const std::size_t head_dim = d_attn / model.config.n_heads;
            const std::size_t keep = keep_count_for(ratio, head_dim) * model.config.n_heads;
            SliceDiag sd;
            if (keep == d_attn) {
                sd.kept = detail::all_indices(d_attn);
                sd.ks_distance = 0.0;
            } else {
                Rng rng(derive_seed(plan.seed, 0xA770 + l, 0));
                if (policy)
                    require(policy->n() == d_attn && policy->d() == model.config.d_hidden,
                            "compress_model: policy shape does not match attention");
                sd.kept = detail::select_attention(src.attention, plan.selector, policy, ratio,
                                                   model.config.n_heads, rng);
                Matrix<float> state(d_attn, src.attention.d_hidden());
                for (std::size_t i = 0; i < d_attn; ++i)
                    for (std::size_t j = 0; j < src.attention.d_hidden(); ++j)
                        state(i, j) = src.attention.w_o(j, i);
                dst.attention = prune_attention_layer(src.attention, sd.kept, model.config.n_heads);
                sd.ks_distance = ks_distance(singular_values(state).values,
                                             singular_values(gather_rows(state, sd.kept)).values);
            }
            diag.attn = std::move(sd);
        }

        result.model.layers[l] = std::move(dst);
        result.layers[l] = std::move(diag);
    });

    validate(result.model);
    return result;
}

}  // namespace prunenet
