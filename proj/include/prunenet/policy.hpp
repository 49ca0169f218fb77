#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "prunenet/adamw.hpp"
#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/model.hpp"
#include "prunenet/rng.hpp"
#include "prunenet/spectral.hpp"

namespace prunenet {

// The policy learner: two bias-free projections shared across all layers of a
// model. Row scores for an n x d weight matrix come out as
// sigmoid(w_proj * (W * w_inter^T)).
struct PolicyParams {
    Matrix<double> w_inter;  // n x d
    Matrix<double> w_proj;   // 1 x n

    std::size_t n() const { return w_inter.rows(); }
    std::size_t d() const { return w_inter.cols(); }
};

inline void validate(const PolicyParams& p) {
    require(p.w_inter.rows() > 0 && p.w_inter.cols() > 0, "PolicyParams: empty w_inter");
    require(p.w_proj.rows() == 1 && p.w_proj.cols() == p.w_inter.rows(),
            "PolicyParams: w_proj must be 1 x n");
}

// Gaussian init with std 1/sqrt(d) and 1/sqrt(n) keeps initial scores near
// 0.5 (maximum-entropy start).
inline PolicyParams init_policy(std::size_t n, std::size_t d, std::uint64_t seed) {
    require(n > 0 && d > 0, "init_policy: zero dimensions");
    PolicyParams p;
    p.w_inter = Matrix<double>(n, d);
    p.w_proj = Matrix<double>(1, n);
    Rng rng(derive_seed(seed, 0x9011c7, 0));
    const double si = 1.0 / std::sqrt(double(d));
    const double sp = 1.0 / std::sqrt(double(n));
    for (double& v : p.w_inter.data()) v = si * rng.gaussian();
    for (double& v : p.w_proj.data()) v = sp * rng.gaussian();
    return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kLogitClamp = 1e-7;

struct SelectionOutcome {
    std::vector<double> importance;  // in (0,1), length n
    std::vector<double> perturbed;   // in (0,1), length n
    std::vector<double> epsilon;     // uniform draws, length n
    std::vector<std::size_t> kept;   // sorted ascending, size keep_count
    double log_prob = 0.0;
};

struct EpisodeStats {
    std::vector<double> per_layer_penalty;
    std::vector<double> returns;
    double loss = 0.0;
    double grad_norm = 0.0;
};

enum class RewardKind { KS, AD };

struct TrainConfig {
    double gamma = 0.99;
    double learning_rate = 5e-4;
    std::size_t episodes = 20;
    double ratio = 0.3;  // compression ratio r in (0,1)
    std::uint64_t seed = 0;
    RewardKind reward = RewardKind::KS;
    AdamWConfig adamw;
};

inline std::size_t keep_count_for(double ratio, std::size_t n) {
    require(ratio >= 0.0 && ratio < 1.0, "compression ratio must be in [0,1)");
    auto k = std::size_t(std::llround((1.0 - ratio) * double(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return k;
}

inline void validate(const TrainConfig& c, std::size_t n) {
    require(c.gamma >= 0.0 && c.gamma <= 1.0, "TrainConfig: gamma outside [0,1]");
    require(c.learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(c.ratio > 0.0 && c.ratio < 1.0, "TrainConfig: ratio outside (0,1)");
    const std::size_t k = keep_count_for(c.ratio, n);
    require(k >= 1 && k < n, "TrainConfig: ratio must remove at least one row and keep at least one");
}

// Row scores: sigmoid(w_proj*(W*w_inter^T)), evaluated as w_inter*(W^T*w_proj^T),
// which is the same vector at O(nd) cost.
template <typename T>
std::vector<double> importance_scores(const Matrix<T>& w_up, const PolicyParams& policy) {
    require(w_up.rows() == policy.n() && w_up.cols() == policy.d(),
            "importance_scores: w_up shape does not match policy");
    std::vector<double> v = matvec_t(w_up, std::span<const double>(policy.w_proj.row(0)));
    std::vector<double> z = matvec(policy.w_inter, std::span<const double>(v));
    for (double& s : z) s = sigmoid(s);
    return z;
}

// Reparametrized scores: sigmoid(logit(eps) + logit(importance)). The log
// terms are grouped so that complementary inputs cancel exactly.
inline std::vector<double> perturb_importance(std::span<const double> importance,
                                              std::span<const double> epsilon,
                                              double clamp = kLogitClamp) {
    require(importance.size() == epsilon.size(), "perturb_importance: length mismatch");
    std::vector<double> out(importance.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double w = std::clamp(importance[i], clamp, 1.0 - clamp);
        const double e = std::clamp(epsilon[i], clamp, 1.0 - clamp);
        const double u = (std::log(e) + std::log(w)) - (std::log(1.0 - e) + std::log(1.0 - w));
        out[i] = sigmoid(u);
    }
    return out;
}

// Weighted sampling without replacement (Gumbel-top-k on log weights).
// Ties broken by lower index; result sorted ascending.
inline std::vector<std::size_t> sample_indices(std::span<const double> perturbed,
                                               std::size_t keep_count, Rng& rng) {
    const std::size_t n = perturbed.size();
    require(keep_count >= 1 && keep_count <= n, "sample_indices: keep_count out of range");
    bool any_positive = false;
    std::vector<std::pair<double, std::size_t>> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        double key = -std::numeric_limits<double>::infinity();
        if (perturbed[i] > 0.0) {
            any_positive = true;
            const double gumbel = -std::log(-std::log(rng.uniform()));
            key = std::log(perturbed[i]) + gumbel;
        } else {
            rng.uniform();  // keep the stream aligned regardless of weights
        }
        keys[i] = {key, i};
    }
    require(any_positive, "sample_indices: all-zero weights");
    std::partial_sort(keys.begin(), keys.begin() + keep_count, keys.end(),
                      [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    std::vector<std::size_t> kept(keep_count);
    for (std::size_t i = 0; i < keep_count; ++i) kept[i] = keys[i].second;
    std::sort(kept.begin(), kept.end());
    return kept;
}

// log P(S) under the independent-selection approximation with normalized
// weights: sum_{i in S} log(w_i / sum_j w_j).
inline double selection_log_prob(std::span<const double> perturbed,
                                 std::span<const std::size_t> kept) {
    const double total = std::accumulate(perturbed.begin(), perturbed.end(), 0.0);
    require(total > 0.0, "selection_log_prob: all-zero weights");
    double lp = 0.0;
    for (std::size_t i : kept) {
        require(i < perturbed.size(), "selection_log_prob: index out of range");
        lp += std::log(perturbed[i]);
    }
    lp -= double(kept.size()) * std::log(total);
    return lp;
}

// Return-to-go including the layer's own penalty: G_l = D_l + gamma * G_{l+1}.
inline std::vector<double> discounted_returns(std::span<const double> penalties, double gamma) {
    require(!penalties.empty(), "discounted_returns: empty penalty vector");
    require(gamma >= 0.0 && gamma <= 1.0, "discounted_returns: gamma outside [0,1]");
    std::vector<double> g(penalties.size());
    double acc = 0.0;
    for (std::size_t i = penalties.size(); i-- > 0;) {
        acc = penalties[i] + gamma * acc;
        g[i] = acc;
    }
    return g;
}

inline std::vector<std::size_t> random_selection(std::size_t n, std::size_t keep_count, Rng& rng) {
    require(keep_count >= 1 && keep_count <= n, "random_selection: keep_count out of range");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < keep_count; ++i) {
        const std::size_t j = i + std::size_t(rng.below(std::uint64_t(n - i)));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(keep_count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Deterministic ablation: indices of the keep_count largest scores, ties to
// the lower index.
inline std::vector<std::size_t> topk_selection(std::span<const double> importance,
                                               std::size_t keep_count) {
    const std::size_t n = importance.size();
    require(keep_count >= 1 && keep_count <= n, "topk_selection: keep_count out of range");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + keep_count, order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return importance[a] != importance[b] ? importance[a] > importance[b]
                                                                : a < b;
                      });
    order.resize(keep_count);
    std::sort(order.begin(), order.end());
    return order;
}

namespace detail {

// Forward pass for one layer with fixed noise; shared by training, loss
// replay (finite differences), and the backward pass.
struct LayerForward {
    std::vector<double> v;           // W^T * w_proj^T
    std::vector<double> z;           // w_inter * v (pre-sigmoid)
    std::vector<double> importance;  // sigmoid(z)
    std::vector<double> perturbed;
    double log_prob = 0.0;
};

template <typename T>
LayerForward layer_forward(const Matrix<T>& w_up, const PolicyParams& policy,
                           std::span<const double> epsilon, std::span<const std::size_t> kept) {
    LayerForward f;
    f.v = matvec_t(w_up, std::span<const double>(policy.w_proj.row(0)));
    f.z = matvec(policy.w_inter, std::span<const double>(f.v));
    f.importance.resize(f.z.size());
    for (std::size_t i = 0; i < f.z.size(); ++i) f.importance[i] = sigmoid(f.z[i]);
    f.perturbed = perturb_importance(f.importance, epsilon);
    f.log_prob = selection_log_prob(f.perturbed, kept);
    return f;
}

inline double penalty_between(const SpectrumSummary& original, const SpectrumSummary& sliced,
                              RewardKind kind) {
    return kind == RewardKind::KS ? ks_distance(original.values, sliced.values)
                                  : ad_distance(original.values, sliced.values);
}

}  // namespace detail

// Frozen randomness for gradient checking and replay.
struct FrozenEpisode {
    std::vector<std::vector<double>> epsilon;     // per layer
    std::vector<std::vector<std::size_t>> kept;   // per layer
    std::vector<double> returns;                  // per layer
};

// REINFORCE surrogate with (epsilon, S, G) held constant:
//   loss = (1/L) * sum_l G_l * log P(S_l | W_l).
// Descending it lowers the selection probability of high-penalty actions,
// which is the REINFORCE update minimizing the expected penalty.
inline double selection_loss(const Model& model, const PolicyParams& policy,
                             const FrozenEpisode& frozen) {
    const std::size_t layers = model.layers.size();
    require(frozen.epsilon.size() == layers && frozen.kept.size() == layers &&
                frozen.returns.size() == layers,
            "selection_loss: frozen episode does not match model");
    double loss = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto f = detail::layer_forward(model.layers[l].ffn.w_up, policy, frozen.epsilon[l],
                                             frozen.kept[l]);
        loss += frozen.returns[l] * f.log_prob;
    }
    return loss / double(layers);
}

struct PolicyGrads {
    Matrix<double> w_inter;
    Matrix<double> w_proj;
};

struct EpisodeResult {
    PolicyGrads grads;
    EpisodeStats stats;
    FrozenEpisode frozen;  // the sampled randomness, for replay and grad checks
};

// One REINFORCE episode over all layers of the model: sample selections,
// score them with the spectral penalty, and backpropagate the surrogate loss
// through log P -> normalization -> reparametrized scores -> sigmoid -> the
// two projections. epsilon, S and G are treated as constants.
inline EpisodeResult policy_gradient(const Model& model, const PolicyParams& policy,
                                     const TrainConfig& config, Rng& rng) {
    validate(policy);
    const std::size_t layers = model.layers.size();
    require(layers > 0, "policy_gradient: model has no layers");
    require(model.config.d_intermediate == policy.n() && model.config.d_hidden == policy.d(),
            "policy_gradient: policy shape does not match model");
    validate(config, policy.n());

    const std::size_t n = policy.n();
    const std::size_t keep = keep_count_for(config.ratio, n);

    // Layer substreams are drawn up front so per-layer work is order-free.
    std::vector<std::uint64_t> layer_seeds(layers);
    for (auto& s : layer_seeds) s = rng.next_u64();

    FrozenEpisode frozen;
    frozen.epsilon.resize(layers);
    frozen.kept.resize(layers);
    std::vector<detail::LayerForward> forwards(layers);
    std::vector<double> penalties(layers);

    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix<float>& w_up = model.layers[l].ffn.w_up;
        require(w_up.rows() == n, "policy_gradient: layer width does not match policy capacity");
        Rng layer_rng(layer_seeds[l]);
        auto& eps = frozen.epsilon[l];
        eps.resize(n);
        for (double& e : eps) e = layer_rng.uniform();

        auto f = detail::layer_forward(w_up, policy, eps, {});
        frozen.kept[l] = sample_indices(f.perturbed, keep, layer_rng);
        f.log_prob = selection_log_prob(f.perturbed, frozen.kept[l]);
        require(std::isfinite(f.log_prob), "policy_gradient: non-finite log probability");

        const SpectrumSummary original = singular_values(w_up);
        const SpectrumSummary sliced = singular_values(gather_rows(w_up, frozen.kept[l]));
        penalties[l] = detail::penalty_between(original, sliced, config.reward);
        forwards[l] = std::move(f);
    }

    frozen.returns = discounted_returns(penalties, config.gamma);

    PolicyGrads grads{Matrix<double>(n, policy.d()), Matrix<double>(1, n)};
    double loss = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
        const detail::LayerForward& f = forwards[l];
        const Matrix<float>& w_up = model.layers[l].ffn.w_up;
        const double scale = frozen.returns[l] / double(layers);
        loss += scale * f.log_prob;

        const double total = std::accumulate(f.perturbed.begin(), f.perturbed.end(), 0.0);
        std::vector<double> d_pert(n, -double(keep) / total);
        for (std::size_t i : frozen.kept[l]) d_pert[i] += 1.0 / f.perturbed[i];

        // d loss / d z, folding in sigmoid and the reparametrization chain.
        std::vector<double> gz(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = f.importance[i];
            double chain = 0.0;
            if (w > kLogitClamp && w < 1.0 - kLogitClamp) {
                const double pert = f.perturbed[i];
                chain = pert * (1.0 - pert);  // sigma'(u) / (w(1-w)) * sigma'(z) collapses
            }
            gz[i] = scale * d_pert[i] * chain;
        }

        // z = w_inter * v with v = w_up^T * w_proj^T.
        for (std::size_t i = 0; i < n; ++i) {
            auto gi = grads.w_inter.row(i);
            const double gzi = gz[i];
            for (std::size_t k = 0; k < policy.d(); ++k) gi[k] += gzi * f.v[k];
        }
        std::vector<double> gv = matvec_t(policy.w_inter, std::span<const double>(gz));
        std::vector<double> gp = matvec(w_up, std::span<const double>(gv));
        for (std::size_t i = 0; i < n; ++i) grads.w_proj(0, i) += gp[i];
    }

    double sq = 0.0;
    for (double g : grads.w_inter.data()) sq += g * g;
    for (double g : grads.w_proj.data()) sq += g * g;
    require(std::isfinite(sq), "policy_gradient: non-finite gradient");

    EpisodeStats stats;
    stats.per_layer_penalty = std::move(penalties);
    stats.returns = frozen.returns;
    stats.loss = loss;
    stats.grad_norm = std::sqrt(sq);
    return {std::move(grads), std::move(stats), std::move(frozen)};
}

struct TrainResult {
    PolicyParams params;
    std::vector<EpisodeStats> history;
};

// Training loop: one policy shared across layers, one sampled
// selection per layer per episode, AdamW updates. Deterministic given seed.
inline TrainResult train_policy(const Model& model, const TrainConfig& config) {
    validate(model);
    require(!model.layers.empty(), "train_policy: model has no layers");
    TrainResult result;
    result.params =
        init_policy(model.config.d_intermediate, model.config.d_hidden, derive_seed(config.seed, 2, 0));
    if (config.episodes > 0) validate(config, result.params.n());
    AdamWState inter_state(result.params.w_inter.rows(), result.params.w_inter.cols());
    AdamWState proj_state(1, result.params.w_proj.cols());
    result.history.reserve(config.episodes);
    for (std::size_t ep = 0; ep < config.episodes; ++ep) {
        Rng rng(derive_seed(config.seed, 3, ep));
        EpisodeResult episode = policy_gradient(model, result.params, config, rng);
        adamw_update(result.params.w_inter, episode.grads.w_inter, inter_state, config.adamw,
                     config.learning_rate);
        adamw_update(result.params.w_proj, episode.grads.w_proj, proj_state, config.adamw,
                     config.learning_rate);
        result.history.push_back(std::move(episode.stats));
    }
    return result;
}

}  // namespace prunenet
