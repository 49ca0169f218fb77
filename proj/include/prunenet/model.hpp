#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/rng.hpp"

namespace prunenet {

enum class FfnStyle { TwoMatrix, GatedThreeMatrix };
enum class Activation { GELU, SiLU };

struct ModelConfig {
    std::size_t d_hidden = 0;
    std::size_t d_intermediate = 0;
    std::size_t n_layers = 0;
    std::size_t vocab_size = 0;
    std::size_t n_heads = 1;
    FfnStyle ffn_style = FfnStyle::TwoMatrix;
    Activation activation = Activation::GELU;
    bool with_biases = false;  // FFN biases; gated-style models never carry them

    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
    require(c.d_hidden > 0 && c.d_intermediate > 0 && c.vocab_size > 0 && c.n_heads > 0,
            "ModelConfig: dimensions must be positive");
    require(c.d_intermediate >= c.d_hidden, "ModelConfig: d_intermediate < d_hidden");
    require(c.d_hidden % c.n_heads == 0, "ModelConfig: d_hidden not divisible by n_heads");
    if (c.ffn_style == FfnStyle::GatedThreeMatrix)
        require(!c.with_biases, "ModelConfig: gated FFN has no bias tensors");
}

// One FFN block. n_rows() is the current intermediate width and shrinks when
// the layer is pruned; d_hidden never changes.
struct FFNWeights {
    Matrix<float> w_up;                     // n_rows x d_hidden
    Matrix<float> w_down;                   // d_hidden x n_rows
    std::optional<Matrix<float>> w_gate;    // n_rows x d_hidden, gated style only
    std::optional<std::vector<float>> b_up; // n_rows
    std::optional<std::vector<float>> b_down;  // d_hidden

    std::size_t n_rows() const { return w_up.rows(); }
    std::size_t d_hidden() const { return w_up.cols(); }

    bool operator==(const FFNWeights&) const = default;
};

inline void validate(const FFNWeights& f) {
    const std::size_t n = f.w_up.rows(), d = f.w_up.cols();
    require(n > 0 && d > 0, "FFNWeights: empty matrices");
    require(f.w_down.rows() == d && f.w_down.cols() == n, "FFNWeights: w_down shape mismatch");
    if (f.w_gate)
        require(f.w_gate->rows() == n && f.w_gate->cols() == d, "FFNWeights: w_gate shape mismatch");
    if (f.b_up) require(f.b_up->size() == n, "FFNWeights: b_up length mismatch");
    if (f.b_down) require(f.b_down->size() == d, "FFNWeights: b_down length mismatch");
}

struct AttentionWeights {
    Matrix<float> w_q, w_k, w_v;  // d_attn x d_hidden
    Matrix<float> w_o;            // d_hidden x d_attn

    std::size_t d_attn() const { return w_q.rows(); }
    std::size_t d_hidden() const { return w_q.cols(); }

    bool operator==(const AttentionWeights&) const = default;
};

inline void validate(const AttentionWeights& a) {
    const std::size_t da = a.w_q.rows(), dh = a.w_q.cols();
    require(da > 0 && dh > 0, "AttentionWeights: empty matrices");
    for (const auto* m : {&a.w_k, &a.w_v})
        require(m->rows() == da && m->cols() == dh, "AttentionWeights: q/k/v shape mismatch");
    require(a.w_o.rows() == dh && a.w_o.cols() == da, "AttentionWeights: w_o shape mismatch");
}

struct Layer {
    AttentionWeights attention;
    FFNWeights ffn;

    bool operator==(const Layer&) const = default;
};

// Immutable after synthesis/load; pruning constructs a fresh Model.
struct Model {
    ModelConfig config;
    std::vector<Layer> layers;
    Matrix<float> embed;  // vocab_size x d_hidden
    Matrix<float> head;   // vocab_size x d_hidden

    bool operator==(const Model&) const = default;
};

inline void validate(const Model& m) {
    validate(m.config);
    require(m.layers.size() == m.config.n_layers, "Model: layer count mismatch");
    require(m.embed.rows() == m.config.vocab_size && m.embed.cols() == m.config.d_hidden,
            "Model: embed shape mismatch");
    require(m.head.rows() == m.config.vocab_size && m.head.cols() == m.config.d_hidden,
            "Model: head shape mismatch");
    for (const Layer& l : m.layers) {
        validate(l.attention);
        validate(l.ffn);
        require(l.attention.d_hidden() == m.config.d_hidden &&
                    l.ffn.d_hidden() == m.config.d_hidden,
                "Model: layer d_hidden mismatch");
        require(l.attention.d_attn() % m.config.n_heads == 0,
                "Model: d_attn not divisible by n_heads");
    }
}

namespace detail {

inline Matrix<float> gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix<float> m(rows, cols);
    for (float& v : m.data()) v = float(stddev * rng.gaussian());
    return m;
}

}  // namespace detail

// Deterministic in (config, seed). Weights are N(0, 1/d_hidden) elementwise,
// biases zero.
inline Model synthesize_model(const ModelConfig& config, std::uint64_t seed) {
    validate(config);
    const double stddev = 1.0 / std::sqrt(double(config.d_hidden));
    Model m;
    m.config = config;
    {
        Rng rng(derive_seed(seed, 0, 0));
        m.embed = detail::gaussian_matrix(config.vocab_size, config.d_hidden, stddev, rng);
        m.head = detail::gaussian_matrix(config.vocab_size, config.d_hidden, stddev, rng);
    }
    m.layers.reserve(config.n_layers);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        Rng rng(derive_seed(seed, 1, i));
        Layer layer;
        layer.attention.w_q = detail::gaussian_matrix(config.d_hidden, config.d_hidden, stddev, rng);
        layer.attention.w_k = detail::gaussian_matrix(config.d_hidden, config.d_hidden, stddev, rng);
        layer.attention.w_v = detail::gaussian_matrix(config.d_hidden, config.d_hidden, stddev, rng);
        layer.attention.w_o = detail::gaussian_matrix(config.d_hidden, config.d_hidden, stddev, rng);
        layer.ffn.w_up = detail::gaussian_matrix(config.d_intermediate, config.d_hidden, stddev, rng);
        layer.ffn.w_down = detail::gaussian_matrix(config.d_hidden, config.d_intermediate, stddev, rng);
        if (config.ffn_style == FfnStyle::GatedThreeMatrix)
            layer.ffn.w_gate =
                detail::gaussian_matrix(config.d_intermediate, config.d_hidden, stddev, rng);
        if (config.with_biases) {
            layer.ffn.b_up = std::vector<float>(config.d_intermediate, 0.0f);
            layer.ffn.b_down = std::vector<float>(config.d_hidden, 0.0f);
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

// Direct enumeration of every tensor's element count.
inline std::uint64_t param_count(const Model& m) {
    std::uint64_t total = m.embed.size() + m.head.size();
    for (const Layer& l : m.layers) {
        total += l.attention.w_q.size() + l.attention.w_k.size() + l.attention.w_v.size() +
                 l.attention.w_o.size();
        total += l.ffn.w_up.size() + l.ffn.w_down.size();
        if (l.ffn.w_gate) total += l.ffn.w_gate->size();
        if (l.ffn.b_up) total += l.ffn.b_up->size();
        if (l.ffn.b_down) total += l.ffn.b_down->size();
    }
    return total;
}

inline std::string to_string(FfnStyle s) {
    return s == FfnStyle::TwoMatrix ? "two_matrix" : "gated_three_matrix";
}

inline std::string to_string(Activation a) { return a == Activation::GELU ? "gelu" : "silu"; }

inline FfnStyle ffn_style_from_string(const std::string& s) {
    if (s == "two_matrix") return FfnStyle::TwoMatrix;
    if (s == "gated_three_matrix") return FfnStyle::GatedThreeMatrix;
    throw DomainError("unknown ffn_style: " + s);
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "gelu") return Activation::GELU;
    if (s == "silu") return Activation::SiLU;
    throw DomainError("unknown activation: " + s);
}

}  // namespace prunenet
