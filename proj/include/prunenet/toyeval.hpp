#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/model.hpp"
#include "prunenet/parallel.hpp"
#include "prunenet/rng.hpp"

namespace prunenet {

// B x N x dim activations, row-major over (batch, position, feature).
struct ActivationBatch {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    ActivationBatch() = default;
    ActivationBatch(std::size_t b, std::size_t n, std::size_t d)
        : batch(b), seq(n), dim(d), data(b * n * d, 0.0f) {}

    float* at(std::size_t b, std::size_t n) { return data.data() + (b * seq + n) * dim; }
    const float* at(std::size_t b, std::size_t n) const {
        return data.data() + (b * seq + n) * dim;
    }
};

inline ActivationBatch random_batch(std::size_t b, std::size_t n, std::size_t d, Rng& rng) {
    ActivationBatch x(b, n, d);
    for (float& v : x.data) v = float(rng.gaussian());
    return x;
}

inline double activate(Activation kind, double x) {
    if (kind == Activation::SiLU) return x / (1.0 + std::exp(-x));
    // exact GELU
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

// FFN(X) = act(X W_up^T + b_up) W_down^T + b_down for the two-matrix style;
// gated style computes (act(X W_gate^T) .* X W_up^T) W_down^T without biases.
inline ActivationBatch ffn_forward(const FFNWeights& ffn, const ActivationBatch& x,
                                   Activation activation) {
    require(x.dim == ffn.d_hidden(), "ffn_forward: activation width mismatch");
    validate(ffn);
    const std::size_t n = ffn.n_rows();
    const std::size_t d = ffn.d_hidden();
    ActivationBatch out(x.batch, x.seq, d);
    std::vector<double> hidden(n);
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t t = 0; t < x.seq; ++t) {
            const float* xv = x.at(b, t);
            for (std::size_t i = 0; i < n; ++i) {
                double up = 0.0;
                auto wu = ffn.w_up.row(i);
                for (std::size_t j = 0; j < d; ++j) up += double(wu[j]) * double(xv[j]);
                if (ffn.w_gate) {
                    double gate = 0.0;
                    auto wg = ffn.w_gate->row(i);
                    for (std::size_t j = 0; j < d; ++j) gate += double(wg[j]) * double(xv[j]);
                    hidden[i] = activate(activation, gate) * up;
                } else {
                    if (ffn.b_up) up += double((*ffn.b_up)[i]);
                    hidden[i] = activate(activation, up);
                }
            }
            float* ov = out.at(b, t);
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                auto wd = ffn.w_down.row(j);
                for (std::size_t i = 0; i < n; ++i) acc += double(wd[i]) * hidden[i];
                if (!ffn.w_gate && ffn.b_down) acc += double((*ffn.b_down)[j]);
                ov[j] = float(acc);
            }
        }
    }
    return out;
}

namespace detail {

constexpr double kLayerNormEps = 1e-5;

// Parameter-free LayerNorm (synthetic checkpoints carry no norm tensors).
inline void layer_norm(const float* in, double* out, std::size_t d) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += double(in[j]);
    mean /= double(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double c = double(in[j]) - mean;
        var += c * c;
    }
    var /= double(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) out[j] = (double(in[j]) - mean) * inv;
}

// Causal multi-head attention over one sequence of normalized inputs.
inline void attention_forward(const AttentionWeights& attn, std::size_t n_heads,
                              const std::vector<std::vector<double>>& normed,
                              std::vector<std::vector<double>>& out) {
    const std::size_t seq = normed.size();
    const std::size_t d_attn = attn.d_attn();
    const std::size_t d = attn.d_hidden();
    const std::size_t head_dim = d_attn / n_heads;
    const double scale = 1.0 / std::sqrt(double(head_dim));

    std::vector<std::vector<double>> q(seq), k(seq), v(seq);
    for (std::size_t t = 0; t < seq; ++t) {
        q[t].resize(d_attn);
        k[t].resize(d_attn);
        v[t].resize(d_attn);
        for (std::size_t i = 0; i < d_attn; ++i) {
            double aq = 0.0, ak = 0.0, av = 0.0;
            auto wq = attn.w_q.row(i);
            auto wk = attn.w_k.row(i);
            auto wv = attn.w_v.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                const double xj = normed[t][j];
                aq += double(wq[j]) * xj;
                ak += double(wk[j]) * xj;
                av += double(wv[j]) * xj;
            }
            q[t][i] = aq;
            k[t][i] = ak;
            v[t][i] = av;
        }
    }

    std::vector<double> mixed(d_attn);
    std::vector<double> scores;
    for (std::size_t t = 0; t < seq; ++t) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t base = h * head_dim;
            scores.assign(t + 1, 0.0);
            double smax = -1e300;
            for (std::size_t s = 0; s <= t; ++s) {
                double dot = 0.0;
                for (std::size_t i = 0; i < head_dim; ++i)
                    dot += q[t][base + i] * k[s][base + i];
                scores[s] = dot * scale;
                smax = std::max(smax, scores[s]);
            }
            double denom = 0.0;
            for (std::size_t s = 0; s <= t; ++s) {
                scores[s] = std::exp(scores[s] - smax);
                denom += scores[s];
            }
            for (std::size_t i = 0; i < head_dim; ++i) {
                double acc = 0.0;
                for (std::size_t s = 0; s <= t; ++s) acc += scores[s] * v[s][base + i];
                mixed[base + i] = acc / denom;
            }
        }
        out[t].resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            auto wo = attn.w_o.row(j);
            for (std::size_t i = 0; i < d_attn; ++i) acc += double(wo[i]) * mixed[i];
            out[t][j] = acc;
        }
    }
}

}  // namespace detail

// Pre-norm blocks: y = x + Attn(LN(x)); z = y + FFN(LN(y)). Returns final
// hidden states, or LM-head logits when apply_head is set.
inline ActivationBatch model_forward(const Model& model, const ActivationBatch& x,
                                     bool apply_head = false) {
    require(x.dim == model.config.d_hidden, "model_forward: activation width mismatch");
    validate(model);
    const std::size_t d = model.config.d_hidden;
    ActivationBatch hidden = x;

    std::vector<std::vector<double>> normed(x.seq), attn_out(x.seq);
    std::vector<double> norm_buf(d);
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (const Layer& layer : model.layers) {
            for (std::size_t t = 0; t < x.seq; ++t) {
                normed[t].resize(d);
                detail::layer_norm(hidden.at(b, t), normed[t].data(), d);
            }
            detail::attention_forward(layer.attention, model.config.n_heads, normed, attn_out);
            for (std::size_t t = 0; t < x.seq; ++t) {
                float* hv = hidden.at(b, t);
                for (std::size_t j = 0; j < d; ++j)
                    hv[j] = float(double(hv[j]) + attn_out[t][j]);
            }
            for (std::size_t t = 0; t < x.seq; ++t) {
                float* hv = hidden.at(b, t);
                detail::layer_norm(hv, norm_buf.data(), d);
                const std::size_t n = layer.ffn.n_rows();
                std::vector<double> mid(n);
                for (std::size_t i = 0; i < n; ++i) {
                    double up = 0.0;
                    auto wu = layer.ffn.w_up.row(i);
                    for (std::size_t j = 0; j < d; ++j) up += double(wu[j]) * norm_buf[j];
                    if (layer.ffn.w_gate) {
                        double gate = 0.0;
                        auto wg = layer.ffn.w_gate->row(i);
                        for (std::size_t j = 0; j < d; ++j) gate += double(wg[j]) * norm_buf[j];
                        mid[i] = activate(model.config.activation, gate) * up;
                    } else {
                        if (layer.ffn.b_up) up += double((*layer.ffn.b_up)[i]);
                        mid[i] = activate(model.config.activation, up);
                    }
                }
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    auto wd = layer.ffn.w_down.row(j);
                    for (std::size_t i = 0; i < n; ++i) acc += double(wd[i]) * mid[i];
                    if (!layer.ffn.w_gate && layer.ffn.b_down)
                        acc += double((*layer.ffn.b_down)[j]);
                    hv[j] = float(double(hv[j]) + acc);
                }
            }
        }
    }
    if (!apply_head) return hidden;

    ActivationBatch logits(x.batch, x.seq, model.config.vocab_size);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t t = 0; t < x.seq; ++t) {
            const float* hv = hidden.at(b, t);
            float* lv = logits.at(b, t);
            for (std::size_t r = 0; r < model.config.vocab_size; ++r) {
                double acc = 0.0;
                auto row = model.head.row(r);
                for (std::size_t j = 0; j < d; ++j) acc += double(row[j]) * double(hv[j]);
                lv[r] = float(acc);
            }
        }
    return logits;
}

struct DriftMetrics {
    double mse = 0.0;
    double max_abs = 0.0;
    double cosine_mean = 0.0;
};

// Output drift between the original and a compressed model on random probes.
// Deterministic in seed.
inline DriftMetrics output_drift(const Model& original, const Model& compressed,
                                 std::size_t n_probes, std::uint64_t seed,
                                 std::size_t probe_batch = 4, std::size_t probe_seq = 32) {
    require(original.config.d_hidden == compressed.config.d_hidden &&
                original.config.n_layers == compressed.config.n_layers &&
                original.config.n_heads == compressed.config.n_heads,
            "output_drift: incompatible configs");
    require(n_probes >= 1, "output_drift: need at least one probe");

    struct ProbeStats {
        double sq_err = 0.0, max_abs = 0.0, cos_sum = 0.0;
        std::size_t elements = 0, positions = 0;
    };
    std::vector<ProbeStats> stats(n_probes);

    parallel_for(n_probes, [&](std::size_t p) {
        Rng rng(derive_seed(seed, 0xD81F7, p));
        ActivationBatch x =
            random_batch(probe_batch, probe_seq, original.config.d_hidden, rng);
        ActivationBatch ya = model_forward(original, x);
        ActivationBatch yb = model_forward(compressed, x);
        ProbeStats& st = stats[p];
        for (std::size_t b = 0; b < x.batch; ++b)
            for (std::size_t t = 0; t < x.seq; ++t) {
                const float* va = ya.at(b, t);
                const float* vb = yb.at(b, t);
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (std::size_t j = 0; j < x.dim; ++j) {
                    const double diff = double(va[j]) - double(vb[j]);
                    st.sq_err += diff * diff;
                    st.max_abs = std::max(st.max_abs, std::fabs(diff));
                    dot += double(va[j]) * double(vb[j]);
                    na += double(va[j]) * double(va[j]);
                    nb += double(vb[j]) * double(vb[j]);
                }
                st.elements += x.dim;
                st.positions += 1;
                if (na <= 0.0 || nb <= 0.0)
                    st.cos_sum += (na <= 0.0 && nb <= 0.0) ? 1.0 : 0.0;
                else
                    st.cos_sum += dot / (std::sqrt(na) * std::sqrt(nb));
            }
    });

    DriftMetrics m;
    std::size_t elements = 0, positions = 0;
    for (const auto& st : stats) {
        m.mse += st.sq_err;
        m.max_abs = std::max(m.max_abs, st.max_abs);
        m.cosine_mean += st.cos_sum;
        elements += st.elements;
        positions += st.positions;
    }
    m.mse /= double(elements);
    m.cosine_mean /= double(positions);
    return m;
}

}  // namespace prunenet
