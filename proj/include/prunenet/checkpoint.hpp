#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/model.hpp"
#include "prunenet/policy.hpp"

namespace prunenet {

// PNCK checkpoint, format version 1: a directory holding manifest.json and
// weights.bin. Tensors are little-endian IEEE-754 binary32, row-major, no
// padding, concatenated in manifest order with exactly cumulative offsets.
constexpr int kPnckFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "PNCK serialization assumes a little-endian host");

namespace detail {

struct TensorRecord {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset = 0;
    const float* data = nullptr;  // writer side

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"d_hidden", c.d_hidden},
            {"d_intermediate", c.d_intermediate},
            {"n_layers", c.n_layers},
            {"vocab_size", c.vocab_size},
            {"n_heads", c.n_heads},
            {"ffn_style", to_string(c.ffn_style)},
            {"activation", to_string(c.activation)},
            {"with_biases", c.with_biases}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.d_hidden = j.at("d_hidden").get<std::size_t>();
        c.d_intermediate = j.at("d_intermediate").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.ffn_style = ffn_style_from_string(j.at("ffn_style").get<std::string>());
        c.activation = activation_from_string(j.at("activation").get<std::string>());
        c.with_biases = j.at("with_biases").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest config: ") + e.what());
    }
    return c;
}

inline void write_pnck(const std::filesystem::path& dir, const ModelConfig& config,
                       std::vector<TensorRecord>& tensors) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string());

    std::uint64_t offset = 0;
    nlohmann::json manifest_tensors = nlohmann::json::array();
    for (auto& t : tensors) {
        t.offset = offset;
        offset += t.element_count() * sizeof(float);
        manifest_tensors.push_back({{"name", t.name},
                                    {"shape", t.shape},
                                    {"offset", t.offset},
                                    {"dtype", "f32"}});
    }
    nlohmann::json manifest = {{"format_version", kPnckFormatVersion},
                               {"config", config_to_json(config)},
                               {"tensors", manifest_tensors}};

    {
        std::ofstream out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + (dir / "weights.bin").string() + " for writing");
        for (const auto& t : tensors)
            out.write(reinterpret_cast<const char*>(t.data),
                      std::streamsize(t.element_count() * sizeof(float)));
        if (!out) throw IoError("short write to " + (dir / "weights.bin").string());
    }
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + (dir / "manifest.json").string() + " for writing");
        out << manifest.dump(2) << "\n";
        if (!out) throw IoError("short write to " + (dir / "manifest.json").string());
    }
}

struct LoadedTensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

struct LoadedPnck {
    ModelConfig config;
    std::vector<std::string> order;
    std::map<std::string, LoadedTensor> tensors;
};

inline LoadedPnck read_pnck(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
    if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer())
        throw IoError("malformed manifest: missing format_version");
    if (manifest["format_version"].get<int>() != kPnckFormatVersion)
        throw IoError("unsupported PNCK format version " +
                      std::to_string(manifest["format_version"].get<int>()));
    if (!manifest.contains("config") || !manifest.contains("tensors") ||
        !manifest["tensors"].is_array())
        throw IoError("malformed manifest: missing config or tensors");

    LoadedPnck loaded;
    loaded.config = config_from_json(manifest["config"]);

    std::ifstream wf(dir / "weights.bin", std::ios::binary | std::ios::ate);
    if (!wf) throw IoError("cannot open " + (dir / "weights.bin").string());
    const std::uint64_t file_size = std::uint64_t(wf.tellg());
    wf.seekg(0);

    std::uint64_t expected_offset = 0;
    for (const auto& jt : manifest["tensors"]) {
        std::string name;
        std::vector<std::size_t> shape;
        std::uint64_t offset = 0;
        try {
            name = jt.at("name").get<std::string>();
            shape = jt.at("shape").get<std::vector<std::size_t>>();
            offset = jt.at("offset").get<std::uint64_t>();
            if (jt.at("dtype").get<std::string>() != "f32")
                throw IoError("unsupported dtype for tensor " + name);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("malformed tensor entry: ") + e.what());
        }
        if (offset != expected_offset)
            throw IoError("tensor " + name + " offset not cumulative");
        if (loaded.tensors.count(name)) throw IoError("duplicate tensor " + name);

        LoadedTensor t;
        t.shape = shape;
        std::uint64_t count = 1;
        for (std::size_t s : shape) count *= s;
        if (offset + count * sizeof(float) > file_size)
            throw IoError("tensor " + name + " size mismatch with weights.bin");
        t.data.resize(count);
        wf.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(count * sizeof(float)));
        if (!wf) throw IoError("short read for tensor " + name);
        expected_offset = offset + count * sizeof(float);
        loaded.order.push_back(name);
        loaded.tensors.emplace(std::move(name), std::move(t));
    }
    if (expected_offset != file_size)
        throw IoError("weights.bin size mismatch: manifest declares " +
                      std::to_string(expected_offset) + " bytes, file holds " +
                      std::to_string(file_size));
    return loaded;
}

inline Matrix<float> take_matrix(LoadedPnck& p, const std::string& name) {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end()) throw IoError("missing tensor " + name);
    if (it->second.shape.size() != 2) throw IoError("tensor " + name + " is not 2-dimensional");
    Matrix<float> m(it->second.shape[0], it->second.shape[1]);
    m.data() = std::move(it->second.data);
    p.tensors.erase(it);
    return m;
}

inline std::vector<float> take_vector(LoadedPnck& p, const std::string& name) {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end()) throw IoError("missing tensor " + name);
    if (it->second.shape.size() != 1) throw IoError("tensor " + name + " is not 1-dimensional");
    std::vector<float> v = std::move(it->second.data);
    p.tensors.erase(it);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
    validate(model);
    std::vector<detail::TensorRecord> tensors;
    auto add2 = [&](const std::string& name, const Matrix<float>& m) {
        tensors.push_back({name, {m.rows(), m.cols()}, 0, m.data().data()});
    };
    auto add1 = [&](const std::string& name, const std::vector<float>& v) {
        tensors.push_back({name, {v.size()}, 0, v.data()});
    };
    add2("embed", model.embed);
    add2("head", model.head);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        const Layer& l = model.layers[i];
        add2(p + "attn.w_q", l.attention.w_q);
        add2(p + "attn.w_k", l.attention.w_k);
        add2(p + "attn.w_v", l.attention.w_v);
        add2(p + "attn.w_o", l.attention.w_o);
        add2(p + "ffn.w_up", l.ffn.w_up);
        if (l.ffn.w_gate) add2(p + "ffn.w_gate", *l.ffn.w_gate);
        add2(p + "ffn.w_down", l.ffn.w_down);
        if (l.ffn.b_up) add1(p + "ffn.b_up", *l.ffn.b_up);
        if (l.ffn.b_down) add1(p + "ffn.b_down", *l.ffn.b_down);
    }
    detail::write_pnck(dir, model.config, tensors);
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
    detail::LoadedPnck loaded = detail::read_pnck(dir);
    Model m;
    m.config = loaded.config;
    m.embed = detail::take_matrix(loaded, "embed");
    m.head = detail::take_matrix(loaded, "head");
    m.layers.resize(loaded.config.n_layers);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        Layer& l = m.layers[i];
        l.attention.w_q = detail::take_matrix(loaded, p + "attn.w_q");
        l.attention.w_k = detail::take_matrix(loaded, p + "attn.w_k");
        l.attention.w_v = detail::take_matrix(loaded, p + "attn.w_v");
        l.attention.w_o = detail::take_matrix(loaded, p + "attn.w_o");
        l.ffn.w_up = detail::take_matrix(loaded, p + "ffn.w_up");
        l.ffn.w_down = detail::take_matrix(loaded, p + "ffn.w_down");
        if (loaded.tensors.count(p + "ffn.w_gate"))
            l.ffn.w_gate = detail::take_matrix(loaded, p + "ffn.w_gate");
        if (loaded.tensors.count(p + "ffn.b_up"))
            l.ffn.b_up = detail::take_vector(loaded, p + "ffn.b_up");
        if (loaded.tensors.count(p + "ffn.b_down"))
            l.ffn.b_down = detail::take_vector(loaded, p + "ffn.b_down");
    }
    if (!loaded.tensors.empty())
        throw IoError("unexpected tensor " + loaded.tensors.begin()->first);
    try {
        validate(m);
    } catch (const DomainError& e) {
        throw IoError(std::string("checkpoint inconsistent with config: ") + e.what());
    }
    return m;
}

// Policy checkpoints reuse the PNCK container with tensors w_inter and
// w_proj; the config block records the model family the policy was trained
// for.
inline void save_policy_checkpoint(const PolicyParams& policy, const ModelConfig& origin,
                                   const std::filesystem::path& dir) {
    validate(policy);
    Matrix<float> inter32(policy.w_inter.rows(), policy.w_inter.cols());
    for (std::size_t i = 0; i < inter32.data().size(); ++i)
        inter32.data()[i] = float(policy.w_inter.data()[i]);
    Matrix<float> proj32(1, policy.w_proj.cols());
    for (std::size_t i = 0; i < proj32.data().size(); ++i)
        proj32.data()[i] = float(policy.w_proj.data()[i]);
    std::vector<detail::TensorRecord> tensors;
    tensors.push_back({"w_inter", {inter32.rows(), inter32.cols()}, 0, inter32.data().data()});
    tensors.push_back({"w_proj", {std::size_t{1}, proj32.cols()}, 0, proj32.data().data()});
    detail::write_pnck(dir, origin, tensors);
}

struct LoadedPolicy {
    PolicyParams params;
    ModelConfig origin;
};

inline LoadedPolicy load_policy_checkpoint(const std::filesystem::path& dir) {
    detail::LoadedPnck loaded = detail::read_pnck(dir);
    Matrix<float> inter32 = detail::take_matrix(loaded, "w_inter");
    Matrix<float> proj32 = detail::take_matrix(loaded, "w_proj");
    if (!loaded.tensors.empty())
        throw IoError("unexpected tensor " + loaded.tensors.begin()->first);
    LoadedPolicy out;
    out.origin = loaded.config;
    out.params.w_inter = Matrix<double>(inter32.rows(), inter32.cols());
    for (std::size_t i = 0; i < inter32.data().size(); ++i)
        out.params.w_inter.data()[i] = double(inter32.data()[i]);
    out.params.w_proj = Matrix<double>(1, proj32.cols());
    for (std::size_t i = 0; i < proj32.data().size(); ++i)
        out.params.w_proj.data()[i] = double(proj32.data()[i]);
    try {
        validate(out.params);
    } catch (const DomainError& e) {
        throw IoError(std::string("policy checkpoint inconsistent: ") + e.what());
    }
    return out;
}

}  // namespace prunenet
