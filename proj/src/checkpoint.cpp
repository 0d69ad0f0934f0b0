#include "maskgrad/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include "maskgrad/error.hpp"

namespace maskgrad {

using nlohmann::json;

void ArchConfig::validate() const {
    if (vocab_size < 2) fail_config("vocab_size must be >= 2");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_head < 1 || d_ff < 1 || max_seq_len < 1)
        fail_config("all architecture counts must be >= 1");
    if (n_heads * d_head != d_model) fail_config("n_heads * d_head must equal d_model");
    if (!(rms_eps >= 0.0f)) fail_config("rms_eps must be non-negative");
}

std::string ArchConfig::hash() const {
    json j = {{"vocab_size", vocab_size}, {"d_model", d_model},   {"n_layers", n_layers},
              {"n_heads", n_heads},       {"d_head", d_head},     {"d_ff", d_ff},
              {"max_seq_len", max_seq_len}, {"rms_eps", rms_eps}};
    std::string canon = j.dump();
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string Checkpoint::layer_tensor(int64_t layer, const std::string& field) {
    return "layers." + std::to_string(layer) + "." + field;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail_data("checkpoint tensor missing: " + name);
    return it->second;
}

Tensor& Checkpoint::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail_data("checkpoint tensor missing: " + name);
    return it->second;
}

int64_t Checkpoint::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

void Checkpoint::validate() const {
    arch.validate();
    if (static_cast<int64_t>(layer_dims.size()) != arch.n_layers)
        fail_data("layer_dims length does not match n_layers");

    auto expect = [&](const std::string& name, std::vector<int64_t> shape) {
        const Tensor& t = at(name);
        if (t.shape != shape) fail_data("checkpoint tensor has unexpected shape: " + name);
        t.check_invariants();
    };

    expect("tok_emb", {arch.vocab_size, arch.d_model});
    expect("lm_head", {arch.d_model, arch.vocab_size});
    expect("norm_final", {arch.d_model});
    for (int64_t l = 0; l < arch.n_layers; ++l) {
        const LayerDims& ld = layer_dims[l];
        if (ld.n_heads < 0 || ld.d_ff < 0) fail_data("negative layer dims");
        if (ld.n_heads > 0) {
            int64_t da = ld.n_heads * arch.d_head;
            expect(layer_tensor(l, "wq"), {arch.d_model, da});
            expect(layer_tensor(l, "wk"), {arch.d_model, da});
            expect(layer_tensor(l, "wv"), {arch.d_model, da});
            expect(layer_tensor(l, "wo"), {da, arch.d_model});
        }
        if (ld.d_ff > 0) {
            expect(layer_tensor(l, "w_up"), {arch.d_model, ld.d_ff});
            expect(layer_tensor(l, "w_gate"), {arch.d_model, ld.d_ff});
            expect(layer_tensor(l, "w_down"), {ld.d_ff, arch.d_model});
        }
        expect(layer_tensor(l, "norm_attn"), {arch.d_model});
        expect(layer_tensor(l, "norm_mlp"), {arch.d_model});
    }
}

Checkpoint random_checkpoint(const ArchConfig& arch, uint64_t seed) {
    arch.validate();
    Checkpoint ckpt;
    ckpt.arch = arch;
    ckpt.layer_dims.assign(arch.n_layers, LayerDims{arch.n_heads, arch.d_ff});

    int64_t tensor_idx = 0;
    auto gauss = [&](std::vector<int64_t> shape, double std_dev) {
        Tensor t = Tensor::zeros(std::move(shape));
        Rng rng = Rng::stream(seed, 0x77, static_cast<uint64_t>(tensor_idx++));
        for (float& v : t.data) v = static_cast<float>(rng.normal() * std_dev);
        return t;
    };

    // 1/sqrt(d) scaling keeps residual-stream magnitudes O(1) through depth;
    // embeddings and head get a larger scale so logits are informative enough
    // for masking to have measurable effect.
    double w_std = 0.7 / std::sqrt(static_cast<double>(arch.d_model));
    ckpt.tensors["tok_emb"] = gauss({arch.vocab_size, arch.d_model}, 1.0);
    ckpt.tensors["lm_head"] = gauss({arch.d_model, arch.vocab_size}, 2.0 / std::sqrt(static_cast<double>(arch.d_model)));
    ckpt.tensors["norm_final"] = Tensor::full({arch.d_model}, 1.0f);
    for (int64_t l = 0; l < arch.n_layers; ++l) {
        ckpt.tensors[Checkpoint::layer_tensor(l, "wq")] = gauss({arch.d_model, arch.d_model}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "wk")] = gauss({arch.d_model, arch.d_model}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "wv")] = gauss({arch.d_model, arch.d_model}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "wo")] = gauss({arch.d_model, arch.d_model}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "w_up")] = gauss({arch.d_model, arch.d_ff}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "w_gate")] = gauss({arch.d_model, arch.d_ff}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "w_down")] = gauss({arch.d_ff, arch.d_model}, w_std);
        ckpt.tensors[Checkpoint::layer_tensor(l, "norm_attn")] = Tensor::full({arch.d_model}, 1.0f);
        ckpt.tensors[Checkpoint::layer_tensor(l, "norm_mlp")] = Tensor::full({arch.d_model}, 1.0f);
    }
    ckpt.validate();
    return ckpt;
}

namespace {

constexpr char kMagic[8] = {'M', 'G', 'P', 'R', 'U', 'N', 'E', '1'};

json arch_to_json(const ArchConfig& a) {
    return {{"vocab_size", a.vocab_size}, {"d_model", a.d_model},   {"n_layers", a.n_layers},
            {"n_heads", a.n_heads},       {"d_head", a.d_head},     {"d_ff", a.d_ff},
            {"max_seq_len", a.max_seq_len}, {"rms_eps", a.rms_eps}};
}

ArchConfig arch_from_json(const json& j) {
    ArchConfig a;
    try {
        a.vocab_size = j.at("vocab_size").get<int64_t>();
        a.d_model = j.at("d_model").get<int64_t>();
        a.n_layers = j.at("n_layers").get<int64_t>();
        a.n_heads = j.at("n_heads").get<int64_t>();
        a.d_head = j.at("d_head").get<int64_t>();
        a.d_ff = j.at("d_ff").get<int64_t>();
        a.max_seq_len = j.at("max_seq_len").get<int64_t>();
        a.rms_eps = j.at("rms_eps").get<float>();
    } catch (const json::exception& e) {
        fail_data(std::string("bad checkpoint arch header: ") + e.what());
    }
    return a;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ckpt.validate();
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
    }
    json dims = json::array();
    for (const LayerDims& ld : ckpt.layer_dims) dims.push_back({{"n_heads", ld.n_heads}, {"d_ff", ld.d_ff}});
    json header = {{"arch", arch_to_json(ckpt.arch)}, {"layer_dims", dims}, {"tensors", dir}};
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : ckpt.tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) fail_data("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        fail_data("bad checkpoint magic: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1ull << 30)) fail_data("bad checkpoint header length");
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) fail_data("truncated checkpoint header");

    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded()) fail_data("checkpoint header is not valid JSON");

    Checkpoint ckpt;
    ckpt.arch = arch_from_json(header.at("arch"));
    for (const json& d : header.at("layer_dims"))
        ckpt.layer_dims.push_back({d.at("n_heads").get<int64_t>(), d.at("d_ff").get<int64_t>()});

    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    for (const json& d : header.at("tensors"))
        entries.push_back({d.at("name").get<std::string>(),
                           d.at("shape").get<std::vector<int64_t>>(),
                           d.at("offset").get<uint64_t>()});

    std::streampos payload_start = f.tellg();
    for (const Entry& e : entries) {
        Tensor t = Tensor::zeros(e.shape);
        f.seekg(payload_start + static_cast<std::streamoff>(e.offset));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!f) fail_data("truncated checkpoint payload at tensor " + e.name);
        ckpt.tensors[e.name] = std::move(t);
    }
    ckpt.validate();
    return ckpt;
}

}  // namespace maskgrad
