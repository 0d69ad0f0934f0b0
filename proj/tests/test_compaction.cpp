#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "maskgrad/checkpoint.hpp"
#include "maskgrad/compaction.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/error.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/model.hpp"
#include "support.hpp"

using namespace maskgrad;

namespace {

ArchConfig arch3() {
    ArchConfig a = testsupport::small_arch();
    a.n_layers = 3;
    return a;
}

// Masked forward on `full` must equal the dense forward on its compaction.
void check_forward_equivalence(const Checkpoint& full, const MaskVector& mask,
                               const GranularityMap& gran, uint64_t token_seed) {
    Checkpoint small = compact(full, mask, gran);
    SegmentStore corpus = synth_uniform(full.arch.vocab_size, 12, 2, token_seed);
    CalibrationBatch batch = make_batch(corpus, {0, 1});

    MaskedForwardRequest masked;
    masked.tokens = &batch;
    masked.mask = &mask;
    masked.granularity = &gran;
    Tensor a = forward_logits(full, masked);

    MaskedForwardRequest dense;
    dense.tokens = &batch;
    Tensor b = forward_logits(small, dense);

    REQUIRE(a.shape == b.shape);
    for (size_t i = 0; i < a.data.size(); ++i) REQUIRE(a.data[i] == b.data[i]);
}

}  // namespace

TEST_CASE("retained_prunable_params sums kept units only") {
    GranularityMap g;
    g.has_heads = true;
    g.head_offset = {0};
    g.units = {UnitDesc{UnitKind::head, 0, 0, 10}, UnitDesc{UnitKind::head, 0, 1, 20},
               UnitDesc{UnitKind::head, 0, 2, 30}};
    CHECK(retained_prunable_params(g, {1, 0, 1}) == 40);
    CHECK(retained_prunable_params(g, {0, 0, 0}) == 0);
    CHECK(retained_prunable_params(g, {1, 1, 1}) == 60);
    CHECK_THROWS_AS((void)retained_prunable_params(g, {1, 0}), ConfigError);
}

TEST_CASE("compaction with an all-ones mask reproduces the model") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 51);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    MaskVector ones(gran.unit_count(), 1);
    Checkpoint same = compact(ck, ones, gran);
    CHECK(same.param_count() == ck.param_count());
    CHECK(same.arch.n_layers == ck.arch.n_layers);
    REQUIRE(same.tensors.size() == ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        const Tensor& u = same.at(name);
        CHECK(u.shape == t.shape);
        CHECK(u.data == t.data);
    }
}

TEST_CASE("compacted dense forward equals masked forward (width units)") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 52);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    Rng rng = Rng::stream(52, 1, 0);
    for (int trial = 0; trial < 8; ++trial) {
        MaskVector mask(gran.unit_count());
        for (auto& b : mask) b = rng.uniform01() < 0.7 ? 1 : 0;
        // Keep at least one head and one channel per layer so no dimension
        // collapses in this case (zero-dim layers get their own test).
        for (int64_t l = 0; l < ck.arch.n_layers; ++l) {
            mask[gran.head_unit(l, 0)] = 1;
            mask[gran.channel_unit(l, 0)] = 1;
        }
        check_forward_equivalence(ck, mask, gran, 100 + uint64_t(trial));
    }
}

TEST_CASE("compaction accounting identity is exact") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 53);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    Rng rng = Rng::stream(53, 1, 0);
    for (int trial = 0; trial < 20; ++trial) {
        MaskVector mask(gran.unit_count());
        for (auto& b : mask) b = rng.uniform01() < 0.5 ? 1 : 0;
        for (int64_t l = 0; l < ck.arch.n_layers; ++l) {
            mask[gran.head_unit(l, 0)] = 1;
            mask[gran.channel_unit(l, 0)] = 1;
        }
        Checkpoint small = compact(ck, mask, gran);
        int64_t expect = ck.param_count() - gran.total_prunable_params() +
                         retained_prunable_params(gran, mask);
        CHECK(small.param_count() == expect);
    }
}

TEST_CASE("head slicing keeps the kept heads' weights verbatim") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 54);
    GranularityMap gran = GranularityMap::build(ck, true, false, false);
    // small_arch has 3 heads per layer; drop head 1 of layer 0.
    MaskVector mask(gran.unit_count(), 1);
    mask[gran.head_unit(0, 1)] = 0;
    Checkpoint small = compact(ck, mask, gran);

    CHECK(small.layer_dims[0].n_heads == 2);
    CHECK(small.layer_dims[1].n_heads == ck.arch.n_heads);
    const int64_t dh = ck.arch.d_head, d = ck.arch.d_model;
    const Tensor& wq_old = ck.at(Checkpoint::layer_tensor(0, "wq"));
    const Tensor& wq_new = small.at(Checkpoint::layer_tensor(0, "wq"));
    REQUIRE(wq_new.shape == std::vector<int64_t>{d, 2 * dh});
    // Compacted head 0 is original head 0; compacted head 1 is original head 2.
    for (int64_t r = 0; r < d; ++r)
        for (int64_t j = 0; j < dh; ++j) {
            CHECK(wq_new.data[r * 2 * dh + j] == wq_old.data[r * 3 * dh + j]);
            CHECK(wq_new.data[r * 2 * dh + dh + j] == wq_old.data[r * 3 * dh + 2 * dh + j]);
        }
    const Tensor& wo_old = ck.at(Checkpoint::layer_tensor(0, "wo"));
    const Tensor& wo_new = small.at(Checkpoint::layer_tensor(0, "wo"));
    REQUIRE(wo_new.shape == std::vector<int64_t>{2 * dh, d});
    for (int64_t j = 0; j < dh; ++j)
        for (int64_t c = 0; c < d; ++c) {
            CHECK(wo_new.data[j * d + c] == wo_old.data[j * d + c]);
            CHECK(wo_new.data[(dh + j) * d + c] == wo_old.data[(2 * dh + j) * d + c]);
        }
    check_forward_equivalence(ck, mask, gran, 200);
}

TEST_CASE("channel slicing keeps the kept channels' weights verbatim") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 55);
    GranularityMap gran = GranularityMap::build(ck, false, true, false);
    MaskVector mask(gran.unit_count(), 1);
    mask[gran.channel_unit(1, 4)] = 0;
    mask[gran.channel_unit(1, 7)] = 0;
    Checkpoint small = compact(ck, mask, gran);

    const int64_t ff = ck.arch.d_ff, d = ck.arch.d_model;
    CHECK(small.layer_dims[1].d_ff == ff - 2);
    const Tensor& up_old = ck.at(Checkpoint::layer_tensor(1, "w_up"));
    const Tensor& up_new = small.at(Checkpoint::layer_tensor(1, "w_up"));
    std::vector<int64_t> kept;
    for (int64_t c = 0; c < ff; ++c)
        if (c != 4 && c != 7) kept.push_back(c);
    for (int64_t r = 0; r < d; ++r)
        for (size_t i = 0; i < kept.size(); ++i)
            CHECK(up_new.data[r * (ff - 2) + int64_t(i)] == up_old.data[r * ff + kept[i]]);
    const Tensor& dn_old = ck.at(Checkpoint::layer_tensor(1, "w_down"));
    const Tensor& dn_new = small.at(Checkpoint::layer_tensor(1, "w_down"));
    for (size_t i = 0; i < kept.size(); ++i)
        for (int64_t c = 0; c < d; ++c)
            CHECK(dn_new.data[int64_t(i) * d + c] == dn_old.data[kept[i] * d + c]);
    check_forward_equivalence(ck, mask, gran, 201);
}

TEST_CASE("a layer with no retained heads keeps norms but drops the attention block") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 56);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    MaskVector mask(gran.unit_count(), 1);
    for (int64_t h = 0; h < ck.arch.n_heads; ++h) mask[gran.head_unit(0, h)] = 0;
    Checkpoint small = compact(ck, mask, gran);

    CHECK(small.layer_dims[0].n_heads == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(0, "wq")) == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(0, "wo")) == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(0, "norm_attn")) == 1);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(0, "w_up")) == 1);
    check_forward_equivalence(ck, mask, gran, 202);
}

TEST_CASE("a layer with no retained channels drops the MLP block") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 57);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    MaskVector mask(gran.unit_count(), 1);
    for (int64_t c = 0; c < ck.arch.d_ff; ++c) mask[gran.channel_unit(1, c)] = 0;
    Checkpoint small = compact(ck, mask, gran);

    CHECK(small.layer_dims[1].d_ff == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(1, "w_up")) == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(1, "w_gate")) == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(1, "w_down")) == 0);
    CHECK(small.tensors.count(Checkpoint::layer_tensor(1, "norm_mlp")) == 1);
    check_forward_equivalence(ck, mask, gran, 203);
}

TEST_CASE("layer pruning removes and renumbers layers") {
    Checkpoint ck = random_checkpoint(arch3(), 58);
    GranularityMap gran = GranularityMap::build(ck, false, false, true);
    REQUIRE(gran.unit_count() == 3);
    MaskVector mask = {1, 0, 1};
    Checkpoint small = compact(ck, mask, gran);

    CHECK(small.arch.n_layers == 2);
    CHECK(small.layer_dims.size() == 2);
    // Compacted layer 1 is original layer 2, verbatim.
    for (const char* nm : {"wq", "wk", "wv", "wo", "w_up", "w_gate", "w_down", "norm_attn",
                           "norm_mlp"}) {
        const Tensor& t0 = ck.at(Checkpoint::layer_tensor(0, nm));
        const Tensor& n0 = small.at(Checkpoint::layer_tensor(0, nm));
        CHECK(n0.data == t0.data);
        const Tensor& t2 = ck.at(Checkpoint::layer_tensor(2, nm));
        const Tensor& n1 = small.at(Checkpoint::layer_tensor(1, nm));
        CHECK(n1.data == t2.data);
    }
    CHECK(small.tensors.count(Checkpoint::layer_tensor(2, "wq")) == 0);
    check_forward_equivalence(ck, mask, gran, 204);
}

TEST_CASE("removing every layer is rejected") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 59);
    GranularityMap gran = GranularityMap::build(ck, false, false, true);
    MaskVector none(gran.unit_count(), 0);
    CHECK_THROWS_AS((void)compact(ck, none, gran), ConfigError);
}

TEST_CASE("compact validates the mask length") {
    Checkpoint ck = random_checkpoint(testsupport::small_arch(), 60);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    MaskVector bad(gran.unit_count() + 1, 1);
    CHECK_THROWS_AS((void)compact(ck, bad, gran), ConfigError);
}

TEST_CASE("compacted checkpoints round-trip through save/load") {
    namespace ts = testsupport;
    Checkpoint ck = random_checkpoint(ts::small_arch(), 61);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    MaskVector mask(gran.unit_count(), 1);
    mask[gran.head_unit(0, 2)] = 0;
    mask[gran.channel_unit(0, 9)] = 0;
    Checkpoint small = compact(ck, mask, gran);

    ts::TempDir tmp("compact_io");
    std::string path = tmp.file("compacted.bin");
    save_checkpoint(small, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.arch.n_layers == small.arch.n_layers);
    CHECK(back.layer_dims[0].n_heads == 2);
    CHECK(back.layer_dims[0].d_ff == ck.arch.d_ff - 1);
    CHECK(back.param_count() == small.param_count());
    for (const auto& [name, t] : small.tensors) CHECK(back.at(name).data == t.data);
}
