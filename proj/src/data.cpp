#include "maskgrad/data.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "maskgrad/error.hpp"

namespace maskgrad {

void SegmentStore::validate() const {
    if (vocab_size < 2) fail_data("segment store vocab_size must be >= 2");
    if (seq_len < 2) fail_data("segment store seq_len must be >= 2 (need at least one predicted token)");
    if (static_cast<int64_t>(ids.size()) % seq_len != 0) fail_data("segment payload is not a whole number of segments");
    for (int32_t id : ids)
        if (id < 0 || id >= vocab_size) fail_data("token id out of range");
}

namespace {
constexpr char kMagic[6] = {'M', 'G', 'S', 'E', 'G', '1'};
}

void save_segments(const SegmentStore& store, const std::string& path) {
    store.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open segments file for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    uint32_t vocab = static_cast<uint32_t>(store.vocab_size);
    uint32_t seq = static_cast<uint32_t>(store.seq_len);
    uint32_t count = static_cast<uint32_t>(store.count());
    f.write(reinterpret_cast<const char*>(&vocab), 4);
    f.write(reinterpret_cast<const char*>(&seq), 4);
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (int32_t id : store.ids) {
        uint32_t u = static_cast<uint32_t>(id);
        f.write(reinterpret_cast<const char*>(&u), 4);
    }
    if (!f) fail_data("segments write failed: " + path);
}

SegmentStore load_segments(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open segments file: " + path);
    char magic[6];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) fail_data("bad segments magic: " + path);
    uint32_t vocab = 0, seq = 0, count = 0;
    f.read(reinterpret_cast<char*>(&vocab), 4);
    f.read(reinterpret_cast<char*>(&seq), 4);
    f.read(reinterpret_cast<char*>(&count), 4);
    if (!f) fail_data("truncated segments header");
    SegmentStore store;
    store.vocab_size = vocab;
    store.seq_len = seq;
    store.ids.resize(static_cast<size_t>(count) * seq);
    for (size_t i = 0; i < store.ids.size(); ++i) {
        uint32_t u = 0;
        f.read(reinterpret_cast<char*>(&u), 4);
        store.ids[i] = static_cast<int32_t>(u);
    }
    if (!f) fail_data("truncated segments payload");
    store.validate();
    return store;
}

SegmentStore synth_uniform(int64_t vocab, int64_t seq_len, int64_t count, uint64_t seed) {
    SegmentStore store;
    store.vocab_size = vocab;
    store.seq_len = seq_len;
    store.ids.resize(static_cast<size_t>(count) * seq_len);
    for (int64_t i = 0; i < count; ++i) {
        Rng rng = Rng::stream(seed, 0x5Eau, static_cast<uint64_t>(i));
        for (int64_t t = 0; t < seq_len; ++t)
            store.ids[i * seq_len + t] = static_cast<int32_t>(rng.below(static_cast<uint64_t>(vocab)));
    }
    store.validate();
    return store;
}

CalibrationBatch make_batch(const SegmentStore& store, const std::vector<int64_t>& segment_idx) {
    if (segment_idx.empty()) fail_data("empty batch");
    CalibrationBatch b;
    b.batch = static_cast<int64_t>(segment_idx.size());
    b.seq_len = store.seq_len;
    b.ids.resize(static_cast<size_t>(b.batch) * b.seq_len);
    for (int64_t r = 0; r < b.batch; ++r) {
        int64_t s = segment_idx[r];
        if (s < 0 || s >= store.count()) fail_data("segment index out of range");
        std::memcpy(b.ids.data() + r * b.seq_len, store.segment(s), b.seq_len * sizeof(int32_t));
    }
    return b;
}

BatchIterator::BatchIterator(const SegmentStore& store, int64_t batch_size, uint64_t seed, bool shuffle)
    : store_(store), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
    if (batch_size_ < 1) fail_config("batch size must be >= 1");
    if (store_.count() < 1) fail_data("corpus has no segments");
    start_epoch(0);
}

void BatchIterator::start_epoch(int64_t epoch) {
    order_.resize(static_cast<size_t>(store_.count()));
    std::iota(order_.begin(), order_.end(), 0);
    if (shuffle_) {
        Rng rng = Rng::stream(seed_, 0xBA7C4, static_cast<uint64_t>(epoch));
        // Fisher-Yates
        for (int64_t i = store_.count() - 1; i > 0; --i) {
            int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(order_[i], order_[j]);
        }
    }
    cursor_ = 0;
}

bool BatchIterator::next(CalibrationBatch& out) {
    if (cursor_ >= store_.count()) return false;
    int64_t take = std::min(batch_size_, store_.count() - cursor_);
    std::vector<int64_t> idx(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    out = make_batch(store_, idx);
    return true;
}

int64_t BatchIterator::batches_per_epoch() const {
    return (store_.count() + batch_size_ - 1) / batch_size_;
}

}  // namespace maskgrad
