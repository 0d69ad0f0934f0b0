#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgrad/rng.hpp"

namespace maskgrad {

// A batch of fixed-length token-id segments; targets are the ids shifted by
// one, so positions 0..T-2 each predict the next id.
struct CalibrationBatch {
    int64_t batch = 0;
    int64_t seq_len = 0;
    std::vector<int32_t> ids;  // row-major [batch, seq_len]

    const int32_t* segment(int64_t b) const { return ids.data() + b * seq_len; }
};

struct SegmentStore {
    int64_t vocab_size = 0;
    int64_t seq_len = 0;
    std::vector<int32_t> ids;  // row-major [count, seq_len]

    int64_t count() const { return seq_len == 0 ? 0 : static_cast<int64_t>(ids.size()) / seq_len; }
    const int32_t* segment(int64_t i) const { return ids.data() + i * seq_len; }
    void validate() const;
};

// File format: magic "MGSEG1", then u32 LE vocab_size, seq_len, count, then
// count*seq_len u32 LE token ids. Round-trips bit-exactly.
SegmentStore load_segments(const std::string& path);
void save_segments(const SegmentStore& store, const std::string& path);

SegmentStore synth_uniform(int64_t vocab, int64_t seq_len, int64_t count, uint64_t seed);

CalibrationBatch make_batch(const SegmentStore& store, const std::vector<int64_t>& segment_idx);

// One epoch visits every segment exactly once; order is deterministic per
// (seed, epoch) when shuffling. The final batch may be smaller than B.
class BatchIterator {
  public:
    BatchIterator(const SegmentStore& store, int64_t batch_size, uint64_t seed, bool shuffle);

    // Starts epoch `epoch` from the beginning (epoch changes the shuffle).
    void start_epoch(int64_t epoch);
    bool next(CalibrationBatch& out);
    int64_t batches_per_epoch() const;

  private:
    const SegmentStore& store_;
    int64_t batch_size_;
    uint64_t seed_;
    bool shuffle_;
    std::vector<int64_t> order_;
    int64_t cursor_ = 0;
};

}  // namespace maskgrad
