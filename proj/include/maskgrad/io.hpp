#pragma once

#include <string>
#include <vector>

#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"
#include "maskgrad/optimizer.hpp"

namespace maskgrad {

// Score vector file: u64 LE count, then count little-endian f32 values.
// Values are stored at f32 precision; a JSON sidecar carries the granularity
// summary and the ArchConfig hash so mismatched checkpoints are caught.
void save_scores(const std::string& bin_path, const std::vector<double>& values);
std::vector<double> load_scores(const std::string& bin_path);

struct ScoreSidecar {
    int64_t unit_count = 0;
    std::vector<std::string> kinds;
    std::vector<std::pair<std::string, int64_t>> unit_counts;  // per kind
    std::string arch_hash;
    std::string source;
};
ScoreSidecar make_sidecar(const GranularityMap& gran, const std::string& arch_hash,
                          const std::string& source);
void save_score_sidecar(const std::string& json_path, const ScoreSidecar& sc);
ScoreSidecar load_score_sidecar(const std::string& json_path);

// Training log: newline-delimited JSON, one record per optimizer step.
void save_train_log(const std::string& path, const std::vector<StepRecord>& log);
std::vector<StepRecord> load_train_log(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace maskgrad
