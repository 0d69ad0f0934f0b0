#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgrad/optimizer.hpp"

namespace maskgrad {

// Mask-score initialization settings.
struct InitConfig {
    std::string strategy = "sigmoid_norm";  // sigmoid_norm | score_const | random
    std::string metric = "builtin";         // builtin | file (ignored by random)
    std::string metric_file;                // required when metric == "file"
    double score_const_c = 0.8;             // score_const confidence, in (0.5, 1)
    int64_t metric_batches = 4;             // builtin metric: corpus batches to average
    int64_t metric_batch_size = 8;
};

struct ScheduleConfig {
    std::string mode = "fixed";   // fixed | progressive
    double start = 0.95;          // progressive only: first stage retained fraction
    double step = 0.05;           // progressive only: per-stage decrement
    int64_t steps_per_stage = -1; // progressive only; < 0 splits the total step
                                  // budget evenly across stages
};

struct EvalConfig {
    int64_t batch_size = 16;
};

// Fully resolved settings for one pruning run. Parsed from a JSON file; any
// field may be overridden from the command line. Exactly one of
// retained_fraction / pruning_rate may appear in the JSON (they are two
// namings of the same knob: retained = 1 - pruned).
struct RunConfig {
    std::string checkpoint;
    std::string corpus;
    std::string eval_corpus;  // empty: reuse corpus
    std::string out_dir;
    std::vector<std::string> granularity = {"head", "mlp_channel"};
    double retained_fraction = 0.5;
    std::string budget_mode = "unit_count";  // unit_count | param_weighted
    std::string extract_mode = "global";     // global | local | param_weighted
    OptimizerConfig optimizer;
    InitConfig init;
    ScheduleConfig schedule;
    EvalConfig eval;
    bool write_csv = true;

    void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

// Command-line entry point (subcommands: gen, prune, eval, init-score,
// compact, oracle-check). Returns the process exit code: 0 success,
// 1 invalid configuration/usage, 2 malformed or inconsistent data,
// 3 numeric failure.
int run_cli(int argc, char** argv);

}  // namespace maskgrad
