#include "maskgrad/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "maskgrad/compaction.hpp"
#include "maskgrad/error.hpp"
#include "maskgrad/evaluation.hpp"
#include "maskgrad/initialization.hpp"
#include "maskgrad/io.hpp"
#include "maskgrad/model.hpp"
#include "maskgrad/oracle.hpp"
#include "maskgrad/pipeline.hpp"
#include "maskgrad/projection.hpp"

namespace maskgrad {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    if (!j.is_object()) fail_config(ctx + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) fail_config("unknown key \"" + it.key() + "\" in " + ctx);
    }
}

Estimator estimator_from_name(const std::string& name) {
    if (name == "baseline") return Estimator::baseline;
    if (name == "plain") return Estimator::plain;
    fail_config("estimator must be \"baseline\" or \"plain\", got \"" + name + "\"");
}

const char* estimator_name(Estimator e) {
    return e == Estimator::baseline ? "baseline" : "plain";
}

Budget::Mode budget_mode_from_name(const std::string& name) {
    if (name == "unit_count") return Budget::Mode::unit_count;
    if (name == "param_weighted") return Budget::Mode::param_weighted;
    fail_config("budget_mode must be \"unit_count\" or \"param_weighted\", got \"" + name + "\"");
}

// Sidecar convention: foo.bin -> foo.json, otherwise append .json.
std::string sidecar_path(const std::string& bin_path) {
    if (bin_path.size() > 4 && bin_path.substr(bin_path.size() - 4) == ".bin")
        return bin_path.substr(0, bin_path.size() - 4) + ".json";
    return bin_path + ".json";
}

void write_scores_with_sidecar(const std::string& bin_path, const std::vector<double>& values,
                               const GranularityMap& gran, const std::string& arch_hash,
                               const std::string& source) {
    save_scores(bin_path, values);
    save_score_sidecar(sidecar_path(bin_path), make_sidecar(gran, arch_hash, source));
}

std::vector<double> load_scores_checked(const std::string& bin_path, const GranularityMap& gran,
                                        const ArchConfig& arch) {
    std::vector<double> v = load_scores(bin_path);
    if (v.size() != gran.unit_count())
        fail_data("score file " + bin_path + " holds " + std::to_string(v.size()) +
                  " values but the granularity map has " + std::to_string(gran.unit_count()) +
                  " units");
    const std::string sc_path = sidecar_path(bin_path);
    if (std::filesystem::exists(sc_path)) {
        ScoreSidecar sc = load_score_sidecar(sc_path);
        if (sc.arch_hash != arch.hash())
            fail_data("score sidecar " + sc_path + " was produced for a different checkpoint " +
                      "(arch hash " + sc.arch_hash + " != " + arch.hash() + ")");
    }
    return v;
}

SegmentStore load_store_checked(const std::string& path, const ArchConfig& arch) {
    SegmentStore store = load_segments(path);
    store.validate();
    if (store.vocab_size != arch.vocab_size)
        fail_data("corpus " + path + " has vocab_size " + std::to_string(store.vocab_size) +
                  " but the checkpoint expects " + std::to_string(arch.vocab_size));
    if (store.seq_len > arch.max_seq_len)
        fail_data("corpus " + path + " has seq_len " + std::to_string(store.seq_len) +
                  " but the checkpoint caps sequences at " + std::to_string(arch.max_seq_len));
    return store;
}

MaskVector extract_by_mode(const BernoulliParams& s, double rho, const std::string& mode,
                           const GranularityMap& gran) {
    if (mode == "global") return extract_mask(s, rho, ExtractMode::global, gran);
    if (mode == "local") return extract_mask(s, rho, ExtractMode::local, gran);
    if (mode == "param_weighted") return extract_mask_param_weighted(s, rho, gran);
    fail_config("extract_mode must be \"global\", \"local\" or \"param_weighted\", got \"" +
                mode + "\"");
}

json mask_to_json(const MaskVector& mask, const std::string& extract_mode, double rho) {
    json j;
    j["extract_mode"] = extract_mode;
    j["retained_fraction"] = rho;
    int64_t retained = 0;
    json arr = json::array();
    for (uint8_t m : mask) {
        arr.push_back(static_cast<int>(m));
        retained += m;
    }
    j["mask"] = std::move(arr);
    j["units_total"] = mask.size();
    j["units_retained"] = retained;
    return j;
}

}  // namespace

void RunConfig::validate() const {
    if (checkpoint.empty()) fail_config("config: \"checkpoint\" path is required");
    if (corpus.empty()) fail_config("config: \"corpus\" path is required");
    if (out_dir.empty()) fail_config("config: \"out_dir\" is required");
    if (!(retained_fraction > 0.0) || retained_fraction > 1.0)
        fail_config("retained_fraction must be in (0, 1]");
    budget_mode_from_name(budget_mode);
    if (extract_mode != "global" && extract_mode != "local" && extract_mode != "param_weighted")
        fail_config("extract_mode must be \"global\", \"local\" or \"param_weighted\"");
    if (granularity.empty()) fail_config("granularity must name at least one unit kind");
    for (const auto& k : granularity) unit_kind_from_name(k);
    for (size_t i = 0; i < granularity.size(); ++i)
        for (size_t j = i + 1; j < granularity.size(); ++j)
            if (granularity[i] == granularity[j])
                fail_config("granularity lists \"" + granularity[i] + "\" twice");
    optimizer.validate();
    if (init.strategy != "sigmoid_norm" && init.strategy != "score_const" &&
        init.strategy != "random")
        fail_config("init.strategy must be \"sigmoid_norm\", \"score_const\" or \"random\"");
    if (init.metric != "builtin" && init.metric != "file")
        fail_config("init.metric must be \"builtin\" or \"file\"");
    if (init.metric == "file" && init.metric_file.empty())
        fail_config("init.metric == \"file\" requires init.metric_file");
    if (init.strategy == "score_const" &&
        (!(init.score_const_c > 0.5) || !(init.score_const_c < 1.0)))
        fail_config("init.score_const_c must lie in (0.5, 1)");
    if (init.metric_batches < 1) fail_config("init.metric_batches must be >= 1");
    if (init.metric_batch_size < 1) fail_config("init.metric_batch_size must be >= 1");
    if (schedule.mode != "fixed" && schedule.mode != "progressive")
        fail_config("schedule.mode must be \"fixed\" or \"progressive\"");
    if (schedule.mode == "progressive") {
        if (!(schedule.start > retained_fraction) || schedule.start > 1.0)
            fail_config("schedule.start must lie in (retained_fraction, 1]");
        if (!(schedule.step > 0.0)) fail_config("schedule.step must be > 0");
    }
    if (eval.batch_size < 1) fail_config("eval.batch_size must be >= 1");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        fail_config(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    try {
        check_keys(j,
                   {"checkpoint", "corpus", "eval_corpus", "out_dir", "granularity",
                    "retained_fraction", "pruning_rate", "budget_mode", "extract_mode",
                    "optimizer", "init", "schedule", "eval", "write_csv"},
                   "config");
        if (j.contains("checkpoint")) cfg.checkpoint = j["checkpoint"].get<std::string>();
        if (j.contains("corpus")) cfg.corpus = j["corpus"].get<std::string>();
        if (j.contains("eval_corpus")) cfg.eval_corpus = j["eval_corpus"].get<std::string>();
        if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("granularity"))
            cfg.granularity = j["granularity"].get<std::vector<std::string>>();
        if (j.contains("retained_fraction") && j.contains("pruning_rate"))
            fail_config("specify exactly one of retained_fraction / pruning_rate");
        if (j.contains("retained_fraction"))
            cfg.retained_fraction = j["retained_fraction"].get<double>();
        if (j.contains("pruning_rate"))
            cfg.retained_fraction = 1.0 - j["pruning_rate"].get<double>();
        if (j.contains("budget_mode")) cfg.budget_mode = j["budget_mode"].get<std::string>();
        if (j.contains("extract_mode")) cfg.extract_mode = j["extract_mode"].get<std::string>();
        if (j.contains("write_csv")) cfg.write_csv = j["write_csv"].get<bool>();

        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            check_keys(o,
                       {"learning_rate", "batch_size", "n_samples", "baseline_window",
                        "total_steps", "epochs", "seed", "estimator", "warm_start_baseline",
                        "carry_baseline"},
                       "config.optimizer");
            if (o.contains("learning_rate"))
                cfg.optimizer.learning_rate = o["learning_rate"].get<double>();
            if (o.contains("batch_size")) cfg.optimizer.batch_size = o["batch_size"].get<int64_t>();
            if (o.contains("n_samples")) cfg.optimizer.n_samples = o["n_samples"].get<int64_t>();
            if (o.contains("baseline_window"))
                cfg.optimizer.baseline_window = o["baseline_window"].get<int64_t>();
            if (o.contains("total_steps"))
                cfg.optimizer.total_steps = o["total_steps"].get<int64_t>();
            if (o.contains("epochs")) cfg.optimizer.epochs = o["epochs"].get<double>();
            if (o.contains("seed")) cfg.optimizer.seed = o["seed"].get<uint64_t>();
            if (o.contains("estimator"))
                cfg.optimizer.estimator = estimator_from_name(o["estimator"].get<std::string>());
            if (o.contains("warm_start_baseline"))
                cfg.optimizer.warm_start_baseline = o["warm_start_baseline"].get<bool>();
            if (o.contains("carry_baseline"))
                cfg.optimizer.carry_baseline = o["carry_baseline"].get<bool>();
        }
        if (j.contains("init")) {
            const json& o = j["init"];
            check_keys(o,
                       {"strategy", "metric", "metric_file", "score_const_c", "metric_batches",
                        "metric_batch_size"},
                       "config.init");
            if (o.contains("strategy")) cfg.init.strategy = o["strategy"].get<std::string>();
            if (o.contains("metric")) cfg.init.metric = o["metric"].get<std::string>();
            if (o.contains("metric_file")) cfg.init.metric_file = o["metric_file"].get<std::string>();
            if (o.contains("score_const_c"))
                cfg.init.score_const_c = o["score_const_c"].get<double>();
            if (o.contains("metric_batches"))
                cfg.init.metric_batches = o["metric_batches"].get<int64_t>();
            if (o.contains("metric_batch_size"))
                cfg.init.metric_batch_size = o["metric_batch_size"].get<int64_t>();
        }
        if (j.contains("schedule")) {
            const json& o = j["schedule"];
            check_keys(o, {"mode", "start", "step", "steps_per_stage"}, "config.schedule");
            if (o.contains("mode")) cfg.schedule.mode = o["mode"].get<std::string>();
            if (o.contains("start")) cfg.schedule.start = o["start"].get<double>();
            if (o.contains("step")) cfg.schedule.step = o["step"].get<double>();
            if (o.contains("steps_per_stage"))
                cfg.schedule.steps_per_stage = o["steps_per_stage"].get<int64_t>();
        }
        if (j.contains("eval")) {
            const json& o = j["eval"];
            check_keys(o, {"batch_size"}, "config.eval");
            if (o.contains("batch_size")) cfg.eval.batch_size = o["batch_size"].get<int64_t>();
        }
    } catch (const json::exception& e) {
        fail_config(std::string("config field has the wrong type: ") + e.what());
    }
    cfg.optimizer.retained_fraction = cfg.retained_fraction;
    cfg.optimizer.budget_mode = budget_mode_from_name(cfg.budget_mode);
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["checkpoint"] = cfg.checkpoint;
    j["corpus"] = cfg.corpus;
    j["eval_corpus"] = cfg.eval_corpus;
    j["out_dir"] = cfg.out_dir;
    j["granularity"] = cfg.granularity;
    j["retained_fraction"] = cfg.retained_fraction;
    j["budget_mode"] = cfg.budget_mode;
    j["extract_mode"] = cfg.extract_mode;
    j["write_csv"] = cfg.write_csv;
    json o;
    o["learning_rate"] = cfg.optimizer.learning_rate;
    o["batch_size"] = cfg.optimizer.batch_size;
    o["n_samples"] = cfg.optimizer.n_samples;
    o["baseline_window"] = cfg.optimizer.baseline_window;
    o["total_steps"] = cfg.optimizer.total_steps;
    o["epochs"] = cfg.optimizer.epochs;
    o["seed"] = cfg.optimizer.seed;
    o["estimator"] = estimator_name(cfg.optimizer.estimator);
    o["warm_start_baseline"] = cfg.optimizer.warm_start_baseline;
    o["carry_baseline"] = cfg.optimizer.carry_baseline;
    j["optimizer"] = std::move(o);
    json i;
    i["strategy"] = cfg.init.strategy;
    i["metric"] = cfg.init.metric;
    i["metric_file"] = cfg.init.metric_file;
    i["score_const_c"] = cfg.init.score_const_c;
    i["metric_batches"] = cfg.init.metric_batches;
    i["metric_batch_size"] = cfg.init.metric_batch_size;
    j["init"] = std::move(i);
    json s;
    s["mode"] = cfg.schedule.mode;
    s["start"] = cfg.schedule.start;
    s["step"] = cfg.schedule.step;
    s["steps_per_stage"] = cfg.schedule.steps_per_stage;
    j["schedule"] = std::move(s);
    json e;
    e["batch_size"] = cfg.eval.batch_size;
    j["eval"] = std::move(e);
    return j.dump(2) + "\n";
}

namespace {

BernoulliParams initialize_scores(const RunConfig& cfg, const Checkpoint& ckpt,
                                  const SegmentStore& corpus, const GranularityMap& gran,
                                  std::string& source_out) {
    const size_t n = gran.unit_count();
    if (cfg.init.strategy == "random") {
        source_out = "init:random";
        return random_init(n, cfg.retained_fraction, cfg.optimizer.seed);
    }
    MetricScores metric;
    if (cfg.init.metric == "builtin") {
        metric = builtin_metric(ckpt, corpus, gran, cfg.init.metric_batches,
                                cfg.init.metric_batch_size);
    } else {
        metric.x = load_scores_checked(cfg.init.metric_file, gran, ckpt.arch);
        metric.source = "file:" + cfg.init.metric_file;
    }
    if (cfg.init.strategy == "sigmoid_norm") {
        source_out = "init:sigmoid_norm(" + metric.source + ")";
        return sigmoid_norm(metric);
    }
    // score_const: binarize the metric at the target budget, then map the
    // yes/no decision to constant confidences c / 1-c.
    MaskVector decisions =
        extract_mask(sigmoid_norm(metric), cfg.retained_fraction, ExtractMode::global, gran);
    source_out = "init:score_const(c=" + std::to_string(cfg.init.score_const_c) + "," +
                 metric.source + ")";
    return score_const(decisions, cfg.init.score_const_c);
}

std::vector<StageSpec> resolve_schedule(const RunConfig& cfg, int64_t batches_per_epoch,
                                        int64_t& total_steps_out) {
    int64_t total = cfg.optimizer.total_steps;
    if (total < 0) {
        total = static_cast<int64_t>(
            std::ceil(cfg.optimizer.epochs * static_cast<double>(batches_per_epoch)));
        if (total < 1) total = 1;
    }
    total_steps_out = total;
    if (cfg.schedule.mode == "fixed") return fixed_schedule(cfg.retained_fraction, total);
    int64_t n_stages = static_cast<int64_t>(std::llround(
                           (cfg.schedule.start - cfg.retained_fraction) / cfg.schedule.step)) +
                       1;
    if (n_stages < 1) n_stages = 1;
    int64_t sps = cfg.schedule.steps_per_stage;
    if (sps < 1) sps = std::max<int64_t>(1, (total + n_stages - 1) / n_stages);
    std::vector<StageSpec> stages =
        progressive_schedule(cfg.schedule.start, cfg.retained_fraction, cfg.schedule.step, sps);
    total_steps_out = sps * static_cast<int64_t>(stages.size());
    return stages;
}

int cmd_prune(RunConfig cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const auto out = [&cfg](const std::string& name) {
        return (std::filesystem::path(cfg.out_dir) / name).string();
    };

    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    ckpt.validate();
    SegmentStore corpus = load_store_checked(cfg.corpus, ckpt.arch);
    SegmentStore eval_corpus =
        cfg.eval_corpus.empty() ? corpus : load_store_checked(cfg.eval_corpus, ckpt.arch);
    if (cfg.eval_corpus.empty()) cfg.eval_corpus = cfg.corpus;

    GranularityMap gran = GranularityMap::build(ckpt, cfg.granularity);

    std::string init_source;
    BernoulliParams s0 = initialize_scores(cfg, ckpt, corpus, gran, init_source);
    write_scores_with_sidecar(out("scores_init.bin"), s0, gran, ckpt.arch.hash(), init_source);

    const int64_t batches_per_epoch =
        (corpus.count() + cfg.optimizer.batch_size - 1) / cfg.optimizer.batch_size;
    int64_t total_steps = 0;
    std::vector<StageSpec> stages = resolve_schedule(cfg, batches_per_epoch, total_steps);
    cfg.optimizer.total_steps = total_steps;

    RunResult rr = run(ckpt, corpus, gran, s0, cfg.optimizer, stages);
    write_scores_with_sidecar(out("scores.bin"), rr.s, gran, ckpt.arch.hash(), "optimizer");
    save_train_log(out("train_log.ndjson"), rr.log);

    MaskVector mask = extract_by_mode(rr.s, cfg.retained_fraction, cfg.extract_mode, gran);
    write_text_file(out("mask.json"),
                    mask_to_json(mask, cfg.extract_mode, cfg.retained_fraction).dump(2) + "\n");

    double ppl_dense = perplexity(ckpt, nullptr, nullptr, eval_corpus, cfg.eval.batch_size);
    double ppl_masked = perplexity(ckpt, &mask, &gran, eval_corpus, cfg.eval.batch_size);

    PruneReport report = make_report(ckpt, gran, mask, cfg.retained_fraction, cfg.extract_mode,
                                     ppl_dense, ppl_masked);
    write_text_file(out("report.json"), report_to_json(report));
    if (cfg.write_csv) write_text_file(out("report.csv"), report_to_csv(report));
    write_text_file(out("config.json"), run_config_to_json(cfg));

    json summary;
    summary["out_dir"] = cfg.out_dir;
    summary["steps"] = total_steps;
    summary["units_total"] = report.units_total;
    summary["units_retained"] = report.units_retained;
    summary["retained_param_fraction"] = report.retained_param_fraction;
    summary["ppl_dense"] = ppl_dense;
    summary["ppl_masked"] = ppl_masked;
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_gen(const std::string& out_dir, ArchConfig arch, int64_t seq_len, int64_t segments,
            int64_t eval_segments, uint64_t seed, double temperature) {
    if (arch.d_model % arch.n_heads != 0)
        fail_config("d_model must be divisible by the head count");
    arch.d_head = arch.d_model / arch.n_heads;
    arch.validate();
    if (seq_len < 2) fail_config("seq_len must be >= 2");
    if (seq_len > arch.max_seq_len) fail_config("seq_len exceeds max_seq_len");
    if (segments < 1 || eval_segments < 0) fail_config("segment counts must be positive");

    std::filesystem::create_directories(out_dir);
    const auto out = [&out_dir](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    Checkpoint ckpt = random_checkpoint(arch, seed);
    save_checkpoint(ckpt, out("checkpoint.bin"));
    SegmentStore corpus = teacher_sample(ckpt, seed + 1, segments, seq_len, temperature);
    save_segments(corpus, out("corpus.seg"));
    if (eval_segments > 0) {
        SegmentStore ev = teacher_sample(ckpt, seed + 2, eval_segments, seq_len, temperature);
        save_segments(ev, out("eval.seg"));
    }

    json manifest;
    manifest["checkpoint"] = out("checkpoint.bin");
    manifest["corpus"] = out("corpus.seg");
    if (eval_segments > 0) manifest["eval_corpus"] = out("eval.seg");
    manifest["arch"] = {{"vocab_size", arch.vocab_size},   {"d_model", arch.d_model},
                        {"n_layers", arch.n_layers},       {"n_heads", arch.n_heads},
                        {"d_head", arch.d_head},           {"d_ff", arch.d_ff},
                        {"max_seq_len", arch.max_seq_len}, {"arch_hash", arch.hash()}};
    manifest["seq_len"] = seq_len;
    manifest["segments"] = segments;
    manifest["eval_segments"] = eval_segments;
    manifest["seed"] = seed;
    manifest["temperature"] = temperature;
    write_text_file(out("gen.json"), manifest.dump(2) + "\n");
    std::cout << manifest.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path, int64_t batch_size,
             const std::string& scores_path, double rho, const std::string& extract_mode,
             const std::vector<std::string>& kinds) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ckpt.validate();
    SegmentStore corpus = load_store_checked(corpus_path, ckpt.arch);
    json outj;
    outj["segments"] = corpus.count();
    if (scores_path.empty()) {
        outj["masked"] = false;
        outj["perplexity"] = perplexity(ckpt, nullptr, nullptr, corpus, batch_size);
    } else {
        GranularityMap gran = GranularityMap::build(ckpt, kinds);
        std::vector<double> s = load_scores_checked(scores_path, gran, ckpt.arch);
        MaskVector mask = extract_by_mode(s, rho, extract_mode, gran);
        int64_t retained = 0;
        for (uint8_t m : mask) retained += m;
        outj["masked"] = true;
        outj["retained_fraction"] = rho;
        outj["units_retained"] = retained;
        outj["units_total"] = mask.size();
        outj["perplexity"] = perplexity(ckpt, &mask, &gran, corpus, batch_size);
    }
    std::cout << outj.dump() << "\n";
    return 0;
}

int cmd_init_score(const std::string& ckpt_path, const std::string& corpus_path,
                   const std::vector<std::string>& kinds, int64_t n_batches, int64_t batch_size,
                   const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ckpt.validate();
    SegmentStore corpus = load_store_checked(corpus_path, ckpt.arch);
    GranularityMap gran = GranularityMap::build(ckpt, kinds);
    MetricScores metric = builtin_metric(ckpt, corpus, gran, n_batches, batch_size);
    write_scores_with_sidecar(out_path, metric.x, gran, ckpt.arch.hash(), metric.source);
    json j;
    j["out"] = out_path;
    j["units"] = gran.unit_count();
    j["source"] = metric.source;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_compact(const std::string& ckpt_path, const std::string& scores_path, double rho,
                const std::string& extract_mode, const std::vector<std::string>& kinds,
                const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ckpt.validate();
    GranularityMap gran = GranularityMap::build(ckpt, kinds);
    std::vector<double> s = load_scores_checked(scores_path, gran, ckpt.arch);
    MaskVector mask = extract_by_mode(s, rho, extract_mode, gran);
    Checkpoint small = compact(ckpt, mask, gran);
    small.validate();
    save_checkpoint(small, out_path);
    json j;
    j["out"] = out_path;
    j["params_before"] = ckpt.param_count();
    j["params_after"] = small.param_count();
    j["param_fraction"] =
        static_cast<double>(small.param_count()) / static_cast<double>(ckpt.param_count());
    int64_t retained = 0;
    for (uint8_t m : mask) retained += m;
    j["units_retained"] = retained;
    j["units_total"] = mask.size();
    std::cout << j.dump() << "\n";
    return 0;
}

// Internal consistency harness: every numeric path with an independent ground
// truth is exercised and compared. --corrupt-projection perturbs the
// projection output before comparison to demonstrate that a broken
// implementation is actually caught (the projection checks must then FAIL and
// the command exit nonzero).
int cmd_oracle_check(int64_t trials, uint64_t seed, bool corrupt_projection) {
    bool all_ok = true;
    auto report = [&all_ok](bool ok, const std::string& name, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << detail << ")\n";
        all_ok = all_ok && ok;
    };
    auto checked_project = [corrupt_projection](const std::vector<double>& z, double K) {
        std::vector<double> s = project(z, K);
        if (corrupt_projection && !s.empty()) s[0] = std::min(1.0, s[0] + 1e-3);
        return s;
    };

    {  // Projection: bisection vs closed-form segment walk; feasibility; box.
        Rng rng = Rng::stream(seed, 0x5eed, 1);
        double max_diff = 0.0, max_sum_viol = 0.0, max_box_viol = 0.0;
        const int cases = 200;
        for (int t = 0; t < cases; ++t) {
            size_t n = 1 + static_cast<size_t>(rng.below(64));
            std::vector<double> z(n);
            for (auto& v : z) v = rng.uniform(-2.0, 3.0);
            double K = rng.uniform(0.05, 1.0) * static_cast<double>(n);
            std::vector<double> got = checked_project(z, K);
            std::vector<double> ref = projection_oracle(z, K);
            double sum = 0.0;
            for (size_t i = 0; i < n; ++i) {
                max_diff = std::max(max_diff, std::abs(got[i] - ref[i]));
                max_box_viol = std::max({max_box_viol, -got[i], got[i] - 1.0});
                sum += got[i];
            }
            max_sum_viol = std::max(max_sum_viol, sum - K);
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "max |bisection - closed form| = %.3e over %d cases",
                      max_diff, cases);
        report(max_diff <= 1e-8, "projection_matches_closed_form", buf);
        std::snprintf(buf, sizeof(buf), "max budget violation = %.3e, max box violation = %.3e",
                      max_sum_viol, max_box_viol);
        report(max_sum_viol <= 1e-8 && max_box_viol <= 1e-12, "projection_feasibility", buf);
    }

    // Shared 6-unit enumerable problem: additive per-unit costs plus a parity
    // coupling so the loss is not separable.
    const int n_units = 6;
    const double unit_cost[n_units] = {1.7, 0.4, 2.3, 0.9, 1.2, 0.6};
    std::vector<double> table(1u << n_units);
    for (uint32_t bits = 0; bits < table.size(); ++bits) {
        double L = 3.0;
        int on = 0;
        for (int i = 0; i < n_units; ++i) {
            if (bits & (1u << i))
                on += 1;
            else
                L += unit_cost[i];
        }
        L += 0.35 * static_cast<double>(on % 2);
        table[bits] = L;
    }
    EnumerableProblem problem = EnumerableProblem::from_table(n_units, table);

    BernoulliParams s(n_units);
    {
        Rng rng = Rng::stream(seed, 0x5eed, 2);
        for (auto& v : s) v = rng.uniform(0.25, 0.85);
    }

    {  // Estimator means vs the enumerated gradient; baseline variance effect.
        double delta = exact_phi(problem, s);
        EstimatorStats st = estimator_stats(problem, s, delta, trials, seed);
        std::vector<double> exact = exact_grad_phi(problem, s);
        double worst_sigma = 0.0;
        for (int i = 0; i < n_units; ++i) {
            worst_sigma = std::max(worst_sigma, std::abs(st.mean_plain[i] - exact[i]) /
                                                    (st.se_plain[i] + 1e-300));
            worst_sigma = std::max(worst_sigma, std::abs(st.mean_baseline[i] - exact[i]) /
                                                    (st.se_baseline[i] + 1e-300));
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "worst |mean - exact| = %.2f standard errors over %lld draws", worst_sigma,
                      static_cast<long long>(trials));
        report(worst_sigma <= 5.0, "estimator_mean_matches_enumeration", buf);

        double var_plain = 0.0, var_base = 0.0;
        for (int i = 0; i < n_units; ++i) {
            var_plain += st.var_plain[i];
            var_base += st.var_baseline[i];
        }
        std::snprintf(buf, sizeof(buf), "total variance %.3f (baseline) vs %.3f (plain)",
                      var_base, var_plain);
        report(var_base < var_plain, "baseline_reduces_variance", buf);
    }

    {  // Mask sampling marginals.
        std::vector<double> count(n_units, 0.0);
        for (int64_t t = 0; t < trials; ++t) {
            Rng rng = Rng::stream(seed, 0x5a5a, static_cast<uint64_t>(t));
            MaskVector m = sample_mask(s, rng);
            for (int i = 0; i < n_units; ++i) count[i] += m[i];
        }
        double worst_sigma = 0.0;
        for (int i = 0; i < n_units; ++i) {
            double p_hat = count[i] / static_cast<double>(trials);
            double se = std::sqrt(s[i] * (1.0 - s[i]) / static_cast<double>(trials));
            worst_sigma = std::max(worst_sigma, std::abs(p_hat - s[i]) / se);
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "worst |freq - s| = %.2f standard errors", worst_sigma);
        report(worst_sigma <= 5.0, "sampling_marginals", buf);
    }

    {  // End to end on an enumerable problem: the optimizer's extracted mask
       // must match brute force. Unit costs carry a wide gap so the optimum
       // is well separated.
        const int n = 8;
        const double cost[n] = {2.0, 0.5, 1.8, 0.4, 1.9, 0.3, 1.7, 0.6};
        std::vector<double> tbl(1u << n);
        for (uint32_t bits = 0; bits < tbl.size(); ++bits) {
            double L = 3.0;
            for (int i = 0; i < n; ++i)
                if (!(bits & (1u << i))) L += cost[i];
            tbl[bits] = L;
        }
        EnumerableProblem p8 = EnumerableProblem::from_table(n, tbl);
        MaskVector best = brute_force_best_mask(p8, 4.0);
        MaskVector expected = {1, 0, 1, 0, 1, 0, 1, 0};
        report(best == expected, "brute_force_matches_construction",
               "separable problem optimum is the four cheapest-to-keep units");

        GranularityMap tiny;
        for (int i = 0; i < n; ++i)
            tiny.units.push_back({UnitKind::head, 0, i, 1});
        OptimizerConfig ocfg;
        ocfg.learning_rate = 0.05;
        ocfg.n_samples = 8;
        ocfg.retained_fraction = 0.5;
        ocfg.total_steps = 400;
        ocfg.seed = seed;
        BernoulliParams s0(n, 0.5);
        auto make_eval = [&p8](int64_t) -> LossEvaluator {
            return [&p8](const MaskVector& m) { return p8.loss(m); };
        };
        RunResult rr = optimize(s0, fixed_schedule(0.5, 400), ocfg, tiny, make_eval);
        MaskVector got = extract_mask(rr.s, 0.5, ExtractMode::global, tiny);
        report(got == best, "optimizer_recovers_enumerated_optimum",
               "400 projected steps on the 8-unit problem");
    }

    std::cout << (all_ok ? "oracle-check: all checks passed\n"
                         : "oracle-check: FAILURES detected\n");
    return all_ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Structured pruning by stochastic mask optimization over forward evaluations"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic model checkpoint and corpus");
    std::string gen_out;
    ArchConfig gen_arch;
    gen_arch.vocab_size = 64;
    gen_arch.d_model = 32;
    gen_arch.n_layers = 2;
    gen_arch.n_heads = 4;
    gen_arch.d_ff = 64;
    gen_arch.max_seq_len = 128;
    int64_t gen_seq_len = 32, gen_segments = 256, gen_eval_segments = 64;
    uint64_t gen_seed = 0;
    double gen_temperature = 1.0;
    gen->add_option("--out-dir", gen_out, "Output directory")->required();
    gen->add_option("--vocab", gen_arch.vocab_size, "Vocabulary size");
    gen->add_option("--d-model", gen_arch.d_model, "Residual width");
    gen->add_option("--layers", gen_arch.n_layers, "Transformer blocks");
    gen->add_option("--heads", gen_arch.n_heads, "Attention heads per layer");
    gen->add_option("--d-ff", gen_arch.d_ff, "MLP hidden width");
    gen->add_option("--max-seq-len", gen_arch.max_seq_len, "Positional table size");
    gen->add_option("--seq-len", gen_seq_len, "Segment length");
    gen->add_option("--segments", gen_segments, "Calibration segments");
    gen->add_option("--eval-segments", gen_eval_segments, "Held-out segments (0 to skip)");
    gen->add_option("--seed", gen_seed, "Generation seed");
    gen->add_option("--temperature", gen_temperature, "Sampling temperature");

    // prune
    auto* prune = app.add_subcommand("prune", "Learn mask scores and report the pruned model");
    std::string pr_config;
    prune->add_option("--config", pr_config, "Run configuration JSON")->required();
    std::string pr_checkpoint, pr_corpus, pr_eval_corpus, pr_out_dir, pr_budget_mode,
        pr_extract_mode, pr_estimator, pr_init_strategy, pr_metric_file, pr_schedule_mode;
    std::vector<std::string> pr_granularity;
    double pr_retained = 0.0, pr_pruning_rate = 0.0, pr_lr = 0.0, pr_epochs = 0.0,
           pr_score_c = 0.0, pr_sched_start = 0.0, pr_sched_step = 0.0;
    int64_t pr_batch = 0, pr_ns = 0, pr_window = 0, pr_steps = 0, pr_sps = 0, pr_eval_batch = 0;
    uint64_t pr_seed = 0;
    bool pr_warm = false, pr_carry = false, pr_no_csv = false;
    prune->add_option("--checkpoint", pr_checkpoint, "Override: checkpoint path");
    prune->add_option("--corpus", pr_corpus, "Override: calibration corpus");
    prune->add_option("--eval-corpus", pr_eval_corpus, "Override: held-out corpus");
    prune->add_option("--out-dir", pr_out_dir, "Override: output directory");
    auto* opt_rf =
        prune->add_option("--retained-fraction", pr_retained, "Override: fraction kept");
    prune->add_option("--pruning-rate", pr_pruning_rate, "Override: fraction removed")
        ->excludes(opt_rf);
    prune->add_option("--budget-mode", pr_budget_mode, "unit_count | param_weighted");
    prune->add_option("--extract-mode", pr_extract_mode, "global | local | param_weighted");
    prune->add_option("--granularity", pr_granularity, "Unit kinds (comma separated)")
        ->delimiter(',');
    prune->add_option("--lr", pr_lr, "Override: learning rate");
    prune->add_option("--batch-size", pr_batch, "Override: calibration batch size");
    prune->add_option("--n-samples", pr_ns, "Override: masks sampled per step");
    prune->add_option("--baseline-window", pr_window, "Override: baseline averaging window");
    prune->add_option("--steps", pr_steps, "Override: total optimizer steps");
    prune->add_option("--epochs", pr_epochs, "Override: corpus passes (when steps < 0)");
    prune->add_option("--seed", pr_seed, "Override: run seed");
    prune->add_option("--estimator", pr_estimator, "baseline | plain");
    prune->add_flag("--warm-start-baseline", pr_warm, "Start the baseline at the first mean loss");
    prune->add_flag("--carry-baseline", pr_carry, "Keep the baseline across schedule stages");
    prune->add_option("--init-strategy", pr_init_strategy, "sigmoid_norm | score_const | random");
    prune->add_option("--metric-file", pr_metric_file, "Score file to initialize from");
    prune->add_option("--score-const-c", pr_score_c, "score_const confidence in (0.5, 1)");
    prune->add_option("--schedule", pr_schedule_mode, "fixed | progressive");
    prune->add_option("--schedule-start", pr_sched_start, "Progressive: first stage fraction");
    prune->add_option("--schedule-step", pr_sched_step, "Progressive: per-stage decrement");
    prune->add_option("--steps-per-stage", pr_sps, "Progressive: steps per stage");
    prune->add_option("--eval-batch-size", pr_eval_batch, "Override: evaluation batch size");
    prune->add_flag("--no-csv", pr_no_csv, "Skip the CSV report");

    // eval
    auto* ev = app.add_subcommand("eval", "Perplexity of a (optionally masked) checkpoint");
    std::string ev_ckpt, ev_corpus, ev_scores, ev_extract = "global";
    std::vector<std::string> ev_kinds = {"head", "mlp_channel"};
    int64_t ev_batch = 16;
    double ev_rho = 0.5;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--corpus", ev_corpus, "Evaluation corpus")->required();
    ev->add_option("--batch-size", ev_batch, "Evaluation batch size");
    ev->add_option("--scores", ev_scores, "Score file; evaluate the extracted mask");
    ev->add_option("--retained-fraction", ev_rho, "Fraction kept when masking");
    ev->add_option("--extract-mode", ev_extract, "global | local | param_weighted");
    ev->add_option("--granularity", ev_kinds, "Unit kinds (comma separated)")->delimiter(',');

    // init-score
    auto* is = app.add_subcommand("init-score", "Compute the built-in importance metric");
    std::string is_ckpt, is_corpus, is_out;
    std::vector<std::string> is_kinds = {"head", "mlp_channel"};
    int64_t is_batches = 4, is_batch_size = 8;
    is->add_option("--checkpoint", is_ckpt, "Checkpoint path")->required();
    is->add_option("--corpus", is_corpus, "Calibration corpus")->required();
    is->add_option("--out", is_out, "Output score file (.bin)")->required();
    is->add_option("--granularity", is_kinds, "Unit kinds (comma separated)")->delimiter(',');
    is->add_option("--batches", is_batches, "Corpus batches to average");
    is->add_option("--batch-size", is_batch_size, "Batch size for the metric pass");

    // compact
    auto* co = app.add_subcommand("compact", "Slice pruned structures out of a checkpoint");
    std::string co_ckpt, co_scores, co_out, co_extract = "global";
    std::vector<std::string> co_kinds = {"head", "mlp_channel"};
    double co_rho = 0.5;
    co->add_option("--checkpoint", co_ckpt, "Checkpoint path")->required();
    co->add_option("--scores", co_scores, "Score file")->required();
    co->add_option("--out", co_out, "Output checkpoint path")->required();
    co->add_option("--retained-fraction", co_rho, "Fraction kept");
    co->add_option("--extract-mode", co_extract, "global | local | param_weighted");
    co->add_option("--granularity", co_kinds, "Unit kinds (comma separated)")->delimiter(',');

    // oracle-check
    auto* oc = app.add_subcommand("oracle-check", "Self-check against independent ground truths");
    int64_t oc_trials = 20000;
    uint64_t oc_seed = 0;
    bool oc_corrupt = false;
    oc->add_option("--trials", oc_trials, "Monte-Carlo draws per statistical check");
    oc->add_option("--seed", oc_seed, "Check seed");
    oc->add_flag("--corrupt-projection", oc_corrupt,
                 "Deliberately perturb the projection to prove the checks catch it");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) {
            return cmd_gen(gen_out, gen_arch, gen_seq_len, gen_segments, gen_eval_segments,
                           gen_seed, gen_temperature);
        }
        if (*prune) {
            RunConfig cfg = parse_run_config(read_text_file(pr_config));
            if (prune->count("--checkpoint")) cfg.checkpoint = pr_checkpoint;
            if (prune->count("--corpus")) cfg.corpus = pr_corpus;
            if (prune->count("--eval-corpus")) cfg.eval_corpus = pr_eval_corpus;
            if (prune->count("--out-dir")) cfg.out_dir = pr_out_dir;
            if (prune->count("--retained-fraction")) cfg.retained_fraction = pr_retained;
            if (prune->count("--pruning-rate")) cfg.retained_fraction = 1.0 - pr_pruning_rate;
            if (prune->count("--budget-mode")) cfg.budget_mode = pr_budget_mode;
            if (prune->count("--extract-mode")) cfg.extract_mode = pr_extract_mode;
            if (prune->count("--granularity")) cfg.granularity = pr_granularity;
            if (prune->count("--lr")) cfg.optimizer.learning_rate = pr_lr;
            if (prune->count("--batch-size")) cfg.optimizer.batch_size = pr_batch;
            if (prune->count("--n-samples")) cfg.optimizer.n_samples = pr_ns;
            if (prune->count("--baseline-window")) cfg.optimizer.baseline_window = pr_window;
            if (prune->count("--steps")) cfg.optimizer.total_steps = pr_steps;
            if (prune->count("--epochs")) cfg.optimizer.epochs = pr_epochs;
            if (prune->count("--seed")) cfg.optimizer.seed = pr_seed;
            if (prune->count("--estimator"))
                cfg.optimizer.estimator = estimator_from_name(pr_estimator);
            if (pr_warm) cfg.optimizer.warm_start_baseline = true;
            if (pr_carry) cfg.optimizer.carry_baseline = true;
            if (prune->count("--init-strategy")) cfg.init.strategy = pr_init_strategy;
            if (prune->count("--metric-file")) {
                cfg.init.metric = "file";
                cfg.init.metric_file = pr_metric_file;
            }
            if (prune->count("--score-const-c")) cfg.init.score_const_c = pr_score_c;
            if (prune->count("--schedule")) cfg.schedule.mode = pr_schedule_mode;
            if (prune->count("--schedule-start")) cfg.schedule.start = pr_sched_start;
            if (prune->count("--schedule-step")) cfg.schedule.step = pr_sched_step;
            if (prune->count("--steps-per-stage")) cfg.schedule.steps_per_stage = pr_sps;
            if (prune->count("--eval-batch-size")) cfg.eval.batch_size = pr_eval_batch;
            if (pr_no_csv) cfg.write_csv = false;
            cfg.optimizer.retained_fraction = cfg.retained_fraction;
            cfg.optimizer.budget_mode = budget_mode_from_name(cfg.budget_mode);
            return cmd_prune(std::move(cfg));
        }
        if (*ev) return cmd_eval(ev_ckpt, ev_corpus, ev_batch, ev_scores, ev_rho, ev_extract,
                                 ev_kinds);
        if (*is)
            return cmd_init_score(is_ckpt, is_corpus, is_kinds, is_batches, is_batch_size, is_out);
        if (*co) return cmd_compact(co_ckpt, co_scores, co_rho, co_extract, co_kinds, co_out);
        if (*oc) return cmd_oracle_check(oc_trials, oc_seed, oc_corrupt);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace maskgrad
