#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/cli.hpp"
#include "maskgrad/compaction.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/error.hpp"
#include "maskgrad/evaluation.hpp"
#include "maskgrad/initialization.hpp"
#include "maskgrad/io.hpp"
#include "maskgrad/masking.hpp"
#include "maskgrad/model.hpp"
#include "maskgrad/optimizer.hpp"
#include "maskgrad/oracle.hpp"
#include "maskgrad/projection.hpp"

namespace py = pybind11;
using namespace maskgrad;

namespace {

EnumerableProblem problem_from_table(const std::vector<double>& table) {
    int n = 0;
    while ((1u << n) < table.size()) ++n;
    if ((1u << n) != table.size())
        fail_config("loss table length must be a power of two");
    return EnumerableProblem::from_table(n, table);
}

ExtractMode extract_mode_from_name(const std::string& mode) {
    if (mode == "global") return ExtractMode::global;
    if (mode == "local") return ExtractMode::local;
    fail_config("extract mode must be \"global\" or \"local\"");
}

GranularityMap flat_granularity(size_t n) {
    GranularityMap g;
    g.has_heads = true;
    for (size_t i = 0; i < n; ++i)
        g.units.push_back({UnitKind::head, 0, static_cast<int32_t>(i), 1});
    return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Structured pruning by stochastic mask optimization over forward evaluations";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // --- projection ---
    m.def("project", [](const std::vector<double>& z, double K) { return project(z, K); },
          py::arg("z"), py::arg("k"),
          "Euclidean projection onto {sum(s) <= k} intersected with [0, 1]^n");
    m.def("project_weighted", &project_weighted, py::arg("z"), py::arg("k"), py::arg("weights"),
          "Projection onto {weights . s <= k} intersected with [0, 1]^n");
    m.def("projection_reference", &projection_oracle, py::arg("z"), py::arg("k"),
          "Closed-form projection used to cross-check the iterative solver");

    // --- Bernoulli masks ---
    m.def("sample_mask",
          [](const BernoulliParams& s, uint64_t seed) {
              Rng rng = Rng::stream(seed, 0, 0);
              return sample_mask(s, rng);
          },
          py::arg("s"), py::arg("seed"), "One Bernoulli mask draw per component");
    m.def("log_prob", &log_prob, py::arg("s"), py::arg("mask"));
    m.def("grad_log_prob", &grad_log_prob, py::arg("s"), py::arg("mask"));

    // --- initialization ---
    m.def("sigmoid_norm",
          [](const std::vector<double>& x) {
              return sigmoid_norm(MetricScores{x, "python"});
          },
          py::arg("x"), "sigmoid((x - mean) / population std), elementwise");
    m.def("score_const", &score_const, py::arg("decisions"), py::arg("c"));
    m.def("random_init", &random_init, py::arg("n"), py::arg("retained_fraction"),
          py::arg("seed"));

    // --- extraction over flat score vectors ---
    m.def("extract_mask",
          [](const BernoulliParams& s, double rho, const std::string& mode) {
              return extract_mask(s, rho, extract_mode_from_name(mode),
                                  flat_granularity(s.size()));
          },
          py::arg("s"), py::arg("retained_fraction"), py::arg("mode") = "global",
          "Deterministic top scores -> binary mask (flat unit group)");

    // --- enumeration oracles ---
    m.def("exact_phi",
          [](const std::vector<double>& table, const BernoulliParams& s) {
              return exact_phi(problem_from_table(table), s);
          },
          py::arg("table"), py::arg("s"),
          "Expected loss under the mask distribution, by full enumeration");
    m.def("exact_grad_phi",
          [](const std::vector<double>& table, const BernoulliParams& s) {
              return exact_grad_phi(problem_from_table(table), s);
          },
          py::arg("table"), py::arg("s"));
    m.def("brute_force_best_mask",
          [](const std::vector<double>& table, double K) {
              return brute_force_best_mask(problem_from_table(table), K);
          },
          py::arg("table"), py::arg("k"));

    // --- optimizer over an arbitrary Python loss ---
    m.def("optimize_scores",
          [](const BernoulliParams& init_s, double retained_fraction, int64_t steps,
             const std::function<double(const MaskVector&)>& evaluator, double learning_rate,
             int64_t n_samples, int64_t baseline_window, uint64_t seed,
             const std::string& estimator, bool warm_start_baseline) {
              OptimizerConfig cfg;
              cfg.learning_rate = learning_rate;
              cfg.n_samples = n_samples;
              cfg.baseline_window = baseline_window;
              cfg.retained_fraction = retained_fraction;
              cfg.total_steps = steps;
              cfg.seed = seed;
              if (estimator == "baseline")
                  cfg.estimator = Estimator::baseline;
              else if (estimator == "plain")
                  cfg.estimator = Estimator::plain;
              else
                  fail_config("estimator must be \"baseline\" or \"plain\"");
              cfg.warm_start_baseline = warm_start_baseline;
              GranularityMap gran = flat_granularity(init_s.size());
              auto make_eval = [&evaluator](int64_t) -> LossEvaluator { return evaluator; };
              RunResult rr =
                  optimize(init_s, fixed_schedule(retained_fraction, steps), cfg, gran, make_eval);
              py::list log;
              for (const StepRecord& r : rr.log) {
                  py::dict d;
                  d["step"] = r.step;
                  d["mean_loss"] = r.mean_loss;
                  d["baseline"] = r.delta;
                  d["sum_s"] = r.sum_s;
                  d["min_s"] = r.min_s;
                  d["max_s"] = r.max_s;
                  log.append(std::move(d));
              }
              py::dict out;
              out["s"] = rr.s;
              out["log"] = std::move(log);
              return out;
          },
          py::arg("init_s"), py::arg("retained_fraction"), py::arg("steps"), py::arg("evaluator"),
          py::arg("learning_rate") = 2e-3, py::arg("n_samples") = 2,
          py::arg("baseline_window") = 5, py::arg("seed") = 0, py::arg("estimator") = "baseline",
          py::arg("warm_start_baseline") = false,
          "Projected stochastic score optimization against a scalar-loss callable");

    // --- model / corpus plumbing ---
    py::class_<ArchConfig>(m, "ArchConfig")
        .def(py::init([](int64_t vocab_size, int64_t d_model, int64_t n_layers, int64_t n_heads,
                         int64_t d_ff, int64_t max_seq_len) {
                 ArchConfig a;
                 a.vocab_size = vocab_size;
                 a.d_model = d_model;
                 a.n_layers = n_layers;
                 a.n_heads = n_heads;
                 a.d_head = n_heads > 0 ? d_model / n_heads : 0;
                 a.d_ff = d_ff;
                 a.max_seq_len = max_seq_len;
                 a.validate();
                 return a;
             }),
             py::arg("vocab_size"), py::arg("d_model"), py::arg("n_layers"), py::arg("n_heads"),
             py::arg("d_ff"), py::arg("max_seq_len") = 128)
        .def_readonly("vocab_size", &ArchConfig::vocab_size)
        .def_readonly("d_model", &ArchConfig::d_model)
        .def_readonly("n_layers", &ArchConfig::n_layers)
        .def_readonly("n_heads", &ArchConfig::n_heads)
        .def_readonly("d_head", &ArchConfig::d_head)
        .def_readonly("d_ff", &ArchConfig::d_ff)
        .def_readonly("max_seq_len", &ArchConfig::max_seq_len)
        .def("hash", &ArchConfig::hash);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readonly("arch", &Checkpoint::arch)
        .def("param_count", &Checkpoint::param_count)
        .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); },
             py::arg("path"));
    m.def("random_checkpoint", &random_checkpoint, py::arg("arch"), py::arg("seed"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    py::class_<SegmentStore>(m, "SegmentStore")
        .def_readonly("vocab_size", &SegmentStore::vocab_size)
        .def_readonly("seq_len", &SegmentStore::seq_len)
        .def("count", &SegmentStore::count)
        .def("save", [](const SegmentStore& s, const std::string& path) { save_segments(s, path); },
             py::arg("path"));
    m.def("load_segments", &load_segments, py::arg("path"));
    m.def("synth_uniform", &synth_uniform, py::arg("vocab"), py::arg("seq_len"), py::arg("count"),
          py::arg("seed"));
    m.def("teacher_sample", &teacher_sample, py::arg("checkpoint"), py::arg("seed"),
          py::arg("n_segments"), py::arg("seq_len"), py::arg("temperature") = 1.0);

    py::class_<GranularityMap>(m, "GranularityMap")
        .def("unit_count", &GranularityMap::unit_count)
        .def("total_prunable_params", &GranularityMap::total_prunable_params)
        .def("kinds", [](const GranularityMap& g) {
            std::vector<std::string> names;
            for (const auto& u : g.units) names.push_back(unit_kind_name(u.kind));
            return names;
        });
    m.def("build_granularity",
          [](const Checkpoint& ckpt, const std::vector<std::string>& kinds) {
              return GranularityMap::build(ckpt, kinds);
          },
          py::arg("checkpoint"), py::arg("kinds"));

    m.def("masked_loss",
          [](const Checkpoint& ckpt, const SegmentStore& store,
             const std::vector<int64_t>& segment_idx, const std::optional<MaskVector>& mask,
             const GranularityMap* gran) {
              CalibrationBatch batch = make_batch(store, segment_idx);
              MaskedForwardRequest req;
              req.tokens = &batch;
              req.mask = mask ? &*mask : nullptr;
              req.granularity = gran;
              return forward_loss(ckpt, req);
          },
          py::arg("checkpoint"), py::arg("store"), py::arg("segment_idx"),
          py::arg("mask") = std::nullopt, py::arg("granularity").none(true) = nullptr,
          "Mean next-token loss of a (possibly masked) forward pass");
    m.def("perplexity",
          [](const Checkpoint& ckpt, const SegmentStore& corpus,
             const std::optional<MaskVector>& mask, const GranularityMap* gran,
             int64_t batch_size) {
              return perplexity(ckpt, mask ? &*mask : nullptr, gran, corpus, batch_size);
          },
          py::arg("checkpoint"), py::arg("corpus"), py::arg("mask") = std::nullopt,
          py::arg("granularity").none(true) = nullptr, py::arg("batch_size") = 16);
    m.def("extract_mask_grouped",
          [](const BernoulliParams& s, double rho, const std::string& mode,
             const GranularityMap& gran) {
              if (mode == "param_weighted") return extract_mask_param_weighted(s, rho, gran);
              return extract_mask(s, rho, extract_mode_from_name(mode), gran);
          },
          py::arg("s"), py::arg("retained_fraction"), py::arg("mode"), py::arg("granularity"));
    m.def("builtin_metric",
          [](const Checkpoint& ckpt, const SegmentStore& corpus, const GranularityMap& gran,
             int64_t n_batches, int64_t batch_size) {
              MetricScores ms = builtin_metric(ckpt, corpus, gran, n_batches, batch_size);
              return py::make_tuple(ms.x, ms.source);
          },
          py::arg("checkpoint"), py::arg("corpus"), py::arg("granularity"),
          py::arg("n_batches") = 4, py::arg("batch_size") = 8);
    m.def("compact",
          [](const Checkpoint& ckpt, const MaskVector& mask, const GranularityMap& gran) {
              return compact(ckpt, mask, gran);
          },
          py::arg("checkpoint"), py::arg("mask"), py::arg("granularity"));

    m.def("save_scores", &save_scores, py::arg("path"), py::arg("values"));
    m.def("load_scores", &load_scores, py::arg("path"));

    // --- full command-line surface, callable in-process ---
    m.def("cli",
          [](const std::vector<std::string>& args) {
              std::vector<std::string> full;
              full.push_back("maskgrad");
              full.insert(full.end(), args.begin(), args.end());
              std::vector<char*> argv;
              for (auto& a : full) argv.push_back(a.data());
              return run_cli(static_cast<int>(argv.size()), argv.data());
          },
          py::arg("args"), "Run a CLI subcommand in-process; returns the exit code");
}
