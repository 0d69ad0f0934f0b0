#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "maskgrad/checkpoint.hpp"
#include "maskgrad/error.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/io.hpp"
#include "support.hpp"

using namespace maskgrad;
namespace ts = testsupport;

TEST_CASE("score files round-trip at f32 precision") {
    ts::TempDir tmp("io_scores");
    std::string path = tmp.file("scores.bin");

    // Exactly representable values survive the f32 round trip bit-for-bit.
    std::vector<double> exact = {0.0, 0.5, 0.25, 1.0, -2.75, 1024.0};
    save_scores(path, exact);
    CHECK(load_scores(path) == exact);

    // Other values land on the nearest f32.
    std::vector<double> vals = {0.1, 1.0 / 3.0, 2.718281828459045};
    save_scores(path, vals);
    std::vector<double> back = load_scores(path);
    REQUIRE(back.size() == vals.size());
    for (size_t i = 0; i < vals.size(); ++i) CHECK(back[i] == double(float(vals[i])));

    // Layout: u64 count header + 4 bytes per value.
    CHECK(std::filesystem::file_size(path) == 8 + 4 * vals.size());

    // Empty vector round-trips too.
    save_scores(path, {});
    CHECK(load_scores(path).empty());
    CHECK(std::filesystem::file_size(path) == 8);
}

TEST_CASE("score file loading rejects damaged inputs") {
    ts::TempDir tmp("io_scores_bad");
    CHECK_THROWS_AS((void)load_scores(tmp.file("missing.bin")), DataError);

    // Truncated payload: header promises 4 values, file carries 2.
    std::string trunc = tmp.file("trunc.bin");
    save_scores(trunc, {1.0, 2.0, 3.0, 4.0});
    std::filesystem::resize_file(trunc, 8 + 4 * 2);
    CHECK_THROWS_AS((void)load_scores(trunc), DataError);

    // Truncated header.
    std::string stub = tmp.file("stub.bin");
    write_text_file(stub, "abc");
    CHECK_THROWS_AS((void)load_scores(stub), DataError);

    // Absurd count header.
    std::string huge = tmp.file("huge.bin");
    {
        std::ofstream os(huge, std::ios::binary);
        for (int i = 0; i < 8; ++i) os.put(char(0xFF));
    }
    CHECK_THROWS_AS((void)load_scores(huge), DataError);
}

TEST_CASE("score sidecar describes the granularity and round-trips") {
    Checkpoint ck = random_checkpoint(ts::small_arch(), 91);
    GranularityMap gran = GranularityMap::build(ck, true, true, false);
    ScoreSidecar sc = make_sidecar(gran, ck.arch.hash(), "unit-test");

    CHECK(sc.unit_count == int64_t(gran.unit_count()));
    CHECK(sc.kinds == std::vector<std::string>{"head", "mlp_channel"});
    REQUIRE(sc.unit_counts.size() == 2);
    CHECK(sc.unit_counts[0].second == ck.arch.n_layers * ck.arch.n_heads);
    CHECK(sc.unit_counts[1].second == ck.arch.n_layers * ck.arch.d_ff);
    CHECK(sc.source == "unit-test");

    ts::TempDir tmp("io_sidecar");
    std::string path = tmp.file("scores.json");
    save_score_sidecar(path, sc);
    ScoreSidecar back = load_score_sidecar(path);
    CHECK(back.unit_count == sc.unit_count);
    CHECK(back.kinds == sc.kinds);
    CHECK(back.unit_counts == sc.unit_counts);
    CHECK(back.arch_hash == sc.arch_hash);
    CHECK(back.source == sc.source);
}

TEST_CASE("sidecar hash distinguishes architectures") {
    ArchConfig a = ts::small_arch();
    ArchConfig b = a;
    b.d_ff += 1;
    CHECK(a.hash() == ts::small_arch().hash());
    CHECK(a.hash() != b.hash());
}

TEST_CASE("sidecar loading rejects damaged inputs") {
    ts::TempDir tmp("io_sidecar_bad");
    CHECK_THROWS_AS((void)load_score_sidecar(tmp.file("missing.json")), DataError);

    std::string junk = tmp.file("junk.json");
    write_text_file(junk, "not json {");
    CHECK_THROWS_AS((void)load_score_sidecar(junk), DataError);

    std::string partial = tmp.file("partial.json");
    write_text_file(partial, "{\"unit_count\": 4}");
    CHECK_THROWS_AS((void)load_score_sidecar(partial), DataError);
}

TEST_CASE("train logs round-trip exactly as newline-delimited JSON") {
    std::vector<StepRecord> log;
    StepRecord a;
    a.step = 1;
    a.mean_loss = 1.0 / 3.0;
    a.delta = 0.1;
    a.sum_s = 12.75;
    a.min_s = 0.0;
    a.max_s = 1.0;
    StepRecord b;
    b.step = 2;
    b.mean_loss = 2.5e-300;  // extreme but valid doubles survive
    b.delta = -7.25;
    b.sum_s = 1e18;
    b.min_s = 5e-324;
    b.max_s = 0.3;
    log = {a, b};

    ts::TempDir tmp("io_trainlog");
    std::string path = tmp.file("log.ndjson");
    save_train_log(path, log);

    // One line per record.
    std::string text = read_text_file(path);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);

    std::vector<StepRecord> back = load_train_log(path);
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(back[i].step == log[i].step);
        CHECK(back[i].mean_loss == log[i].mean_loss);
        CHECK(back[i].delta == log[i].delta);
        CHECK(back[i].sum_s == log[i].sum_s);
        CHECK(back[i].min_s == log[i].min_s);
        CHECK(back[i].max_s == log[i].max_s);
    }

    // Empty log writes an empty file and loads back empty.
    std::string empty = tmp.file("empty.ndjson");
    save_train_log(empty, {});
    CHECK(load_train_log(empty).empty());
}

TEST_CASE("train log loading rejects damaged inputs") {
    ts::TempDir tmp("io_trainlog_bad");
    CHECK_THROWS_AS((void)load_train_log(tmp.file("missing.ndjson")), DataError);

    std::string junk = tmp.file("junk.ndjson");
    write_text_file(junk, "{\"step\": 1}\nnot json\n");
    CHECK_THROWS_AS((void)load_train_log(junk), DataError);

    std::string partial = tmp.file("partial.ndjson");
    write_text_file(partial, "{\"step\": 1, \"mean_loss\": 2.0}\n");
    CHECK_THROWS_AS((void)load_train_log(partial), DataError);
}

TEST_CASE("text file helpers round-trip bytes") {
    ts::TempDir tmp("io_text");
    std::string path = tmp.file("note.txt");
    std::string content = "line one\nline two\n\tindented, no trailing newline";
    write_text_file(path, content);
    CHECK(read_text_file(path) == content);

    write_text_file(path, "");
    CHECK(read_text_file(path).empty());

    CHECK_THROWS_AS((void)read_text_file(tmp.file("absent.txt")), DataError);
}
