#include "maskgrad/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maskgrad/error.hpp"

namespace maskgrad {

namespace {

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) fail_data("score file truncated while reading header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_scores(const std::string& bin_path, const std::vector<double>& values) {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) fail_data("cannot open score file for writing: " + bin_path);
    write_u64(os, static_cast<uint64_t>(values.size()));
    std::vector<float> f(values.begin(), values.end());
    static_assert(sizeof(float) == 4, "float must be 4 bytes");
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!os) fail_data("short write to score file: " + bin_path);
}

std::vector<double> load_scores(const std::string& bin_path) {
    std::ifstream is(bin_path, std::ios::binary);
    if (!is) fail_data("cannot open score file: " + bin_path);
    const uint64_t count = read_u64(is);
    if (count > (1ull << 32)) fail_data("score file count is implausibly large");
    std::vector<float> f(count);
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) fail_data("score file truncated: expected " + std::to_string(count) + " values");
    return std::vector<double>(f.begin(), f.end());
}

ScoreSidecar make_sidecar(const GranularityMap& gran, const std::string& arch_hash,
                          const std::string& source) {
    ScoreSidecar sc;
    sc.unit_count = gran.unit_count();
    sc.arch_hash = arch_hash;
    sc.source = source;
    std::map<std::string, int64_t> per_kind;
    for (const auto& u : gran.units) per_kind[unit_kind_name(u.kind)] += 1;
    for (const auto& [k, v] : per_kind) {
        sc.kinds.push_back(k);
        sc.unit_counts.emplace_back(k, v);
    }
    return sc;
}

void save_score_sidecar(const std::string& json_path, const ScoreSidecar& sc) {
    nlohmann::json j;
    j["unit_count"] = sc.unit_count;
    j["kinds"] = sc.kinds;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [k, v] : sc.unit_counts) counts[k] = v;
    j["unit_counts"] = counts;
    j["arch_hash"] = sc.arch_hash;
    j["source"] = sc.source;
    write_text_file(json_path, j.dump(2) + "\n");
}

ScoreSidecar load_score_sidecar(const std::string& json_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        fail_data("malformed score sidecar " + json_path + ": " + e.what());
    }
    ScoreSidecar sc;
    try {
        sc.unit_count = j.at("unit_count").get<int64_t>();
        sc.kinds = j.at("kinds").get<std::vector<std::string>>();
        for (const auto& [k, v] : j.at("unit_counts").items())
            sc.unit_counts.emplace_back(k, v.get<int64_t>());
        sc.arch_hash = j.at("arch_hash").get<std::string>();
        sc.source = j.at("source").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail_data("score sidecar missing field: " + std::string(e.what()));
    }
    return sc;
}

void save_train_log(const std::string& path, const std::vector<StepRecord>& log) {
    std::ofstream os(path);
    if (!os) fail_data("cannot open train log for writing: " + path);
    for (const auto& r : log) {
        nlohmann::json j;
        j["step"] = r.step;
        j["mean_loss"] = r.mean_loss;
        j["baseline"] = r.delta;
        j["sum_s"] = r.sum_s;
        j["min_s"] = r.min_s;
        j["max_s"] = r.max_s;
        os << j.dump() << "\n";
    }
    if (!os) fail_data("short write to train log: " + path);
}

std::vector<StepRecord> load_train_log(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail_data("cannot open train log: " + path);
    std::vector<StepRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail_data("malformed train log line " + std::to_string(out.size() + 1) + ": " +
                      e.what());
        }
        StepRecord r;
        try {
            r.step = j.at("step").get<int64_t>();
            r.mean_loss = j.at("mean_loss").get<double>();
            r.delta = j.at("baseline").get<double>();
            r.sum_s = j.at("sum_s").get<double>();
            r.min_s = j.at("min_s").get<double>();
            r.max_s = j.at("max_s").get<double>();
        } catch (const nlohmann::json::exception& e) {
            fail_data("train log record missing field: " + std::string(e.what()));
        }
        out.push_back(r);
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_data("cannot open file for writing: " + path);
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) fail_data("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_data("cannot open file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace maskgrad
