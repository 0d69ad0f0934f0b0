#pragma once

// Shared test helpers: a self-cleaning temporary directory and tiny fixture
// builders used across the unit test files.

#include <filesystem>
#include <random>
#include <string>

#include "maskgrad/checkpoint.hpp"

namespace testsupport {

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("maskgrad_test_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

// Small but structurally complete architecture: several layers, several heads,
// a non-trivial MLP. Cheap enough for forward passes in every test.
inline maskgrad::ArchConfig small_arch() {
    maskgrad::ArchConfig a;
    a.vocab_size = 48;
    a.d_model = 24;
    a.n_layers = 2;
    a.n_heads = 3;
    a.d_head = 8;
    a.d_ff = 20;
    a.max_seq_len = 32;
    return a;
}

}  // namespace testsupport
