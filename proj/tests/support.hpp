#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

#include "stagelab/synthetic.hpp"

namespace stagelab::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("stagelab-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline SyntheticConfig small_config(std::uint64_t seed, int patients = 8, double separability = 0.78) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  cfg.n_patients = patients;
  cfg.lesions_per_patient_mean = 6.0;
  cfg.lesions_per_patient_sd = 3.0;
  cfg.separability = separability;
  return cfg;
}

}  // namespace stagelab::testing
