#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stepsim/corpus.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("stepsim-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> gaussian_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

inline std::vector<std::string> numbered_ids(std::size_t n, const std::string& prefix = "s") {
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < n; ++k) {
    std::string digits = std::to_string(k);
    ids.push_back(prefix + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits);
  }
  return ids;
}

}  // namespace testing
