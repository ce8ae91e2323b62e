#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "annoclust/feature_store.hpp"

namespace testing {

// Object ids are "o000", "o001", ... so id order equals row order.
inline std::string id_of(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "o" + digits;
}

inline annoclust::FeatureStore store_from(const std::vector<std::vector<float>>& rows) {
  annoclust::FeatureStore store(rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) store.add(id_of(i), rows[i]);
  return store;
}

inline annoclust::FeatureStore store_1d(const std::vector<float>& xs) {
  std::vector<std::vector<float>> rows;
  for (float x : xs) rows.push_back({x});
  return store_from(rows);
}

inline annoclust::FeatureStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  annoclust::FeatureStore store(dim);
  std::vector<float> f(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : f) x = g(rng);
    store.add(id_of(i), f);
  }
  return store;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("annoclust-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
