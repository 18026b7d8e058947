#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ruleprompt/datagen.hpp"
#include "ruleprompt/error.hpp"

namespace rptest {

namespace fs = std::filesystem;

// Seed 42, 255 sensors, 600/600 + 100/100 + 100/100.
inline const ruleprompt::DatasetSplit& default_dataset() {
  static const ruleprompt::DatasetSplit split = ruleprompt::generate_dataset(
      ruleprompt::make_default_model(255, 42), ruleprompt::InjectionSpec{}, ruleprompt::GenerationOptions{},
      ruleprompt::RuleConfig{});
  return split;
}

inline ruleprompt::DatasetSplit small_dataset(std::uint64_t seed, std::size_t sensors = 8) {
  ruleprompt::GenerationOptions opts;
  opts.quotas = {{40, 40}, {10, 10}, {10, 10}};
  opts.nominal_pool_size = 500;
  return ruleprompt::generate_dataset(ruleprompt::make_default_model(sensors, seed), ruleprompt::InjectionSpec{},
                                      opts, ruleprompt::RuleConfig{});
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("rptest_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

template <class F>
ruleprompt::ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const ruleprompt::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected a ruleprompt::Error");
}

// Golden files: set RULEPROMPT_UPDATE_GOLDEN=1 to rewrite them after review.
inline std::string golden(const std::string& name, const std::string& actual) {
  const fs::path path = fs::path(RULEPROMPT_TEST_DATA) / name;
  if (const char* env = std::getenv("RULEPROMPT_UPDATE_GOLDEN"); env != nullptr && std::string(env) == "1") {
    spit(path, actual);
  }
  return slurp(path);
}

}  // namespace rptest
