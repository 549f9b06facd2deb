#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "tfnk/rng.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  double denom = std::max({std::abs(got), std::abs(want), 1e-12});
  return std::abs(got - want) / denom;
}

// Relative error with an absolute floor, the usual gradcheck metric.
inline double grad_err(double analytic, double numeric) {
  double denom = std::max(1.0e-6, std::max(std::abs(analytic), std::abs(numeric)));
  return std::abs(analytic - numeric) / denom;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("tfnk_" + tag + "_" + std::to_string(tfnk::Rng::mix32(
                                      static_cast<uint64_t>(::getpid()) * 0x9E3779B97F4A7C15ULL ^
                                      reinterpret_cast<uintptr_t>(this))));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int exit_code = -1;
  std::string out;  // stdout + stderr interleaved
};

// Runs a shell command, captures combined output and the exit code.
inline RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* p = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = ::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace testutil
