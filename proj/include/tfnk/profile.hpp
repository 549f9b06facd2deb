#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfnk/graph.hpp"

namespace tfnk {

// FLOP convention: one multiply-add counts as 2 FLOPs; norm and activation
// count one op per output element. Stated in every rendered report.
inline constexpr const char* kFlopConvention = "multiply-add = 2 FLOPs";

struct ProfileReport {
  std::string name;
  int input_size = 0;
  int layer_count = 0;
  int64_t parameter_count = 0;
  double gflops = 0.0;
  double checkpoint_size_mb = 0.0;
  std::array<int, 3> head_grids{0, 0, 0};
};

template <typename S>
ProfileReport profile(const ModelGraph<S>& g, int input_size) {
  ProfileReport r;
  r.name = g.cfg().name;
  r.input_size = input_size;
  r.layer_count = g.layer_count();
  r.parameter_count = g.param_count();
  r.gflops = static_cast<double>(g.flops(input_size)) / 1e9;
  int64_t bytes = 4 + 4 + 4;
  auto entry_bytes = [](const auto& nt) {
    return 2 + static_cast<int64_t>(nt.name.size()) + 1 +
           4 * static_cast<int64_t>(nt.tensor.shape().size()) + 4 * nt.tensor.numel();
  };
  for (const auto& p : g.params()) bytes += entry_bytes(p);
  for (const auto& b : g.buffers()) bytes += entry_bytes(b);
  r.checkpoint_size_mb = static_cast<double>(bytes) / (1024.0 * 1024.0);
  r.head_grids = g.head_grids(input_size);
  return r;
}

std::string profile_to_json(const ProfileReport& r);
std::string profile_table(const std::vector<ProfileReport>& rows);

}  // namespace tfnk
