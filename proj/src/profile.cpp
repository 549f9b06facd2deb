#include "tfnk/profile.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>

namespace tfnk {

std::string profile_to_json(const ProfileReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["input_size"] = r.input_size;
  j["layer_count"] = r.layer_count;
  j["parameter_count"] = r.parameter_count;
  j["gflops"] = r.gflops;
  j["checkpoint_size_mb"] = r.checkpoint_size_mb;
  j["head_grids"] = r.head_grids;
  j["flop_convention"] = kFlopConvention;
  return j.dump(2) + "\n";
}

std::string profile_table(const std::vector<ProfileReport>& rows) {
  char line[256];
  std::string out;
  out += std::string("flop convention: ") + kFlopConvention + "\n";
  std::snprintf(line, sizeof(line), "%-12s %8s %12s %10s %10s %10s\n", "model", "layers",
                "params", "gflops", "ckpt_mb", "input");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-12s %8d %12lld %10.2f %10.2f %10d\n", r.name.c_str(),
                  r.layer_count, static_cast<long long>(r.parameter_count), r.gflops,
                  r.checkpoint_size_mb, r.input_size);
    out += line;
  }
  return out;
}

}  // namespace tfnk
