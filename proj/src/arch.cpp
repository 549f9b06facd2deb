#include "tfnk/arch.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "tfnk/errors.hpp"

using nlohmann::json;

namespace tfnk {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Focus: return "focus";
    case LayerKind::Conv: return "conv";
    case LayerKind::BottleneckCSP: return "csp";
    case LayerKind::SPP: return "spp";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Concat: return "concat";
    case LayerKind::Detect: return "detect";
  }
  return "?";
}

namespace {

LayerKind kind_from_name(const std::string& s, const std::string& where) {
  if (s == "focus") return LayerKind::Focus;
  if (s == "conv") return LayerKind::Conv;
  if (s == "csp") return LayerKind::BottleneckCSP;
  if (s == "spp") return LayerKind::SPP;
  if (s == "upsample") return LayerKind::Upsample;
  if (s == "concat") return LayerKind::Concat;
  if (s == "detect") return LayerKind::Detect;
  throw config_error(where + ": unknown layer kind '" + s + "'");
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  j["from"] = l.from;
  switch (l.kind) {
    case LayerKind::Focus:
      j["channels"] = l.channels;
      j["kernel"] = l.kernel;
      break;
    case LayerKind::Conv:
      j["channels"] = l.channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::BottleneckCSP:
      j["channels"] = l.channels;
      j["repeats"] = l.repeats;
      j["shortcut"] = l.shortcut;
      break;
    case LayerKind::SPP:
      j["channels"] = l.channels;
      j["pool_kernels"] = l.pool_kernels;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw config_error(where + ": layer entry must be an object");
  LayerSpec l;
  l.kind = kind_from_name(j.value("kind", std::string()), where);
  if (j.contains("from")) l.from = j.at("from").get<std::vector<int>>();
  l.channels = j.value("channels", 0);
  l.repeats = j.value("repeats", 1);
  l.kernel = j.value("kernel", l.kind == LayerKind::Focus ? 3 : 1);
  l.stride = j.value("stride", 1);
  l.shortcut = j.value("shortcut", true);
  if (j.contains("pool_kernels")) l.pool_kernels = j.at("pool_kernels").get<std::vector<int>>();
  if (l.kind == LayerKind::SPP && l.pool_kernels.empty()) l.pool_kernels = {5, 9, 13};
  return l;
}

}  // namespace

int ArchConfig::realized_channels(int nominal) const {
  const long r = std::lround(nominal * width_multiple / 8.0) * 8;
  return static_cast<int>(r < 8 ? 8 : r);
}

int ArchConfig::realized_repeats(int nominal) const {
  const long r = std::lround(nominal * depth_multiple);
  return static_cast<int>(r < 1 ? 1 : r);
}

int ArchConfig::effective_kernel(int row_index) const {
  auto it = kernel_overrides.find(row_index);
  if (it != kernel_overrides.end()) return it->second;
  return row(row_index).kernel;
}

void ArchConfig::validate() const {
  if (depth_multiple <= 0 || width_multiple <= 0) {
    throw config_error(name + ": multipliers must be positive");
  }
  if (num_classes < 1) throw config_error(name + ": num_classes must be >= 1");
  if (input_size < 32) throw config_error(name + ": input_size too small");
  for (size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] <= 0 || input_size % strides[i] != 0) {
      throw config_error(name + ": input_size " + std::to_string(input_size) +
                         " is not divisible by stride " + std::to_string(strides[i]));
    }
    if (i > 0 && strides[i] <= strides[i - 1]) {
      throw config_error(name + ": strides must be strictly increasing");
    }
  }
  for (const auto& level : anchors) {
    for (const auto& a : level) {
      if (a[0] <= 0 || a[1] <= 0) throw config_error(name + ": anchors must be positive");
    }
  }
  if (backbone.empty() || neck.empty()) throw config_error(name + ": empty backbone or neck");
  const int n = rows();
  int detect_count = 0;
  for (int i = 0; i < n; ++i) {
    const LayerSpec& l = row(i);
    if (l.kind == LayerKind::Detect) {
      ++detect_count;
      if (i != n - 1) throw config_error(name + ": detect must be the final row");
      if (l.from.size() != 3) throw config_error(name + ": detect needs exactly 3 source rows");
    }
    if (i == 0) {
      if (l.from != std::vector<int>{-1}) {
        throw config_error(name + ": row 0 must read the network input (from: [-1])");
      }
    } else {
      for (int f : l.from) {
        const int r = f < 0 ? i + f : f;
        if (r < 0 || r >= i) {
          throw config_error(name + ": row " + std::to_string(i) + " references row " +
                             std::to_string(f) + " which is not an earlier layer");
        }
      }
    }
    if (l.kind == LayerKind::Focus || l.kind == LayerKind::Conv ||
        l.kind == LayerKind::BottleneckCSP || l.kind == LayerKind::SPP) {
      if (l.channels < 1) {
        throw config_error(name + ": row " + std::to_string(i) + " needs positive channels");
      }
    }
    if (l.kind == LayerKind::Conv && (l.stride < 1 || l.kernel < 1 || l.kernel % 2 == 0)) {
      throw config_error(name + ": row " + std::to_string(i) + " has bad kernel/stride");
    }
    if (l.kind == LayerKind::SPP) {
      for (int k : l.pool_kernels) {
        if (k < 1 || k % 2 == 0) {
          throw config_error(name + ": row " + std::to_string(i) + " pool kernels must be odd");
        }
      }
    }
  }
  if (detect_count != 1) throw config_error(name + ": exactly one detect row is required");
  for (const auto& [row_index, k] : kernel_overrides) {
    if (row_index < 0 || row_index >= n) {
      throw config_error(name + ": kernel override on nonexistent row " +
                         std::to_string(row_index));
    }
    if (row(row_index).kind != LayerKind::Conv) {
      throw config_error(name + ": kernel override on non-convolution row " +
                         std::to_string(row_index) + " (" +
                         layer_kind_name(row(row_index).kind) + ")");
    }
    if (k < 1 || k % 2 == 0) {
      throw config_error(name + ": kernel override must be odd and positive, got " +
                         std::to_string(k));
    }
  }
}

std::string arch_to_json(const ArchConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["depth_multiple"] = cfg.depth_multiple;
  j["width_multiple"] = cfg.width_multiple;
  j["num_classes"] = cfg.num_classes;
  j["input_size"] = cfg.input_size;
  j["strides"] = cfg.strides;
  j["anchors"] = cfg.anchors;
  j["activation"] = cfg.activation == Activation::Silu ? "silu" : "leaky_relu";
  if (cfg.activation == Activation::LeakyRelu) j["leaky_slope"] = cfg.leaky_slope;
  j["backbone"] = json::array();
  for (const auto& l : cfg.backbone) j["backbone"].push_back(layer_to_json(l));
  j["neck"] = json::array();
  for (const auto& l : cfg.neck) j["neck"].push_back(layer_to_json(l));
  if (!cfg.kernel_overrides.empty()) {
    json ko = json::object();
    for (const auto& [row, k] : cfg.kernel_overrides) ko[std::to_string(row)] = k;
    j["kernel_overrides"] = ko;
  }
  return j.dump(2) + "\n";
}

ArchConfig arch_from_json(const std::string& text, const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(where + ": " + e.what());
  }
  try {
    ArchConfig cfg;
    cfg.name = j.value("name", std::string("model"));
    cfg.depth_multiple = j.value("depth_multiple", 1.0);
    cfg.width_multiple = j.value("width_multiple", 1.0);
    cfg.num_classes = j.value("num_classes", 1);
    cfg.input_size = j.value("input_size", 416);
    if (j.contains("strides")) cfg.strides = j.at("strides").get<std::array<int, 3>>();
    if (j.contains("anchors")) cfg.anchors = j.at("anchors").get<AnchorSet>();
    const std::string act = j.value("activation", std::string("silu"));
    if (act == "silu") {
      cfg.activation = Activation::Silu;
    } else if (act == "leaky_relu") {
      cfg.activation = Activation::LeakyRelu;
    } else {
      throw config_error(where + ": unknown activation '" + act + "'");
    }
    cfg.leaky_slope = j.value("leaky_slope", 0.1);
    for (const auto& l : j.at("backbone")) cfg.backbone.push_back(layer_from_json(l, where));
    for (const auto& l : j.at("neck")) cfg.neck.push_back(layer_from_json(l, where));
    if (j.contains("kernel_overrides")) {
      for (const auto& [key, val] : j.at("kernel_overrides").items()) {
        size_t pos = 0;
        int row = std::stoi(key, &pos);
        if (pos != key.size()) throw config_error(where + ": bad kernel override key '" + key + "'");
        cfg.kernel_overrides[row] = val.get<int>();
      }
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw config_error(where + ": " + e.what());
  }
}

ArchConfig load_arch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return arch_from_json(text, path);
}

void save_arch(const std::string& path, const ArchConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw config_error(path + ": cannot open for writing");
  out << arch_to_json(cfg);
}

ArchConfig make_family_config(const std::string& name, double depth_multiple,
                              double width_multiple, int num_classes, int input_size) {
  ArchConfig cfg;
  cfg.name = name;
  cfg.depth_multiple = depth_multiple;
  cfg.width_multiple = width_multiple;
  cfg.num_classes = num_classes;
  cfg.input_size = input_size;
  auto focus = [](int c, int k) {
    LayerSpec l;
    l.kind = LayerKind::Focus;
    l.channels = c;
    l.kernel = k;
    return l;
  };
  auto conv = [](int c, int k, int s) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.channels = c;
    l.kernel = k;
    l.stride = s;
    return l;
  };
  auto csp = [](int c, int n, bool shortcut) {
    LayerSpec l;
    l.kind = LayerKind::BottleneckCSP;
    l.channels = c;
    l.repeats = n;
    l.shortcut = shortcut;
    return l;
  };
  auto spp = [](int c) {
    LayerSpec l;
    l.kind = LayerKind::SPP;
    l.channels = c;
    l.pool_kernels = {5, 9, 13};
    return l;
  };
  auto up = [] {
    LayerSpec l;
    l.kind = LayerKind::Upsample;
    return l;
  };
  auto cat = [](int other) {
    LayerSpec l;
    l.kind = LayerKind::Concat;
    l.from = {-1, other};
    return l;
  };
  cfg.backbone = {
      focus(64, 3),        // 0  P1
      conv(128, 3, 2),     // 1  P2
      csp(128, 3, true),   // 2
      conv(256, 3, 2),     // 3  P3
      csp(256, 9, true),   // 4
      conv(512, 3, 2),     // 5  P4
      csp(512, 9, true),   // 6
      conv(1024, 3, 2),    // 7  P5
      spp(1024),           // 8
      csp(1024, 3, false), // 9
  };
  LayerSpec detect;
  detect.kind = LayerKind::Detect;
  detect.from = {17, 20, 23};
  cfg.neck = {
      conv(512, 1, 1),      // 10
      up(),                 // 11
      cat(6),               // 12
      csp(512, 3, false),   // 13
      conv(256, 1, 1),      // 14
      up(),                 // 15
      cat(4),               // 16
      csp(256, 3, false),   // 17  P3 head input
      conv(256, 3, 2),      // 18
      cat(14),              // 19
      csp(512, 3, false),   // 20  P4 head input
      conv(512, 3, 2),      // 21
      cat(10),              // 22
      csp(1024, 3, false),  // 23  P5 head input
      detect,               // 24
  };
  cfg.validate();
  return cfg;
}

}  // namespace tfnk
