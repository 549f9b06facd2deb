#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

namespace tfnk {

enum class LayerKind { Focus, Conv, BottleneckCSP, SPP, Upsample, Concat, Detect };
enum class Activation { Silu, LeakyRelu };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::vector<int> from{-1};      // negative values are relative to this row
  int channels = 0;               // nominal output channels
  int repeats = 1;                // nominal repeat count (BottleneckCSP)
  int kernel = 1;
  int stride = 1;
  bool shortcut = true;           // BottleneckCSP residual connections
  std::vector<int> pool_kernels;  // SPP
};

using AnchorSet = std::array<std::array<std::array<double, 2>, 3>, 3>;

struct ArchConfig {
  std::string name = "model";
  double depth_multiple = 1.0;
  double width_multiple = 1.0;
  int num_classes = 1;
  int input_size = 416;
  std::array<int, 3> strides{8, 16, 32};
  AnchorSet anchors{{{{{10, 13}, {16, 30}, {33, 23}}},
                     {{{30, 61}, {62, 45}, {59, 119}}},
                     {{{116, 90}, {156, 198}, {373, 326}}}}};
  Activation activation = Activation::Silu;
  double leaky_slope = 0.1;
  std::vector<LayerSpec> backbone;
  std::vector<LayerSpec> neck;  // ends with the Detect row
  std::map<int, int> kernel_overrides;  // global row index -> kernel size

  int rows() const { return static_cast<int>(backbone.size() + neck.size()); }
  const LayerSpec& row(int i) const {
    return i < static_cast<int>(backbone.size()) ? backbone[static_cast<size_t>(i)]
                                                 : neck[static_cast<size_t>(i - backbone.size())];
  }
  // Throws config_error on any structural problem.
  void validate() const;

  int realized_channels(int nominal) const;
  int realized_repeats(int nominal) const;
  int effective_kernel(int row_index) const;
};

ArchConfig load_arch(const std::string& path);
void save_arch(const std::string& path, const ArchConfig& cfg);
std::string arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const std::string& text, const std::string& where);

// Standard detector family table (Focus stem, CSP backbone, SPP, FPN+PAN
// neck, three-level head) at the given scale multipliers.
ArchConfig make_family_config(const std::string& name, double depth_multiple,
                              double width_multiple, int num_classes = 1, int input_size = 416);

}  // namespace tfnk
