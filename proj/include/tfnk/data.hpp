#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tfnk/image.hpp"

namespace tfnk {

// Normalized box label: center, size in [0, 1] relative to the image.
struct BoxLabel {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
};

struct Sample {
  Image image;
  std::vector<BoxLabel> labels;
  std::string id;
};

// Everything needed to map letterboxed coordinates back to the original.
struct TransformRecord {
  int orig_h = 0, orig_w = 0;
  int target = 0;
  double scale = 1.0;
  int pad_left = 0, pad_top = 0;
};

struct LoadWarning {
  std::string file;
  int line = 0;  // 0 when the whole file is the problem
  std::string message;
};

struct LoadReport {
  std::vector<Sample> samples;
  std::vector<LoadWarning> warnings;
};

// Reads root/images/*.pgm|*.ppm with labels from root/labels/<stem>.txt.
// Unreadable images and malformed label lines become warnings; label values
// outside [0, 1] or boxes leaving the unit square are hard errors.
LoadReport load_dataset(const std::string& root);

// Aspect-preserving resize to target x target with gray (114/255) padding,
// scale = target / max(h, w), padding split floor/ceil.
std::pair<Sample, TransformRecord> letterbox(const Sample& s, int target);

// Min-max stretch over the whole image; constant images pass through.
Image contrast_enhance(const Image& img);
Sample contrast_enhance(const Sample& s);

// Four-sample mosaic: a seeded center in [0.25, 0.75]*size splits the canvas
// into quadrants; each sample covers its quadrant aspect-preserved, overflow
// is clipped, and labels keeping less than 20% of their scaled area are
// dropped.
Sample mosaic(const std::array<Sample, 4>& samples, int out_size, uint64_t seed);
Sample mosaic_with_center(const std::array<Sample, 4>& samples, int out_size, int cx, int cy);

struct SplitManifest {
  std::vector<std::string> train, test;
  double ratio = 0;
  uint64_t seed = 0;
};

// Seeded shuffle of the sorted ids, then a round(ratio*N) partition.
SplitManifest split_dataset(std::vector<std::string> ids, double ratio, uint64_t seed);
void save_split(const std::string& path, const SplitManifest& m);
SplitManifest load_split(const std::string& path);

}  // namespace tfnk
