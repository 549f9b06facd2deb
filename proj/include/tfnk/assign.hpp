#pragma once

#include <vector>

#include "tfnk/arch.hpp"
#include "tfnk/data.hpp"

namespace tfnk {

struct AssignConfig {
  // anchor is eligible when max(w/aw, aw/w, h/ah, ah/h) < threshold
  double ratio_threshold = 4.0;
  // suppression IoU used when scoring the validation split during training
  double iou_threshold = 0.20;
};

// One anchor slot responsible for one ground-truth box. Ground-truth
// geometry is in input pixels.
struct Assignment {
  int level = 0, anchor = 0;
  int gy = 0, gx = 0;
  int gt_index = 0;
  int class_id = 0;
  double gcx = 0, gcy = 0, gw = 0, gh = 0;
};

// For every label, every anchor passing the ratio test claims the center
// cell plus the two cells adjacent toward the center offset (fraction < 0.5
// picks the lower neighbor, otherwise the upper; out-of-grid cells are
// skipped).
std::vector<Assignment> assign_targets(const std::vector<BoxLabel>& labels, const ArchConfig& cfg,
                                       const AssignConfig& acfg);

}  // namespace tfnk
