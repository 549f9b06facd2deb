#include "tfnk/assign.hpp"

#include <cmath>

#include "tfnk/errors.hpp"

namespace tfnk {

std::vector<Assignment> assign_targets(const std::vector<BoxLabel>& labels, const ArchConfig& cfg,
                                       const AssignConfig& acfg) {
  if (acfg.ratio_threshold <= 1.0) {
    throw config_error("assign: ratio threshold must exceed 1");
  }
  std::vector<Assignment> out;
  const int in = cfg.input_size;
  for (size_t gi = 0; gi < labels.size(); ++gi) {
    const BoxLabel& l = labels[gi];
    if (l.w <= 0 || l.h <= 0) {
      throw config_error("assign: label " + std::to_string(gi) + " has zero-size box");
    }
    const double w_px = l.w * in, h_px = l.h * in;
    for (int level = 0; level < 3; ++level) {
      const int grid = in / cfg.strides[static_cast<size_t>(level)];
      const double cxg = l.cx * grid, cyg = l.cy * grid;
      const int gx = std::min(static_cast<int>(cxg), grid - 1);
      const int gy = std::min(static_cast<int>(cyg), grid - 1);
      const double fx = cxg - gx, fy = cyg - gy;
      const int nx = fx < 0.5 ? gx - 1 : gx + 1;
      const int ny = fy < 0.5 ? gy - 1 : gy + 1;
      for (int anchor = 0; anchor < 3; ++anchor) {
        const auto& a = cfg.anchors[static_cast<size_t>(level)][static_cast<size_t>(anchor)];
        const double r = std::max(std::max(w_px / a[0], a[0] / w_px),
                                  std::max(h_px / a[1], a[1] / h_px));
        if (!(r < acfg.ratio_threshold)) continue;
        auto push = [&](int cy, int cx) {
          if (cx < 0 || cx >= grid || cy < 0 || cy >= grid) return;
          Assignment as;
          as.level = level;
          as.anchor = anchor;
          as.gy = cy;
          as.gx = cx;
          as.gt_index = static_cast<int>(gi);
          as.class_id = l.class_id;
          as.gcx = l.cx * in;
          as.gcy = l.cy * in;
          as.gw = w_px;
          as.gh = h_px;
          out.push_back(as);
        };
        push(gy, gx);
        push(gy, nx);
        push(ny, gx);
      }
    }
  }
  return out;
}

}  // namespace tfnk
