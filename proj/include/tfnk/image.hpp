#pragma once

#include <string>
#include <vector>

namespace tfnk {

// HWC float image, values in [0, 1]. c is 1 (gray) or 3 (rgb).
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> pix;

  Image() = default;
  Image(int h_, int w_, int c_, float fill = 0.f)
      : h(h_), w(w_), c(c_), pix(static_cast<size_t>(h_) * w_ * c_, fill) {}

  float& at(int y, int x, int ch) {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch) const {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

// Binary PNM only: P5 (gray) and P6 (rgb), maxval 255.
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& img);

// Bilinear resize with border clamping. Exact copy when sizes match.
Image resize_bilinear(const Image& img, int out_h, int out_w);

}  // namespace tfnk
