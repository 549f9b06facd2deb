#include "tfnk/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "tfnk/errors.hpp"
#include "tfnk/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tfnk {

namespace {

constexpr float kPadValue = 114.0f / 255.0f;
constexpr double kBoundsSlack = 1e-6;

void validate_label(const BoxLabel& l, const std::string& file, int line) {
  auto fail = [&](const std::string& msg) {
    throw config_error(file + ":" + std::to_string(line) + ": " + msg);
  };
  if (l.class_id < 0) fail("negative class id");
  for (double v : {l.cx, l.cy, l.w, l.h}) {
    if (!(v >= -kBoundsSlack && v <= 1 + kBoundsSlack)) {
      fail("label value " + std::to_string(v) + " outside [0,1]");
    }
  }
  if (l.w <= 0 || l.h <= 0) fail("box has non-positive size");
  if (l.cx - l.w / 2 < -kBoundsSlack || l.cx + l.w / 2 > 1 + kBoundsSlack ||
      l.cy - l.h / 2 < -kBoundsSlack || l.cy + l.h / 2 > 1 + kBoundsSlack) {
    fail("box extends outside the unit square");
  }
}

}  // namespace

LoadReport load_dataset(const std::string& root) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path labels_dir = fs::path(root) / "labels";
  if (!fs::is_directory(images_dir)) {
    throw config_error(root + ": missing images/ directory");
  }
  LoadReport report;
  std::vector<fs::path> image_files;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") {
      image_files.push_back(entry.path());
    } else {
      report.warnings.push_back({entry.path().string(), 0, "unsupported image extension, skipped"});
    }
  }
  std::sort(image_files.begin(), image_files.end());
  for (const auto& img_path : image_files) {
    Sample s;
    s.id = img_path.stem().string();
    try {
      s.image = read_pnm(img_path.string());
    } catch (const config_error& e) {
      report.warnings.push_back({img_path.string(), 0, std::string("unreadable image: ") + e.what()});
      continue;
    }
    const fs::path label_path = labels_dir / (s.id + ".txt");
    if (fs::exists(label_path)) {
      std::ifstream in(label_path);
      if (!in) throw config_error(label_path.string() + ": cannot open");
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        BoxLabel l;
        std::string extra;
        if (!(ls >> l.class_id >> l.cx >> l.cy >> l.w >> l.h) || (ls >> extra)) {
          report.warnings.push_back({label_path.string(), line_no, "malformed label line, skipped"});
          continue;
        }
        validate_label(l, label_path.string(), line_no);
        s.labels.push_back(l);
      }
    } else {
      report.warnings.push_back({img_path.string(), 0, "no label file, treating as empty"});
    }
    report.samples.push_back(std::move(s));
  }
  return report;
}

std::pair<Sample, TransformRecord> letterbox(const Sample& s, int target) {
  if (target < 2) throw config_error("letterbox: target too small");
  if (s.image.h < 1 || s.image.w < 1) throw config_error("letterbox: empty image");
  TransformRecord rec;
  rec.orig_h = s.image.h;
  rec.orig_w = s.image.w;
  rec.target = target;
  rec.scale = static_cast<double>(target) / std::max(s.image.h, s.image.w);
  const int content_w = std::max(1, static_cast<int>(std::lround(s.image.w * rec.scale)));
  const int content_h = std::max(1, static_cast<int>(std::lround(s.image.h * rec.scale)));
  rec.pad_left = (target - content_w) / 2;
  rec.pad_top = (target - content_h) / 2;

  Image content = resize_bilinear(s.image, content_h, content_w);
  Sample out;
  out.id = s.id;
  out.image = Image(target, target, s.image.c, kPadValue);
  for (int y = 0; y < content_h; ++y) {
    for (int x = 0; x < content_w; ++x) {
      for (int c = 0; c < content.c; ++c) {
        out.image.at(y + rec.pad_top, x + rec.pad_left, c) = content.at(y, x, c);
      }
    }
  }
  for (const BoxLabel& l : s.labels) {
    BoxLabel n = l;
    n.cx = (l.cx * rec.orig_w * rec.scale + rec.pad_left) / target;
    n.cy = (l.cy * rec.orig_h * rec.scale + rec.pad_top) / target;
    n.w = l.w * rec.orig_w * rec.scale / target;
    n.h = l.h * rec.orig_h * rec.scale / target;
    out.labels.push_back(n);
  }
  return {std::move(out), rec};
}

Image contrast_enhance(const Image& img) {
  float lo = 1.f, hi = 0.f;
  for (float v : img.pix) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image out = img;
  if (hi - lo < 1e-6f) return out;
  const float inv = 1.0f / (hi - lo);
  for (float& v : out.pix) v = (v - lo) * inv;
  return out;
}

Sample contrast_enhance(const Sample& s) {
  Sample out = s;
  out.image = contrast_enhance(s.image);
  return out;
}

Sample mosaic_with_center(const std::array<Sample, 4>& samples, int out_size, int cx, int cy) {
  if (out_size < 4) throw config_error("mosaic: output size too small");
  if (cx < 1 || cx > out_size - 1 || cy < 1 || cy > out_size - 1) {
    throw config_error("mosaic: center outside the canvas interior");
  }
  const int channels = samples[0].image.c;
  for (const auto& s : samples) {
    if (s.image.c != channels) throw config_error("mosaic: samples must share channel count");
    if (s.image.h < 1 || s.image.w < 1) throw config_error("mosaic: empty sample");
  }
  Sample out;
  out.id = "mosaic";
  out.image = Image(out_size, out_size, channels, kPadValue);

  // quadrant rects: x0, y0, x1, y1 (exclusive)
  const int rects[4][4] = {{0, 0, cx, cy},
                           {cx, 0, out_size, cy},
                           {0, cy, cx, out_size},
                           {cx, cy, out_size, out_size}};
  for (int q = 0; q < 4; ++q) {
    const Sample& s = samples[static_cast<size_t>(q)];
    const int qx0 = rects[q][0], qy0 = rects[q][1], qx1 = rects[q][2], qy1 = rects[q][3];
    const int qw = qx1 - qx0, qh = qy1 - qy0;
    // cover the quadrant, preserving aspect; overflow is clipped
    const double scale = std::max(static_cast<double>(qw) / s.image.w,
                                  static_cast<double>(qh) / s.image.h);
    const int rw = std::max(qw, static_cast<int>(std::lround(s.image.w * scale)));
    const int rh = std::max(qh, static_cast<int>(std::lround(s.image.h * scale)));
    // content anchored at the quadrant corner that touches the center
    const int ox = (q == 0 || q == 2) ? cx - rw : cx;
    const int oy = (q == 0 || q == 1) ? cy - rh : cy;
    Image resized = resize_bilinear(s.image, rh, rw);
    for (int y = qy0; y < qy1; ++y) {
      for (int x = qx0; x < qx1; ++x) {
        for (int c = 0; c < channels; ++c) {
          out.image.at(y, x, c) = resized.at(y - oy, x - ox, c);
        }
      }
    }
    for (const BoxLabel& l : s.labels) {
      const double bx1 = ox + (l.cx - l.w / 2) * rw;
      const double bx2 = ox + (l.cx + l.w / 2) * rw;
      const double by1 = oy + (l.cy - l.h / 2) * rh;
      const double by2 = oy + (l.cy + l.h / 2) * rh;
      const double full_area = (bx2 - bx1) * (by2 - by1);
      const double cx1 = std::max(bx1, static_cast<double>(qx0));
      const double cx2 = std::min(bx2, static_cast<double>(qx1));
      const double cy1 = std::max(by1, static_cast<double>(qy0));
      const double cy2 = std::min(by2, static_cast<double>(qy1));
      if (cx2 - cx1 <= 0 || cy2 - cy1 <= 0) continue;
      const double clipped_area = (cx2 - cx1) * (cy2 - cy1);
      if (clipped_area < 0.2 * full_area) continue;
      BoxLabel n;
      n.class_id = l.class_id;
      n.cx = (cx1 + cx2) / 2 / out_size;
      n.cy = (cy1 + cy2) / 2 / out_size;
      n.w = (cx2 - cx1) / out_size;
      n.h = (cy2 - cy1) / out_size;
      out.labels.push_back(n);
    }
  }
  return out;
}

Sample mosaic(const std::array<Sample, 4>& samples, int out_size, uint64_t seed) {
  Rng rng(seed);
  const int cx = std::clamp(static_cast<int>(std::lround(rng.uniform(0.25, 0.75) * out_size)), 1,
                            out_size - 1);
  const int cy = std::clamp(static_cast<int>(std::lround(rng.uniform(0.25, 0.75) * out_size)), 1,
                            out_size - 1);
  return mosaic_with_center(samples, out_size, cx, cy);
}

SplitManifest split_dataset(std::vector<std::string> ids, double ratio, uint64_t seed) {
  if (ids.size() < 2) throw config_error("split: need at least 2 items");
  if (!(ratio > 0.0 && ratio < 1.0)) throw config_error("split: ratio must be in (0, 1)");
  std::sort(ids.begin(), ids.end());
  for (size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1]) throw config_error("split: duplicate id '" + ids[i] + "'");
  }
  Rng rng(seed);
  rng.shuffle(ids);
  const auto n = static_cast<size_t>(std::clamp<long>(
      std::lround(ratio * static_cast<double>(ids.size())), 1L,
      static_cast<long>(ids.size()) - 1L));
  SplitManifest m;
  m.ratio = ratio;
  m.seed = seed;
  m.train.assign(ids.begin(), ids.begin() + static_cast<long>(n));
  m.test.assign(ids.begin() + static_cast<long>(n), ids.end());
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());
  return m;
}

void save_split(const std::string& path, const SplitManifest& m) {
  json j;
  j["ratio"] = m.ratio;
  j["seed"] = m.seed;
  j["train"] = m.train;
  j["test"] = m.test;
  std::ofstream out(path);
  if (!out) throw config_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

SplitManifest load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open");
  json j;
  try {
    in >> j;
    SplitManifest m;
    m.ratio = j.at("ratio").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
}

}  // namespace tfnk
