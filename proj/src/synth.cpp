#include "tfnk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "tfnk/errors.hpp"
#include "tfnk/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tfnk {

const char* background_name(Background b) {
  switch (b) {
    case Background::Clear: return "clear";
    case Background::Cloudy: return "cloudy";
    case Background::UrbanClutter: return "urban_clutter";
    case Background::Fog: return "fog";
  }
  return "?";
}

Background background_from_name(const std::string& s) {
  if (s == "clear") return Background::Clear;
  if (s == "cloudy") return Background::Cloudy;
  if (s == "urban_clutter") return Background::UrbanClutter;
  if (s == "fog") return Background::Fog;
  throw config_error("unknown background '" + s + "'");
}

void SynthConfig::validate() const {
  if (image_size < 32) throw config_error("synth: image_size must be >= 32");
  if (targets_min < 1 || targets_max < targets_min) {
    throw config_error("synth: bad targets_per_image range [" + std::to_string(targets_min) +
                       ", " + std::to_string(targets_max) + "]");
  }
  if (mix_small < 0 || mix_medium < 0 || mix_large < 0 ||
      std::fabs(mix_small + mix_medium + mix_large - 1.0) > 1e-6) {
    throw config_error("synth: size_mix must be non-negative and sum to 1");
  }
  if (noise_level < 0 || noise_level > 0.05) {
    throw config_error("synth: noise_level must be in [0, 0.05]");
  }
  if (mix_small > 0 && 0.009 * image_size < 2.0) {
    throw config_error("synth: image_size " + std::to_string(image_size) +
                       " is too small to render small-bucket targets");
  }
}

namespace {

// sampled width fractions stay inside the buckets with margin for the
// 1-pixel label discretization
constexpr double kSmallLo = 0.009, kSmallHi = 0.018;
constexpr double kMediumLo = 0.024, kMediumHi = 0.075;
constexpr double kLargeLo = 0.085, kLargeHi = 0.150;

struct PlacedBox {
  int x0, y0, x1, y1;  // inclusive, padded
};

bool boxes_overlap(const PlacedBox& a, const PlacedBox& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

void render_background(Image& img, Background kind, Rng& rng) {
  const int s = img.h;
  for (int y = 0; y < s; ++y) {
    const float base = 0.04f + 0.06f * static_cast<float>(y) / static_cast<float>(s);
    for (int x = 0; x < s; ++x) img.at(y, x, 0) = base;
  }
  switch (kind) {
    case Background::Clear:
      break;
    case Background::Cloudy:
      for (int i = 0; i < 6; ++i) {
        const double bx = rng.uniform(0.0, 1.0) * s;
        const double by = rng.uniform(0.0, 0.6) * s;
        const double sigma = rng.uniform(0.06, 0.18) * s;
        const double amp = rng.uniform(0.04, 0.10);
        const int r = static_cast<int>(3 * sigma);
        for (int y = std::max(0, static_cast<int>(by) - r);
             y < std::min(s, static_cast<int>(by) + r); ++y) {
          for (int x = std::max(0, static_cast<int>(bx) - r);
               x < std::min(s, static_cast<int>(bx) + r); ++x) {
            const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
            img.at(y, x, 0) += static_cast<float>(amp * std::exp(-d2 / (2 * sigma * sigma)));
          }
        }
      }
      break;
    case Background::UrbanClutter:
      for (int i = 0; i < 8; ++i) {
        const int bw = std::max(2, static_cast<int>(rng.uniform(0.04, 0.15) * s));
        const int bh = std::max(2, static_cast<int>(rng.uniform(0.05, 0.22) * s));
        const int bx = rng.uniform_int(0, std::max(0, s - bw - 1));
        const int bottom = rng.uniform_int(static_cast<int>(0.55 * s), s - 1);
        const float v = static_cast<float>(rng.uniform(0.09, 0.18));
        for (int y = std::max(0, bottom - bh); y <= bottom; ++y) {
          for (int x = bx; x < bx + bw; ++x) img.at(y, x, 0) = std::max(img.at(y, x, 0), v);
        }
      }
      break;
    case Background::Fog: {
      const double phase = rng.uniform(0.0, 2 * M_PI);
      for (int y = 0; y < s; ++y) {
        const float band =
            0.10f + 0.03f * static_cast<float>(std::sin(2 * M_PI * y / s + phase));
        for (int x = 0; x < s; ++x) img.at(y, x, 0) += band;
      }
      break;
    }
  }
  for (float& v : img.pix) v = std::min(v, 0.22f);
}

}  // namespace

Sample synth_scene(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int s = cfg.image_size;
  Sample out;
  out.id = "synth";
  out.image = Image(s, s, 1);

  render_background(out.image, cfg.background, rng);

  if (cfg.noise_level > 0) {
    for (float& v : out.image.pix) {
      v = std::clamp(v + static_cast<float>(cfg.noise_level * rng.normal()), 0.0f, 0.3f);
    }
  }

  const int n_targets = rng.uniform_int(cfg.targets_min, cfg.targets_max);
  // Stratified bucket draw with a per-seed low-discrepancy offset: bucket
  // frequencies across a batch of consecutive seeds track the mix closely.
  const double u0 = bit_reversed_unit(static_cast<uint32_t>(seed));
  std::vector<PlacedBox> placed;
  for (int t = 0; t < n_targets; ++t) {
    double u = u0 + static_cast<double>(t) / n_targets;
    u -= std::floor(u);
    SizeBucket bucket;
    if (u < cfg.mix_small) {
      bucket = SizeBucket::Small;
    } else if (u < cfg.mix_small + cfg.mix_medium) {
      bucket = SizeBucket::Medium;
    } else {
      bucket = SizeBucket::Large;
    }
    double frac;
    switch (bucket) {
      case SizeBucket::Small: frac = rng.uniform(kSmallLo, kSmallHi); break;
      case SizeBucket::Medium: frac = rng.uniform(kMediumLo, kMediumHi); break;
      default: frac = rng.uniform(kLargeLo, kLargeHi); break;
    }
    const int d = std::max(2, static_cast<int>(std::lround(frac * s)));
    const double aspect = rng.uniform(0.6, 1.0);
    const int dh = std::max(2, static_cast<int>(std::lround(d * aspect)));
    const bool cross = rng.uniform() < 0.4;
    const float peak = static_cast<float>(rng.uniform(0.78, 0.92));

    const int margin = d / 2 + 3;
    bool placed_ok = false;
    for (int attempt = 0; attempt < 60 && !placed_ok; ++attempt) {
      const int tcx = rng.uniform_int(margin, s - 1 - margin);
      const int tcy = rng.uniform_int(std::max(margin, dh / 2 + 3),
                                      s - 1 - std::max(margin, dh / 2 + 3));
      PlacedBox pb{tcx - d / 2 - 2, tcy - dh / 2 - 2, tcx + d / 2 + 2, tcy + dh / 2 + 2};
      bool clash = false;
      for (const auto& other : placed) clash = clash || boxes_overlap(pb, other);
      if (clash) continue;

      int x_min = s, x_max = -1, y_min = s, y_max = -1;
      const double a = d / 2.0, b = dh / 2.0;
      const int bar = std::max(1, d / 4);
      for (int y = std::max(0, tcy - dh); y <= std::min(s - 1, tcy + dh); ++y) {
        for (int x = std::max(0, tcx - d); x <= std::min(s - 1, tcx + d); ++x) {
          const double dx = x + 0.5 - tcx, dy = y + 0.5 - tcy;
          bool inside;
          if (cross) {
            inside = (std::fabs(dx) <= a && std::fabs(dy) <= bar / 2.0) ||
                     (std::fabs(dx) <= bar / 2.0 && std::fabs(dy) <= b);
          } else {
            const double r2 = (dx / a) * (dx / a) + (dy / b) * (dy / b);
            inside = r2 <= 1.0;
          }
          if (!inside) continue;
          const double rr = cross ? 0.0 : (dx / a) * (dx / a) + (dy / b) * (dy / b);
          const float v = peak * static_cast<float>(1.0 - 0.08 * rr);
          out.image.at(y, x, 0) = std::max(out.image.at(y, x, 0), v);
          x_min = std::min(x_min, x);
          x_max = std::max(x_max, x);
          y_min = std::min(y_min, y);
          y_max = std::max(y_max, y);
        }
      }
      if (x_max < x_min) continue;
      placed.push_back(pb);
      BoxLabel l;
      l.class_id = 0;
      l.cx = (x_min + x_max + 1) / 2.0 / s;
      l.cy = (y_min + y_max + 1) / 2.0 / s;
      l.w = static_cast<double>(x_max - x_min + 1) / s;
      l.h = static_cast<double>(y_max - y_min + 1) / s;
      out.labels.push_back(l);
      placed_ok = true;
    }
    if (!placed_ok) {
      throw config_error("synth: could not place " + std::to_string(n_targets) +
                         " targets without overlap; packing capacity exceeded");
    }
  }
  return out;
}

SynthConfig synth_config_from_json(const std::string& text, const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(where + ": " + e.what());
  }
  try {
    SynthConfig cfg;
    cfg.image_size = j.value("image_size", cfg.image_size);
    if (j.contains("targets_per_image")) {
      const auto r = j.at("targets_per_image").get<std::vector<int>>();
      if (r.size() != 2) throw config_error(where + ": targets_per_image must be [min, max]");
      cfg.targets_min = r[0];
      cfg.targets_max = r[1];
    }
    if (j.contains("size_mix")) {
      const auto& m = j.at("size_mix");
      cfg.mix_small = m.value("small", 0.0);
      cfg.mix_medium = m.value("medium", 0.0);
      cfg.mix_large = m.value("large", 0.0);
    }
    if (j.contains("background")) {
      cfg.background = background_from_name(j.at("background").get<std::string>());
    }
    cfg.noise_level = j.value("noise_level", cfg.noise_level);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw config_error(where + ": " + e.what());
  }
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["targets_per_image"] = {cfg.targets_min, cfg.targets_max};
  j["size_mix"] = {{"small", cfg.mix_small}, {"medium", cfg.mix_medium}, {"large", cfg.mix_large}};
  j["background"] = background_name(cfg.background);
  j["noise_level"] = cfg.noise_level;
  return j.dump(2) + "\n";
}

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return synth_config_from_json(text, path);
}

void synth_dataset(const SynthConfig& cfg, int count, uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  if (count < 0) throw config_error("synth: count must be >= 0");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "labels");
  json files = json::array();
  for (int i = 0; i < count; ++i) {
    Sample s = synth_scene(cfg, seed + static_cast<uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05d", i);
    write_pnm((fs::path(out_dir) / "images" / (std::string(name) + ".pgm")).string(), s.image);
    std::ofstream lf(fs::path(out_dir) / "labels" / (std::string(name) + ".txt"));
    for (const BoxLabel& l : s.labels) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d %.9f %.9f %.9f %.9f\n", l.class_id, l.cx, l.cy, l.w,
                    l.h);
      lf << line;
    }
    files.push_back(std::string(name));
  }
  json manifest;
  manifest["config"] = json::parse(synth_config_to_json(cfg));
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["files"] = files;
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace tfnk
