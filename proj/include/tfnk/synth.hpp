#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfnk/data.hpp"

namespace tfnk {

enum class Background { Clear, Cloudy, UrbanClutter, Fog };
enum class SizeBucket { Small, Medium, Large };

const char* background_name(Background b);
Background background_from_name(const std::string& s);

// Generator settings for synthetic infrared-style scenes: dark structured
// background, additive sensor noise, bright elliptical or cross targets.
struct SynthConfig {
  int image_size = 416;
  int targets_min = 1, targets_max = 3;
  double mix_small = 0.2, mix_medium = 0.5, mix_large = 0.3;
  Background background = Background::Clear;
  double noise_level = 0.02;

  void validate() const;
};

SynthConfig synth_config_from_json(const std::string& text, const std::string& where);
std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig load_synth_config(const std::string& path);

// Deterministic per (config, seed). Grayscale image; labels tightly bound the
// bright pixels. Size buckets by normalized target width: small < 0.02,
// medium <= 0.08, large > 0.08. Throws when targets cannot be placed without
// overlap.
Sample synth_scene(const SynthConfig& cfg, uint64_t seed);

// Writes images/, labels/ and manifest.json; scene i uses seed + i.
void synth_dataset(const SynthConfig& cfg, int count, uint64_t seed, const std::string& out_dir);

}  // namespace tfnk
