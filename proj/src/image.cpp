#include "tfnk/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tfnk/errors.hpp"

namespace tfnk {

namespace {

// Next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) continue;
    tok.push_back(static_cast<char>(ch));
    while ((ch = in.get()) != EOF && !std::isspace(ch) && ch != '#') {
      tok.push_back(static_cast<char>(ch));
    }
    if (ch == '#') in.unget();
    return tok;
  }
  throw config_error(path + ": truncated header");
}

int parse_int(const std::string& tok, const std::string& path) {
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw config_error(path + ": bad header token '" + tok + "'");
  }
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path + ": cannot open");
  std::string magic = next_token(in, path);
  int channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw config_error(path + ": unsupported format '" + magic + "' (expected P5 or P6)");
  }
  int w = parse_int(next_token(in, path), path);
  int h = parse_int(next_token(in, path), path);
  int maxval = parse_int(next_token(in, path), path);
  if (w <= 0 || h <= 0) throw config_error(path + ": bad dimensions");
  if (maxval != 255) throw config_error(path + ": only maxval 255 is supported");
  // exactly one whitespace byte separates header and raster
  Image img(h, w, channels);
  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size()) {
    throw config_error(path + ": truncated pixel data");
  }
  for (size_t i = 0; i < raw.size(); ++i) img.pix[i] = raw[i] / 255.0f;
  return img;
}

void write_pnm(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3) {
    throw config_error(path + ": image must have 1 or 3 channels, got " + std::to_string(img.c));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error(path + ": cannot open for writing");
  out << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(img.pix.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    float v = img.pix[i];
    if (v < 0.f) v = 0.f;
    if (v > 1.f) v = 1.f;
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw config_error(path + ": write failed");
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw config_error("resize: output size must be positive");
  if (out_h == img.h && out_w == img.w) return img;
  Image out(out_h, out_w, img.c);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::min(std::max(y0, 0), img.h - 1);
    int y1c = std::min(std::max(y0 + 1, 0), img.h - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::min(std::max(x0, 0), img.w - 1);
      int x1c = std::min(std::max(x0 + 1, 0), img.w - 1);
      for (int ch = 0; ch < img.c; ++ch) {
        double top = img.at(y0c, x0c, ch) * (1.0 - wx) + img.at(y0c, x1c, ch) * wx;
        double bot = img.at(y1c, x0c, ch) * (1.0 - wx) + img.at(y1c, x1c, ch) * wx;
        out.at(y, x, ch) = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

}  // namespace tfnk
