#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tfnk/arch.hpp"
#include "tfnk/checkpoint.hpp"
#include "tfnk/data.hpp"
#include "tfnk/errors.hpp"
#include "tfnk/graph.hpp"
#include "tfnk/metrics.hpp"
#include "tfnk/postprocess.hpp"
#include "tfnk/profile.hpp"
#include "tfnk/report.hpp"
#include "tfnk/synth.hpp"
#include "tfnk/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tfnk::config_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw tfnk::config_error("cannot write " + path);
}

// "key.path=value" onto a JSON document; the value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(json& j, const std::string& spec) {
  size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw tfnk::config_error("--set expects key.path=value, got \"" + spec + "\"");
  std::string path = spec.substr(0, eq);
  std::string raw = spec.substr(eq + 1);
  json* cur = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) throw tfnk::config_error("--set: empty key segment in \"" + path + "\"");
    if (dot == std::string::npos) {
      json value = json::parse(raw, nullptr, false);
      (*cur)[key] = value.is_discarded() ? json(raw) : value;
      return;
    }
    cur = &((*cur)[key]);
    pos = dot + 1;
  }
}

json load_json(const std::string& path, const std::vector<std::string>& sets) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw tfnk::config_error(path + ": invalid JSON");
  for (const std::string& s : sets) apply_override(j, s);
  return j;
}

tfnk::ArchConfig load_arch_config(const std::string& path, const std::vector<std::string>& sets) {
  return tfnk::arch_from_json(load_json(path, sets).dump(), path);
}

uint64_t resolve_seed(size_t cli_count, uint64_t cli_value) {
  if (cli_count > 0) return cli_value;
  if (const char* env = std::getenv("TFNK_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw tfnk::config_error(std::string("TFNK_SEED is not an unsigned integer: ") + env);
    return static_cast<uint64_t>(v);
  }
  return 0;
}

std::vector<tfnk::Sample> load_samples(const std::string& root) {
  tfnk::LoadReport rep = tfnk::load_dataset(root);
  for (const tfnk::LoadWarning& w : rep.warnings)
    std::cerr << "warning: " << w.file << (w.line ? ":" + std::to_string(w.line) : "") << ": "
              << w.message << "\n";
  if (rep.samples.empty()) throw tfnk::config_error(root + ": no usable samples");
  return rep.samples;
}

tfnk::ModelGraph<float> restore_model(const tfnk::ArchConfig& cfg, const std::string& ckpt) {
  tfnk::ModelGraph<float> g = tfnk::ModelGraph<float>::build(cfg, 0);
  g.load_checkpoint_entries(tfnk::load_checkpoint(ckpt));
  return g;
}

struct StageTimes {
  double pre = 0, infer = 0, nms = 0;
};

// Full single-image inference in original-image coordinates.
std::vector<tfnk::Detection> detect_one(tfnk::ModelGraph<float>& g, const tfnk::Sample& s,
                                        const tfnk::DecodeConfig& dc, StageTimes* t) {
  auto t0 = Clock::now();
  auto [boxed, rec] = tfnk::letterbox(tfnk::contrast_enhance(s), g.cfg().input_size);
  tfnk::Tensor<float> x = tfnk::train_detail::batch_tensor<float>({boxed}, g.cfg().input_size);
  if (t) t->pre += ms_since(t0);

  t0 = Clock::now();
  auto heads = g.forward(x, false);
  auto arrays = tfnk::train_detail::heads_for_image<float>(heads, 0);
  std::vector<tfnk::Detection> dets = tfnk::decode(arrays, g.cfg(), dc);
  if (t) t->infer += ms_since(t0);

  t0 = Clock::now();
  dets = tfnk::nms(std::move(dets), dc.nms_iou, dc.max_detections);
  dets = tfnk::map_to_original(dets, rec);
  if (t) t->nms += ms_since(t0);
  return dets;
}

std::string detection_lines(const std::string& id, const std::vector<tfnk::Detection>& dets) {
  std::string out;
  char line[256];
  for (const tfnk::Detection& d : dets) {
    std::snprintf(line, sizeof(line), "%s %d %.6f %.6f %.6f %.6f %.6f\n", id.c_str(), d.class_id,
                  d.x1, d.y1, d.x2, d.y2, d.confidence);
    out += line;
  }
  return out;
}

std::map<std::string, std::vector<tfnk::Detection>> parse_detections_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tfnk::config_error("cannot read " + path);
  std::map<std::string, std::vector<tfnk::Detection>> by_image;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id;
    tfnk::Detection d;
    if (!(ss >> id >> d.class_id >> d.x1 >> d.y1 >> d.x2 >> d.y2 >> d.confidence))
      throw tfnk::config_error(path + ":" + std::to_string(lineno) +
                               ": expected \"image_id class_id x1 y1 x2 y2 confidence\"");
    by_image[id].push_back(d);
  }
  return by_image;
}

tfnk::Image to_rgb(const tfnk::Image& img) {
  if (img.c == 3) return img;
  tfnk::Image out(img.h, img.w, 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = img.at(y, x, 0);
  return out;
}

void draw_border(tfnk::Image& img, const tfnk::Detection& d) {
  auto clampi = [](long v, int hi) { return static_cast<int>(std::max(0L, std::min<long>(v, hi))); };
  int x1 = clampi(std::lround(d.x1), img.w - 1);
  int x2 = clampi(std::lround(d.x2), img.w - 1);
  int y1 = clampi(std::lround(d.y1), img.h - 1);
  int y2 = clampi(std::lround(d.y2), img.h - 1);
  auto paint = [&](int y, int x) {
    img.at(y, x, 0) = 1.f;
    img.at(y, x, 1) = 0.f;
    img.at(y, x, 2) = 0.f;
  };
  for (int x = x1; x <= x2; ++x) {
    paint(y1, x);
    paint(y2, x);
  }
  for (int y = y1; y <= y2; ++y) {
    paint(y, x1);
    paint(y, x2);
  }
}

void write_eval_outputs(const std::string& out_dir, const std::string& model_name, uint64_t seed,
                        const tfnk::EvalReport& rep) {
  fs::create_directories(out_dir);
  json j = json::parse(tfnk::eval_report_to_json(rep));
  j["model"] = model_name;
  j["seed"] = seed;
  write_file(out_dir + "/report.json", j.dump(2) + "\n");
  write_file(out_dir + "/pr_curve.csv", tfnk::pr_curve_csv(rep));

  std::string table = tfnk::detection_table({tfnk::detection_row_from(model_name, rep)});
  if (rep.latency.measured()) {
    tfnk::LatencyRow lr{model_name, rep.latency.pre_ms, rep.latency.infer_ms, rep.latency.nms_ms,
                        rep.latency.fps()};
    table += "\n" + tfnk::latency_table({lr});
  }
  write_file(out_dir + "/table.txt", table);
  std::cout << table;
}

// ---- subcommand option bags ----

struct SynthOpts {
  std::string config, out;
  int count = 0;
  uint64_t seed = 0;
  std::vector<std::string> sets;
};

struct TrainOpts {
  std::string config, data, out;
  uint64_t seed = 0;
  std::vector<std::string> sets;
  double split = 0;  // 0: validate on the training set
  tfnk::TrainOptions t;
  double reg_alpha = -1;
  double mosaic_prob = 0;
  bool quiet = false;
};

struct EvalOpts {
  std::string config, ckpt, data, out, detections, name;
  uint64_t seed = 0;
  std::vector<std::string> sets;
  tfnk::DecodeConfig dc;
  tfnk::EvalConfig ec;
};

struct DetectOpts {
  std::string config, ckpt, data, out, overlay_dir;
  uint64_t seed = 0;
  std::vector<std::string> sets;
  tfnk::DecodeConfig dc;
};

struct ProfileOpts {
  std::string config, out;
  int input_size = 0;
  uint64_t seed = 0;
  std::vector<std::string> sets;
};

struct CompareOpts {
  std::vector<std::string> configs, runlogs;
  std::string out;
  std::vector<std::string> sets;
};

void run_synth(const SynthOpts& o, uint64_t seed) {
  json j = o.config.empty() ? json::parse(tfnk::synth_config_to_json(tfnk::SynthConfig{}))
                            : json::parse(read_file(o.config), nullptr, false);
  if (j.is_discarded()) throw tfnk::config_error(o.config + ": invalid JSON");
  for (const std::string& s : o.sets) apply_override(j, s);
  tfnk::SynthConfig cfg = tfnk::synth_config_from_json(j.dump(), o.config.empty() ? "defaults" : o.config);
  tfnk::synth_dataset(cfg, o.count, seed, o.out);
  std::cout << "wrote " << o.count << " scene(s) to " << o.out << "\n";
}

void run_train(TrainOpts& o, uint64_t seed) {
  tfnk::ArchConfig cfg = load_arch_config(o.config, o.sets);
  std::vector<tfnk::Sample> all = load_samples(o.data);
  fs::create_directories(o.out);

  std::vector<tfnk::Sample> train_set, val_set;
  if (o.split > 0) {
    if (o.split >= 1) throw tfnk::config_error("--split must be in (0, 1)");
    std::vector<std::string> ids;
    for (const tfnk::Sample& s : all) ids.push_back(s.id);
    tfnk::SplitManifest m = tfnk::split_dataset(ids, o.split, seed);
    tfnk::save_split(o.out + "/split.json", m);
    std::map<std::string, const tfnk::Sample*> by_id;
    for (const tfnk::Sample& s : all) by_id[s.id] = &s;
    for (const std::string& id : m.train) train_set.push_back(*by_id.at(id));
    for (const std::string& id : m.test) val_set.push_back(*by_id.at(id));
  } else {
    train_set = all;
    val_set = all;
  }

  o.t.seed = seed;
  o.t.out_dir = o.out;
  o.t.verbose = !o.quiet;
  if (o.reg_alpha >= 0) {
    o.t.reg.enabled = true;
    o.t.reg.alpha = o.reg_alpha;
  }
  if (o.mosaic_prob > 0) {
    o.t.mosaic = true;
    o.t.mosaic_prob = o.mosaic_prob;
  }

  tfnk::ModelGraph<float> g = tfnk::ModelGraph<float>::build(cfg, seed);
  tfnk::TrainResult res = tfnk::train(g, train_set, val_set, o.t);

  json run;
  run["command"] = "train";
  run["seed"] = seed;
  run["config"] = json::parse(tfnk::arch_to_json(cfg));
  run["dataset"] = o.data;
  run["split_ratio"] = o.split;
  json options = json::object();
  options["epochs"] = o.t.optim.epochs;
  options["batch_size"] = o.t.optim.batch_size;
  options["lr0"] = o.t.optim.lr0;
  options["lrf"] = o.t.optim.lrf;
  options["momentum"] = o.t.optim.momentum;
  options["weight_decay"] = o.t.optim.weight_decay;
  options["warmup_epochs"] = o.t.optim.warmup_epochs;
  options["patience"] = o.t.optim.patience;
  options["box_gain"] = o.t.gains.box_gain;
  options["obj_gain"] = o.t.gains.obj_gain;
  options["cls_gain"] = o.t.gains.cls_gain;
  options["reg_enabled"] = o.t.reg.enabled;
  options["reg_alpha"] = o.t.reg.alpha;
  options["mosaic_prob"] = o.t.mosaic ? o.t.mosaic_prob : 0.0;
  run["options"] = options;
  json result = json::object();
  result["epochs_run"] = res.epochs_run;
  result["best_epoch"] = res.best_epoch;
  result["best_map50"] = res.best_map50;
  result["early_stopped"] = res.early_stopped;
  result["diverged"] = res.diverged;
  run["result"] = result;
  write_file(o.out + "/run.json", run.dump(2) + "\n");
  std::printf("trained %d epoch(s), best mAP@0.5 %.4f at epoch %d\n", res.epochs_run,
              res.best_map50, res.best_epoch);
}

void run_eval(const EvalOpts& o, uint64_t seed) {
  std::vector<tfnk::Sample> samples = load_samples(o.data);
  std::vector<tfnk::EvalInput> inputs;
  tfnk::LatencyStats lat{-1, -1, -1};
  std::string model_name = o.name;

  if (!o.detections.empty()) {
    auto by_image = parse_detections_file(o.detections);
    for (const tfnk::Sample& s : samples) {
      tfnk::EvalInput in;
      auto it = by_image.find(s.id);
      if (it != by_image.end()) in.dets = it->second;
      in.gts = tfnk::train_detail::ground_truth_of(s);
      inputs.push_back(std::move(in));
    }
    if (model_name.empty()) model_name = "external";
  } else {
    if (o.ckpt.empty())
      throw tfnk::config_error("eval needs --ckpt (or --detections for precomputed boxes)");
    tfnk::ArchConfig cfg = load_arch_config(o.config, o.sets);
    tfnk::ModelGraph<float> g = restore_model(cfg, o.ckpt);
    StageTimes st;
    for (const tfnk::Sample& s : samples) {
      tfnk::EvalInput in;
      in.dets = detect_one(g, s, o.dc, &st);
      in.gts = tfnk::train_detail::ground_truth_of(s);
      inputs.push_back(std::move(in));
    }
    double n = static_cast<double>(samples.size());
    lat = tfnk::LatencyStats{st.pre / n, st.infer / n, st.nms / n};
    if (model_name.empty()) model_name = cfg.name;
  }

  tfnk::EvalReport rep = tfnk::evaluate(inputs, o.ec);
  rep.latency = lat;
  write_eval_outputs(o.out, model_name, seed, rep);
}

void run_detect(const DetectOpts& o, uint64_t seed) {
  tfnk::ArchConfig cfg = load_arch_config(o.config, o.sets);
  tfnk::ModelGraph<float> g = restore_model(cfg, o.ckpt);
  std::vector<tfnk::Sample> samples = load_samples(o.data);
  fs::create_directories(o.out);
  if (!o.overlay_dir.empty()) fs::create_directories(o.overlay_dir);

  std::string all_lines;
  int total = 0;
  for (const tfnk::Sample& s : samples) {
    std::vector<tfnk::Detection> dets = detect_one(g, s, o.dc, nullptr);
    all_lines += detection_lines(s.id, dets);
    total += static_cast<int>(dets.size());
    if (!o.overlay_dir.empty()) {
      tfnk::Image rgb = to_rgb(s.image);
      std::string sidecar;
      char line[256];
      for (const tfnk::Detection& d : dets) {
        draw_border(rgb, d);
        std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f %.6f\n", d.class_id, d.x1, d.y1,
                      d.x2, d.y2, d.confidence);
        sidecar += line;
      }
      tfnk::write_pnm(o.overlay_dir + "/" + s.id + ".ppm", rgb);
      write_file(o.overlay_dir + "/" + s.id + ".txt", sidecar);
    }
  }
  write_file(o.out + "/detections.txt", all_lines);

  json run;
  run["command"] = "detect";
  run["seed"] = seed;
  run["model"] = cfg.name;
  run["checkpoint"] = o.ckpt;
  run["dataset"] = o.data;
  run["images"] = samples.size();
  run["detections"] = total;
  run["conf_threshold"] = o.dc.conf_threshold;
  run["nms_iou"] = o.dc.nms_iou;
  write_file(o.out + "/run.json", run.dump(2) + "\n");
  std::cout << total << " detection(s) over " << samples.size() << " image(s) -> " << o.out
            << "/detections.txt\n";
}

void run_profile(const ProfileOpts& o, uint64_t seed) {
  tfnk::ArchConfig cfg = load_arch_config(o.config, o.sets);
  tfnk::ModelGraph<float> g = tfnk::ModelGraph<float>::build(cfg, seed);
  int size = o.input_size > 0 ? o.input_size : cfg.input_size;
  tfnk::ProfileReport rep = tfnk::profile(g, size);
  json j = json::parse(tfnk::profile_to_json(rep));
  j["seed"] = seed;
  std::cout << tfnk::profile_table({rep});
  if (!o.out.empty()) {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_file(o.out, j.dump(2) + "\n");
  } else {
    std::cout << j.dump(2) << "\n";
  }
}

void run_compare(const CompareOpts& o) {
  if (o.configs.size() < 2) throw tfnk::config_error("compare needs at least two --config files");
  if (!o.runlogs.empty() && o.runlogs.size() != o.configs.size())
    throw tfnk::config_error("--runlog count must match --config count");
  std::vector<tfnk::ComplexityRow> rows;
  for (size_t i = 0; i < o.configs.size(); ++i) {
    tfnk::ArchConfig cfg = load_arch_config(o.configs[i], o.sets);
    tfnk::ModelGraph<float> g = tfnk::ModelGraph<float>::build(cfg, 0);
    tfnk::ProfileReport rep = tfnk::profile(g, cfg.input_size);
    tfnk::ComplexityRow row;
    row.model = cfg.name;
    row.size_mb = rep.checkpoint_size_mb;
    row.layers = rep.layer_count;
    row.gflops = rep.gflops;
    if (!o.runlogs.empty()) {
      std::ifstream in(o.runlogs[i]);
      if (!in) throw tfnk::config_error("cannot read " + o.runlogs[i]);
      std::string line;
      double secs = 0;
      int epochs = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json ep = json::parse(line, nullptr, false);
        if (ep.is_discarded())
          throw tfnk::config_error(o.runlogs[i] + ": invalid runlog line");
        ++epochs;
        secs += ep.value("seconds", 0.0);
      }
      row.epochs = epochs;
      row.train_hours = secs / 3600.0;
    }
    rows.push_back(row);
  }
  std::cout << tfnk::complexity_table(rows);
  if (!o.out.empty()) {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_file(o.out, tfnk::complexity_table_json(rows) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchor-based infrared small-target detection toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker thread count (1 = serial, 0 = library default)");

  SynthOpts so;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic IR dataset");
  synth->add_option("--config", so.config, "SynthConfig JSON file (defaults when omitted)");
  synth->add_option("--count", so.count, "number of scenes")->required();
  synth->add_option("--out", so.out, "output dataset directory")->required();
  CLI::Option* synth_seed = synth->add_option("--seed", so.seed, "RNG seed");
  synth->add_option("--set", so.sets, "config override key.path=value");

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "train a detector");
  train->add_option("--config", to.config, "architecture JSON file")->required();
  train->add_option("--data", to.data, "dataset root (images/ + labels/)")->required();
  train->add_option("--out", to.out, "output directory")->required();
  CLI::Option* train_seed = train->add_option("--seed", to.seed, "RNG seed");
  train->add_option("--set", to.sets, "config override key.path=value");
  train->add_option("--split", to.split, "holdout ratio in (0,1); 0 validates on the train set");
  train->add_option("--epochs", to.t.optim.epochs, "epoch cap");
  train->add_option("--batch-size", to.t.optim.batch_size, "batch size");
  train->add_option("--lr0", to.t.optim.lr0, "initial learning rate");
  train->add_option("--lrf", to.t.optim.lrf, "final LR fraction");
  train->add_option("--momentum", to.t.optim.momentum, "SGD momentum");
  train->add_option("--weight-decay", to.t.optim.weight_decay, "decoupled weight decay");
  train->add_option("--warmup-epochs", to.t.optim.warmup_epochs, "linear warmup span");
  train->add_option("--patience", to.t.optim.patience, "early-stopping patience (0 disables)");
  train->add_option("--box-gain", to.t.gains.box_gain, "box loss gain");
  train->add_option("--obj-gain", to.t.gains.obj_gain, "objectness loss gain");
  train->add_option("--cls-gain", to.t.gains.cls_gain, "classification loss gain");
  train->add_option("--reg-alpha", to.reg_alpha, "mixed regularization alpha (enables the term)");
  train->add_option("--mosaic-prob", to.mosaic_prob, "mosaic probability (0 disables)");
  train->add_option("--conf", to.t.eval_decode.conf_threshold, "validation confidence threshold");
  train->add_flag("--quiet", to.quiet, "suppress per-epoch stderr lines");

  EvalOpts eo;
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint or detections file");
  evalc->add_option("--config", eo.config, "architecture JSON file");
  evalc->add_option("--ckpt", eo.ckpt, "checkpoint to evaluate");
  evalc->add_option("--detections", eo.detections, "precomputed detections file");
  evalc->add_option("--data", eo.data, "dataset root")->required();
  evalc->add_option("--out", eo.out, "output directory")->required();
  evalc->add_option("--name", eo.name, "model name for the report");
  CLI::Option* eval_seed = evalc->add_option("--seed", eo.seed, "RNG seed (recorded)");
  evalc->add_option("--set", eo.sets, "config override key.path=value");
  evalc->add_option("--conf", eo.dc.conf_threshold, "confidence threshold");
  evalc->add_option("--nms-iou", eo.dc.nms_iou, "suppression IoU threshold");
  evalc->add_option("--max-dets", eo.dc.max_detections, "detection cap per image");
  evalc->add_option("--iou-min", eo.ec.iou_min, "match IoU threshold");
  evalc->add_flag("--mean-iou-all", eo.ec.mean_iou_all, "average IoU over all matches, not TPs");

  DetectOpts do_;
  CLI::App* detect = app.add_subcommand("detect", "run inference and write detections");
  detect->add_option("--config", do_.config, "architecture JSON file")->required();
  detect->add_option("--ckpt", do_.ckpt, "checkpoint")->required();
  detect->add_option("--data", do_.data, "dataset root")->required();
  detect->add_option("--out", do_.out, "output directory")->required();
  detect->add_option("--overlay-dir", do_.overlay_dir, "write PPM overlays here");
  CLI::Option* detect_seed = detect->add_option("--seed", do_.seed, "RNG seed (recorded)");
  detect->add_option("--set", do_.sets, "config override key.path=value");
  detect->add_option("--conf", do_.dc.conf_threshold, "confidence threshold");
  detect->add_option("--nms-iou", do_.dc.nms_iou, "suppression IoU threshold");
  detect->add_option("--max-dets", do_.dc.max_detections, "detection cap per image");

  ProfileOpts po;
  CLI::App* prof = app.add_subcommand("profile", "report layers, parameters, GFLOPs, size");
  prof->add_option("--config", po.config, "architecture JSON file")->required();
  prof->add_option("--input-size", po.input_size, "square input size (0 = config value)");
  prof->add_option("--out", po.out, "write the JSON report here (stdout otherwise)");
  CLI::Option* prof_seed = prof->add_option("--seed", po.seed, "build seed (recorded)");
  prof->add_option("--set", po.sets, "config override key.path=value");

  CompareOpts co;
  CLI::App* comp = app.add_subcommand("compare", "complexity table across architectures");
  comp->add_option("--config", co.configs, "architecture JSON files (first is the baseline)");
  comp->add_option("--runlog", co.runlogs, "optional runlog.jsonl per config for epochs/hours");
  comp->add_option("--out", co.out, "write the JSON table here");
  comp->add_option("--set", co.sets, "config overrides applied to every config");

  auto with_threads = [&](auto fn) {
    return [&, fn] {
      if (threads > 0) omp_set_num_threads(threads);
      fn();
    };
  };
  synth->callback(with_threads([&] { run_synth(so, resolve_seed(synth_seed->count(), so.seed)); }));
  train->callback(with_threads([&] { run_train(to, resolve_seed(train_seed->count(), to.seed)); }));
  evalc->callback(with_threads([&] { run_eval(eo, resolve_seed(eval_seed->count(), eo.seed)); }));
  detect->callback(
      with_threads([&] { run_detect(do_, resolve_seed(detect_seed->count(), do_.seed)); }));
  prof->callback(with_threads([&] { run_profile(po, resolve_seed(prof_seed->count(), po.seed)); }));
  comp->callback(with_threads([&] { run_compare(co); }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const tfnk::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const tfnk::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
