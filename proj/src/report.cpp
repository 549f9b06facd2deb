#include "tfnk/report.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tfnk/errors.hpp"

namespace tfnk {

namespace {

constexpr const char* kUp = "↑";
constexpr const char* kDown = "↓";

// One-decimal fixed point via integer tenths so 78.4 - 77.4 prints as "1",
// never "0.9999999999".
long tenths(double v) { return std::lround(v * 10.0); }

std::string tenths_str(long t) {
  std::ostringstream os;
  if (t < 0) {
    os << '-';
    t = -t;
  }
  os << t / 10;
  if (t % 10 != 0) os << '.' << t % 10;
  return os.str();
}

struct Cell {
  std::string text;
  double value = 0;
  bool has_delta = false;
  double delta = 0;
};

Cell make_cell(double v, const double* base) {
  Cell c;
  c.value = v;
  if (base == nullptr) {
    c.text = format_metric(v);
    return c;
  }
  c.has_delta = true;
  c.delta = (tenths(v) - tenths(*base)) / 10.0;
  c.text = format_metric(v) + " " + format_delta(v, *base);
  return c;
}

size_t utf8_width(const std::string& s) {
  size_t w = 0;
  for (unsigned char ch : s) {
    if ((ch & 0xC0) != 0x80) ++w;  // count non-continuation bytes
  }
  return w;
}

std::string pad(const std::string& s, size_t width) {
  std::string out = s;
  const size_t w = utf8_width(s);
  if (w < width) out.append(width - w, ' ');
  return out;
}

std::string render_table(const std::string& title, const std::vector<std::string>& columns,
                         const std::vector<std::string>& models,
                         const std::vector<std::vector<Cell>>& cells,
                         const std::vector<std::string>& footnotes) {
  std::vector<size_t> widths(columns.size() + 1, 0);
  widths[0] = utf8_width("Model");
  for (const auto& m : models) widths[0] = std::max(widths[0], utf8_width(m));
  for (size_t c = 0; c < columns.size(); ++c) {
    widths[c + 1] = utf8_width(columns[c]);
    for (const auto& row : cells) widths[c + 1] = std::max(widths[c + 1], utf8_width(row[c].text));
  }
  std::ostringstream os;
  os << title << '\n';
  os << pad("Model", widths[0]);
  for (size_t c = 0; c < columns.size(); ++c) os << "  " << pad(columns[c], widths[c + 1]);
  os << '\n';
  size_t total = widths[0];
  for (size_t c = 0; c < columns.size(); ++c) total += 2 + widths[c + 1];
  os << std::string(total, '-') << '\n';
  for (size_t r = 0; r < models.size(); ++r) {
    os << pad(models[r], widths[0]);
    for (size_t c = 0; c < columns.size(); ++c) os << "  " << pad(cells[r][c].text, widths[c + 1]);
    os << '\n';
  }
  for (const auto& f : footnotes) os << f << '\n';
  return os.str();
}

std::string render_json(const std::string& title, const std::vector<std::string>& columns,
                        const std::vector<std::string>& models,
                        const std::vector<std::vector<Cell>>& cells,
                        const std::vector<std::string>& footnotes) {
  nlohmann::ordered_json j;
  j["title"] = title;
  j["columns"] = columns;
  j["rows"] = nlohmann::ordered_json::array();
  for (size_t r = 0; r < models.size(); ++r) {
    nlohmann::ordered_json row;
    row["model"] = models[r];
    row["cells"] = nlohmann::ordered_json::array();
    for (const Cell& c : cells[r]) {
      nlohmann::ordered_json jc;
      jc["value"] = c.value;
      jc["rendered"] = c.text;
      if (c.has_delta) {
        jc["delta"] = c.delta;
      } else {
        jc["delta"] = nullptr;
      }
      row["cells"].push_back(jc);
    }
    j["rows"].push_back(row);
  }
  j["footnotes"] = footnotes;
  return j.dump(2);
}

template <typename Row, typename Extract>
std::vector<std::vector<Cell>> build_cells(const std::vector<Row>& rows, Extract extract,
                                           size_t ncols) {
  std::vector<std::vector<Cell>> cells;
  std::vector<double> base(ncols, 0);
  for (size_t r = 0; r < rows.size(); ++r) {
    std::vector<Cell> line;
    for (size_t c = 0; c < ncols; ++c) {
      const double v = extract(rows[r], c);
      if (r == 0) {
        base[c] = v;
        line.push_back(make_cell(v, nullptr));
      } else {
        line.push_back(make_cell(v, &base[c]));
      }
    }
    cells.push_back(std::move(line));
  }
  return cells;
}

void require_rows(size_t n) {
  if (n == 0) throw config_error("report: need at least one row");
}

const std::vector<std::string> kDetCols = {"TP", "FN", "Precision (%)", "Recall (%)",
                                           "mAP@0.5 (%)", "IoU (%)"};
const std::vector<std::string> kCplxCols = {"Epochs", "Training Time (Hrs)", "Size (MB)", "Layers",
                                            "GFLOPs"};
const std::vector<std::string> kLatCols = {"Pre-process (ms)", "Inference (ms)",
                                           "NMS per image (ms)", "FPS"};

double det_field(const DetectionRow& r, size_t c) {
  switch (c) {
    case 0: return r.tp;
    case 1: return r.fn;
    case 2: return r.precision_pct;
    case 3: return r.recall_pct;
    case 4: return r.map50_pct;
    default: return r.iou_pct;
  }
}

double cplx_field(const ComplexityRow& r, size_t c) {
  switch (c) {
    case 0: return r.epochs;
    case 1: return r.train_hours;
    case 2: return r.size_mb;
    case 3: return r.layers;
    default: return r.gflops;
  }
}

double lat_field(const LatencyRow& r, size_t c) {
  switch (c) {
    case 0: return r.pre_ms;
    case 1: return r.infer_ms;
    case 2: return r.nms_ms;
    default: return r.fps;
  }
}

std::vector<std::string> det_models(const std::vector<DetectionRow>& rows,
                                    std::vector<std::string>* footnotes) {
  std::vector<std::string> models;
  for (const auto& r : rows) {
    std::string name = r.model;
    if (recall_inconsistent(r)) {
      name += " *";
      const double implied = 100.0 * r.tp / (r.tp + r.fn);
      footnotes->push_back("* " + r.model + ": stated recall " + format_metric(r.recall_pct) +
                           " disagrees with TP/FN counts (implied " + format_metric(implied) +
                           ")");
    }
    models.push_back(name);
  }
  return models;
}

}  // namespace

std::string format_metric(double v) { return tenths_str(tenths(v)); }

std::string format_delta(double value, double baseline) {
  const long d = tenths(value) - tenths(baseline);
  if (d == 0) return "(same)";
  const char* arrow = d > 0 ? kUp : kDown;
  return std::string("(") + arrow + " " + tenths_str(d < 0 ? -d : d) + ")";
}

bool recall_inconsistent(const DetectionRow& row) {
  if (row.tp + row.fn <= 0) return false;
  const double implied = 100.0 * row.tp / (row.tp + row.fn);
  return std::fabs(implied - row.recall_pct) > 0.5;
}

std::string detection_table(const std::vector<DetectionRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> footnotes;
  const auto models = det_models(rows, &footnotes);
  return render_table("Training Evaluation Metrics", kDetCols, models,
                      build_cells(rows, det_field, kDetCols.size()), footnotes);
}

std::string complexity_table(const std::vector<ComplexityRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> models;
  for (const auto& r : rows) models.push_back(r.model);
  return render_table("Computational Complexity", kCplxCols, models,
                      build_cells(rows, cplx_field, kCplxCols.size()), {});
}

std::string latency_table(const std::vector<LatencyRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> models;
  for (const auto& r : rows) models.push_back(r.model);
  return render_table("Model Evaluation on Test Data", kLatCols, models,
                      build_cells(rows, lat_field, kLatCols.size()), {});
}

std::string detection_table_json(const std::vector<DetectionRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> footnotes;
  const auto models = det_models(rows, &footnotes);
  return render_json("Training Evaluation Metrics", kDetCols, models,
                     build_cells(rows, det_field, kDetCols.size()), footnotes);
}

std::string complexity_table_json(const std::vector<ComplexityRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> models;
  for (const auto& r : rows) models.push_back(r.model);
  return render_json("Computational Complexity", kCplxCols, models,
                     build_cells(rows, cplx_field, kCplxCols.size()), {});
}

std::string latency_table_json(const std::vector<LatencyRow>& rows) {
  require_rows(rows.size());
  std::vector<std::string> models;
  for (const auto& r : rows) models.push_back(r.model);
  return render_json("Model Evaluation on Test Data", kLatCols, models,
                     build_cells(rows, lat_field, kLatCols.size()), {});
}

DetectionRow detection_row_from(const std::string& model, const EvalReport& r) {
  DetectionRow row;
  row.model = model;
  row.tp = r.tp;
  row.fn = r.fn;
  row.precision_pct = std::isnan(r.precision) ? 0.0 : 100.0 * r.precision;
  row.recall_pct = 100.0 * r.recall;
  row.map50_pct = 100.0 * r.map50;
  row.iou_pct = std::isnan(r.mean_iou) ? 0.0 : 100.0 * r.mean_iou;
  return row;
}

}  // namespace tfnk
