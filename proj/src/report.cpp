#include "fingerdiff/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

using nlohmann::json;

json report_to_json(const EvalReport& report) {
  json j;
  j["per_target_auc"] = report.per_target_auc;
  j["mean_auc"] = report.mean_auc;
  j["per_generator_auc"] = report.per_generator_auc;
  j["condition"] = report.condition;
  j["clip_length"] = report.clip_length;
  j["config_hash"] = report.config_hash;
  j["skipped_targets"] = report.skipped_targets;
  j["tool_version"] = report.tool_version;
  j["notes"] = report.notes;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    j.at("per_target_auc").get_to(r.per_target_auc);
    j.at("mean_auc").get_to(r.mean_auc);
    j.at("per_generator_auc").get_to(r.per_generator_auc);
    j.at("condition").get_to(r.condition);
    j.at("clip_length").get_to(r.clip_length);
    j.at("config_hash").get_to(r.config_hash);
    j.at("skipped_targets").get_to(r.skipped_targets);
    j.at("tool_version").get_to(r.tool_version);
    j.at("notes").get_to(r.notes);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad report file: ") + e.what());
  }
  return r;
}

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << content;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

// Blue (low) -> white (0.5) -> red (high) for AUC values.
std::string auc_color(double v) {
  v = std::min(1.0, std::max(0.0, v));
  int r, g, b;
  if (v < 0.5) {
    const double t = v / 0.5;
    r = static_cast<int>(60 + t * 195);
    g = static_cast<int>(90 + t * 165);
    b = 255;
  } else {
    const double t = (v - 0.5) / 0.5;
    r = 255;
    g = static_cast<int>(255 - t * 175);
    b = static_cast<int>(255 - t * 195);
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string svg_header(int w, int h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  return os.str();
}

std::string svg_text(double x, double y, const std::string& s, int size = 12,
                     const std::string& anchor = "middle") {
  std::ostringstream os;
  os << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\""
     << size << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  return os.str();
}

std::string format_auc(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string heatmap_svg(const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels,
                        const std::vector<std::vector<double>>& values,
                        const std::string& title) {
  const int cell = 72, left = 120, top = 70, bottom = 20;
  const int w = left + cell * static_cast<int>(col_labels.size()) + 20;
  const int h = top + cell * static_cast<int>(row_labels.size()) + bottom;
  std::ostringstream os;
  os << svg_header(w, h);
  os << svg_text(w / 2.0, 24, title, 14);
  for (std::size_t c = 0; c < col_labels.size(); ++c)
    os << svg_text(left + cell * (c + 0.5), top - 10, col_labels[c]);
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    os << svg_text(left - 10, top + cell * (r + 0.5) + 4, row_labels[r], 12, "end");
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const double v = values[r][c];
      os << "<rect x=\"" << left + cell * c << "\" y=\"" << top + cell * r << "\" width=\""
         << cell << "\" height=\"" << cell << "\" fill=\"" << auc_color(v)
         << "\" stroke=\"#333\"/>\n";
      os << svg_text(left + cell * (c + 0.5), top + cell * (r + 0.5) + 4, format_auc(v));
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  EvalReport out = report;

  // Internal consistency: mean must equal the recomputed mean of the
  // per-target values.
  if (!out.per_target_auc.empty()) {
    double sum = 0.0;
    for (const auto& [_, v] : out.per_target_auc) sum += v;
    out.mean_auc = sum / static_cast<double>(out.per_target_auc.size());
  }

  if (out.per_generator_auc.empty()) {
    out.notes.push_back("heatmap skipped: per_generator_auc is empty");
  } else {
    std::vector<std::string> cols;
    std::vector<double> row;
    for (const auto& [gen, v] : out.per_generator_auc) {
      cols.push_back(gen);
      row.push_back(v);
    }
    const std::string label = out.condition.empty() ? "model" : out.condition;
    write_text_file(out_dir / "crossgen_heatmap.svg",
                    heatmap_svg({label}, cols, {row}, "per-generator AUC"));
  }

  write_text_file(out_dir / "report.json", report_to_json(out).dump(2) + "\n");
}

void emit_crossgen(const CrossGenResult& result, const std::filesystem::path& out_dir) {
  json j;
  j["tags"] = result.tags;
  j["matrix"] = result.matrix;
  j["tool_version"] = kToolVersion;
  write_text_file(out_dir / "crossgen.json", j.dump(2) + "\n");
  write_text_file(
      out_dir / "crossgen_heatmap.svg",
      heatmap_svg(result.tags, result.tags, result.matrix,
                  "cross-generator AUC (rows: train tag, cols: test tag)"));
}

void emit_ablation(const std::vector<AblationRow>& rows, const std::string& axis,
                   const std::filesystem::path& out_dir) {
  json j;
  j["axis"] = axis;
  j["rows"] = json::array();
  for (const auto& row : rows)
    j["rows"].push_back({{"label", row.label}, {"report", report_to_json(row.report)}});
  j["tool_version"] = kToolVersion;
  write_text_file(out_dir / "ablation.json", j.dump(2) + "\n");

  if (axis == "condition") {
    const int bar_w = 90, gap = 30, left = 60, top = 50, plot_h = 220, bottom = 40;
    const int w = left + static_cast<int>(rows.size()) * (bar_w + gap) + 20;
    const int h = top + plot_h + bottom;
    std::ostringstream os;
    os << svg_header(w, h);
    os << svg_text(w / 2.0, 24, "mean AUC by input condition", 14);
    os << "<line x1=\"" << left - 8 << "\" y1=\"" << top + plot_h << "\" x2=\"" << w - 12
       << "\" y2=\"" << top + plot_h << "\" stroke=\"#333\"/>\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = std::min(1.0, std::max(0.0, rows[i].report.mean_auc));
      const int x = left + static_cast<int>(i) * (bar_w + gap);
      const int bh = static_cast<int>(v * plot_h);
      os << "<rect x=\"" << x << "\" y=\"" << top + plot_h - bh << "\" width=\"" << bar_w
         << "\" height=\"" << bh << "\" fill=\"" << auc_color(v) << "\" stroke=\"#333\"/>\n";
      os << svg_text(x + bar_w / 2.0, top + plot_h - bh - 6, format_auc(rows[i].report.mean_auc));
      os << svg_text(x + bar_w / 2.0, top + plot_h + 18, rows[i].label);
    }
    os << "</svg>\n";
    write_text_file(out_dir / "condition_bars.svg", os.str());
  }
}

}  // namespace fingerdiff
