#include "ded/report.hpp"

#include "ded/errors.hpp"
#include "ded/raster.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ded {

using nlohmann::json;

namespace {

const std::array<Rgb, 6> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}, {80, 80, 80}}};

json report_json(const RmseReport& r) {
  json j;
  j["rmse"] = r.rmse;
  j["n_windows"] = r.n_windows;
  j["model"] = r.model;
  j["mode"] = r.mode;
  j["dataset_id"] = r.dataset_id;
  j["param_count"] = r.param_count;
  j["macs_per_scene"] = r.macs_per_scene;
  if (r.targets) j["targets"] = *r.targets;
  return j;
}

RmseReport report_from(const json& j) {
  RmseReport r;
  r.rmse = j.at("rmse").get<std::array<double, kHorizons>>();
  r.n_windows = j.at("n_windows").get<std::uint64_t>();
  r.model = j.at("model").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.param_count = j.at("param_count").get<std::uint64_t>();
  r.macs_per_scene = j.at("macs_per_scene").get<double>();
  if (j.contains("targets")) r.targets = j.at("targets").get<std::array<double, kHorizons>>();
  for (double v : r.rmse) {
    if (!(v >= 0.0)) throw DataError("report has a negative or non-finite RMSE");
  }
  return r;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string horizon_header() {
  std::string s;
  for (int h = 1; h <= kHorizons; ++h) s += " " + std::to_string(h) + " s |";
  return s;
}

void write_legend(Canvas& c, const PlotFrame& f, const std::vector<std::pair<std::string, Rgb>>& entries) {
  int y = f.top + 8;
  for (const auto& [label, color] : entries) {
    const int x = f.left + 10;
    c.fill_rect(x, y, x + 14, y + 6, color);
    c.text(x + 20, y, label, {30, 30, 30});
    y += 12;
  }
}

struct Bounds {
  double x_min = std::numeric_limits<double>::infinity(), x_max = -std::numeric_limits<double>::infinity();
  double y_min = std::numeric_limits<double>::infinity(), y_max = -std::numeric_limits<double>::infinity();
  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
    y_min = std::min(y_min, y);
    y_max = std::max(y_max, y);
  }
  // Equal-aspect frame with a margin around the data.
  PlotFrame frame(int width, int height) const {
    PlotFrame f;
    f.width = width;
    f.height = height;
    double cx = 0.5 * (x_min + x_max), cy = 0.5 * (y_min + y_max);
    double sx = x_max - x_min, sy = y_max - y_min;
    if (!std::isfinite(cx)) cx = cy = sx = sy = 0.0;
    const double pw = width - f.left - f.right, ph = height - f.top - f.bottom;
    double half_w = std::max(0.5 * sx * 1.1, 1.0), half_h = std::max(0.5 * sy * 1.1, 1.0);
    if (half_w / pw > half_h / ph) {
      half_h = half_w * ph / pw;
    } else {
      half_w = half_h * pw / ph;
    }
    f.x_min = cx - half_w;
    f.x_max = cx + half_w;
    f.y_min = cy - half_h;
    f.y_max = cy + half_h;
    return f;
  }
};

}  // namespace

std::string report_to_json(const ReportFile& file) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["reports"] = json::array();
  for (const auto& r : file.reports) j["reports"].push_back(report_json(r));
  if (!file.ablation.empty()) {
    j["ablation"] = json::array();
    for (const auto& row : file.ablation) {
      json jr;
      jr["variant"] = to_string(row.variant);
      jr["mean_rmse"] = row.mean_rmse;
      jr["runs"] = json::array();
      for (const auto& r : row.runs) jr["runs"].push_back(report_json(r));
      j["ablation"].push_back(jr);
    }
  }
  return j.dump(2) + "\n";
}

ReportFile report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw DataError("unsupported report schema version " + std::to_string(version));
    }
    ReportFile file;
    for (const auto& r : j.at("reports")) {
      file.reports.push_back(report_from(r));
      file.reports.back().schema_version = version;
    }
    if (j.contains("ablation")) {
      for (const auto& jr : j.at("ablation")) {
        AblationRow row;
        row.variant = parse_variant(jr.at("variant").get<std::string>());
        row.mean_rmse = jr.at("mean_rmse").get<std::array<double, kHorizons>>();
        for (const auto& r : jr.at("runs")) row.runs.push_back(report_from(r));
        file.ablation.push_back(std::move(row));
      }
    }
    return file;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const ReportFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << report_to_json(file);
  if (!out) throw DataError("write failed: " + path.string());
}

ReportFile load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::string markdown_table(const std::vector<RmseReport>& reports) {
  std::ostringstream os;
  os << "| Model | Mode |" << horizon_header() << "\n";
  os << "|---|---|";
  for (int h = 0; h < kHorizons; ++h) os << "---|";
  os << "\n";
  const std::array<double, kHorizons>* targets = nullptr;
  for (const auto& r : reports) {
    os << "| " << r.model << " | " << r.mode << " |";
    for (double v : r.rmse) os << " " << fixed(v, 2) << " |";
    os << "\n";
    if (r.targets) targets = &*r.targets;
  }
  if (targets) {
    os << "| published (NGSIM) | target |";
    for (double v : *targets) os << " " << fixed(v, 2) << " |";
    os << "\n";
  }
  return os.str();
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| Variant | ED | EP |" << horizon_header() << " runs |\n";
  os << "|---|---|---|";
  for (int h = 0; h < kHorizons; ++h) os << "---|";
  os << "---|\n";
  for (const auto& row : rows) {
    os << "| " << to_string(row.variant) << " | " << (uses_diffusion(row.variant) ? "yes" : "no") << " | "
       << (uses_endpoint_predictor(row.variant) ? "yes" : "no") << " |";
    for (double v : row.mean_rmse) os << " " << fixed(v, 3) << " |";
    os << " " << row.runs.size() << " |\n";
  }
  return os.str();
}

void plot_rmse(const std::vector<RmseReport>& reports, const std::filesystem::path& path) {
  if (reports.empty()) throw UsageError("no reports to plot");
  PlotFrame f;
  f.x_min = 0.5;
  f.x_max = kHorizons + 0.5;
  f.y_min = 0.0;
  double top = 0.0;
  for (const auto& r : reports) {
    for (double v : r.rmse) top = std::max(top, v);
    if (r.targets) {
      for (double v : *r.targets) top = std::max(top, v);
    }
  }
  f.y_max = top > 0.0 ? top * 1.15 : 1.0;
  Canvas c(f.width, f.height);
  draw_axes(c, f);
  std::vector<std::pair<std::string, Rgb>> legend;
  auto series = [&](const std::array<double, kHorizons>& ys, Rgb color) {
    for (int h = 0; h < kHorizons; ++h) {
      const double x = f.px(h + 1), y = f.py(ys[static_cast<std::size_t>(h)]);
      if (h > 0) c.line(f.px(h), f.py(ys[static_cast<std::size_t>(h - 1)]), x, y, color, 2);
      c.disc(x, y, 3.5, color);
    }
  };
  const std::array<double, kHorizons>* targets = nullptr;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Rgb color = kPalette[i % (kPalette.size() - 1)];
    series(reports[i].rmse, color);
    legend.emplace_back(reports[i].model + " " + reports[i].mode, color);
    if (reports[i].targets) targets = &*reports[i].targets;
  }
  if (targets) {
    series(*targets, kPalette.back());
    legend.emplace_back("published target", kPalette.back());
  }
  write_legend(c, f, legend);
  c.text(f.width / 2 - 60, f.height - 14, "horizon (s)", {30, 30, 30});
  c.text(4, 4, "RMSE (m)", {30, 30, 30});
  c.write_png(path);
}

void plot_ablation(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::vector<RmseReport> reports;
  for (const auto& row : rows) {
    RmseReport r;
    r.rmse = row.mean_rmse;
    r.model = to_string(row.variant);
    r.mode = "mean";
    reports.push_back(r);
  }
  plot_rmse(reports, path);
}

void plot_endpoint_distribution(const AgentPrediction& pred, const TrajectoryWindow& window,
                                const std::filesystem::path& path) {
  Bounds b;
  const Vec2 truth = window.future.back();
  b.add(truth.x, truth.y);
  b.add(0.0, 0.0);
  if (pred.distribution) {
    for (Eigen::Index i = 0; i < pred.distribution->samples.rows(); ++i) {
      b.add(pred.distribution->samples(i, 0), pred.distribution->samples(i, 1));
    }
  }
  if (pred.candidates) {
    for (Eigen::Index i = 0; i < pred.candidates->points.rows(); ++i) {
      b.add(pred.candidates->points(i, 0), pred.candidates->points(i, 1));
    }
  }
  const PlotFrame f = b.frame(640, 480);
  Canvas c(f.width, f.height);
  draw_axes(c, f);
  const Rgb sample_color{150, 180, 230}, cand_color{255, 127, 14}, chosen_color{214, 39, 40},
      truth_color{44, 160, 44}, hist_color{80, 80, 80};
  for (std::size_t i = 1; i < window.history.size(); ++i) {
    c.line(f.px(window.history[i - 1][0]), f.py(window.history[i - 1][1]), f.px(window.history[i][0]),
           f.py(window.history[i][1]), hist_color, 2);
  }
  if (pred.distribution) {
    for (Eigen::Index i = 0; i < pred.distribution->samples.rows(); ++i) {
      c.disc(f.px(pred.distribution->samples(i, 0)), f.py(pred.distribution->samples(i, 1)), 2.0, sample_color);
    }
  }
  if (pred.candidates) {
    for (Eigen::Index i = 0; i < pred.candidates->points.rows(); ++i) {
      c.disc(f.px(pred.candidates->points(i, 0)), f.py(pred.candidates->points(i, 1)), 3.5, cand_color);
    }
  }
  c.cross(f.px(truth.x), f.py(truth.y), 6, truth_color, 2);
  if (pred.endpoint) c.disc(f.px(pred.endpoint->x), f.py(pred.endpoint->y), 6.0, chosen_color);
  write_legend(c, f,
               {{"ED samples", sample_color},
                {"EP candidates", cand_color},
                {"selected endpoint", chosen_color},
                {"true endpoint", truth_color},
                {"history", hist_color}});
  c.write_png(path);
}

void plot_trajectories(const Scene& scene, const std::vector<AgentPrediction>& preds,
                       const std::filesystem::path& path) {
  Bounds b;
  auto global = [&](const TrajectoryWindow& w, double x, double y) {
    return Vec2{w.origin.x - scene.scene_origin.x + x, w.origin.y - scene.scene_origin.y + y};
  };
  for (std::size_t a = 0; a < scene.windows.size(); ++a) {
    const auto& w = scene.windows[a];
    for (const auto& h : w.history) {
      const Vec2 p = global(w, h[0], h[1]);
      b.add(p.x, p.y);
    }
    for (const auto& q : w.future) {
      const Vec2 p = global(w, q.x, q.y);
      b.add(p.x, p.y);
    }
    if (a < preds.size()) {
      const auto& mu = preds[a].trajectory.mu;
      for (Eigen::Index i = 0; i < mu.rows(); ++i) {
        const Vec2 p = global(w, mu(i, 0), mu(i, 1));
        b.add(p.x, p.y);
      }
    }
  }
  const PlotFrame f = b.frame(800, 480);
  Canvas c(f.width, f.height);
  draw_axes(c, f);
  const Rgb hist_color{80, 80, 80}, truth_color{44, 160, 44}, pred_color{214, 39, 40};
  auto polyline = [&](const std::vector<Vec2>& pts, Rgb color) {
    for (std::size_t i = 1; i < pts.size(); ++i) {
      c.line(f.px(pts[i - 1].x), f.py(pts[i - 1].y), f.px(pts[i].x), f.py(pts[i].y), color, 2);
    }
  };
  for (std::size_t a = 0; a < scene.windows.size(); ++a) {
    const auto& w = scene.windows[a];
    std::vector<Vec2> hist, truth, pred;
    for (const auto& h : w.history) hist.push_back(global(w, h[0], h[1]));
    truth.push_back(hist.back());
    for (const auto& q : w.future) truth.push_back(global(w, q.x, q.y));
    polyline(hist, hist_color);
    polyline(truth, truth_color);
    if (a < preds.size()) {
      pred.push_back(hist.back());
      const auto& mu = preds[a].trajectory.mu;
      for (Eigen::Index i = 0; i < mu.rows(); ++i) pred.push_back(global(w, mu(i, 0), mu(i, 1)));
      polyline(pred, pred_color);
      if (preds[a].endpoint) {
        const Vec2 e = global(w, preds[a].endpoint->x, preds[a].endpoint->y);
        c.disc(f.px(e.x), f.py(e.y), 4.0, pred_color);
      }
    }
    c.disc(f.px(hist.back().x), f.py(hist.back().y), 3.0, hist_color);
  }
  write_legend(c, f, {{"history", hist_color}, {"ground truth", truth_color}, {"prediction", pred_color}});
  c.write_png(path);
}

}  // namespace ded
