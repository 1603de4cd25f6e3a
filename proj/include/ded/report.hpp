#pragma once

#include "ded/evaluation.hpp"
#include "ded/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ded {

// Report files hold {"schema_version": N, "reports": [...], "ablation": [...]}.
struct ReportFile {
  std::vector<RmseReport> reports;
  std::vector<AblationRow> ablation;
};

std::string report_to_json(const ReportFile& file);
ReportFile report_from_json(const std::string& text);
void save_report(const std::filesystem::path& path, const ReportFile& file);
ReportFile load_report(const std::filesystem::path& path);

// One row per report, horizons 1..5 s as columns; a published-target row
// follows when any report carries targets.
std::string markdown_table(const std::vector<RmseReport>& reports);
// Variant rows with endpoint-module check marks and mean RMSE over seeds.
std::string ablation_table(const std::vector<AblationRow>& rows);

void plot_rmse(const std::vector<RmseReport>& reports, const std::filesystem::path& path);
void plot_ablation(const std::vector<AblationRow>& rows, const std::filesystem::path& path);
// ED samples, EP candidates, the calibrated endpoint and the true endpoint
// of one agent.
void plot_endpoint_distribution(const AgentPrediction& pred, const TrajectoryWindow& window,
                                const std::filesystem::path& path);
// History, ground-truth future and predicted mean of every agent of a
// scene, in scene coordinates.
void plot_trajectories(const Scene& scene, const std::vector<AgentPrediction>& preds,
                       const std::filesystem::path& path);

}  // namespace ded
