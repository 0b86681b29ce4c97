#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iid {

// Scale caps used to fold unbounded error metrics into [0,1]; a score at or
// beyond the cap normalizes to 0.
inline constexpr double kLmseCap = 0.10;  // LMSE is dimensionless
inline constexpr double kMreCap = 25.0;   // 0..255 scale
inline constexpr double kMaceCap = 50.0;  // 0..255 scale

struct MetricsReport {
    std::optional<double> lmse;
    std::optional<double> whdr;
    std::optional<double> saw_p50, saw_p70, saw_p80;
    std::optional<double> mre;
    std::optional<double> mace_t;
};

// Radar-chart values in [0,1], 1 = perfect. Error metrics are inverted
// against their caps; the LMSE and MRE axes are additionally raised to the
// 4th power after normalization to spread the top of the range. Missing
// metrics chart as 0.
struct ChartValues {
    double lmse = 0, whdr = 0, saw = 0, mre = 0, mace = 0;
};

double normalize_against_cap(double score, double cap);
ChartValues normalize_report(const MetricsReport& report);

// CSV rows: metric,score,normalized,chart.
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report_csv(const std::filesystem::path& path);

// One polygon per labeled report over the five axes.
void render_radar_svg(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, ChartValues>>& entries);

}  // namespace iid
