#include "iid/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "iid/errors.hpp"

namespace iid {

double normalize_against_cap(double score, double cap) {
    return std::clamp(1.0 - score / cap, 0.0, 1.0);
}

ChartValues normalize_report(const MetricsReport& report) {
    ChartValues v;
    if (report.lmse) v.lmse = std::pow(normalize_against_cap(*report.lmse, kLmseCap), 4.0);
    if (report.whdr) v.whdr = std::clamp(1.0 - *report.whdr, 0.0, 1.0);
    if (report.saw_p70) v.saw = std::clamp(*report.saw_p70, 0.0, 1.0);
    if (report.mre) v.mre = std::pow(normalize_against_cap(*report.mre, kMreCap), 4.0);
    if (report.mace_t) v.mace = normalize_against_cap(*report.mace_t, kMaceCap);
    return v;
}

namespace {

void write_row(std::ofstream& out, const char* name, const std::optional<double>& score, double normalized,
               double chart) {
    if (!score) return;
    out << name << ',' << *score << ',' << normalized << ',' << chart << '\n';
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << std::setprecision(9);
    out << "metric,score,normalized,chart\n";
    const ChartValues v = normalize_report(report);
    if (report.lmse) write_row(out, "lmse", report.lmse, normalize_against_cap(*report.lmse, kLmseCap), v.lmse);
    if (report.whdr) write_row(out, "whdr", report.whdr, v.whdr, v.whdr);
    if (report.saw_p50) write_row(out, "saw_p50", report.saw_p50, *report.saw_p50, *report.saw_p50);
    if (report.saw_p70) write_row(out, "saw_p70", report.saw_p70, v.saw, v.saw);
    if (report.saw_p80) write_row(out, "saw_p80", report.saw_p80, *report.saw_p80, *report.saw_p80);
    if (report.mre) write_row(out, "mre", report.mre, normalize_against_cap(*report.mre, kMreCap), v.mre);
    if (report.mace_t) write_row(out, "mace_t", report.mace_t, v.mace, v.mace);
}

MetricsReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path.string());
    MetricsReport report;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "metric,score,normalized,chart") continue;
        std::istringstream ls(line);
        std::string name, score_s;
        if (!std::getline(ls, name, ',') || !std::getline(ls, score_s, ','))
            throw DataError("malformed report line " + std::to_string(line_no) + " in " + path.string() +
                            ": '" + line + "'");
        double score = 0;
        try {
            score = std::stod(score_s);
        } catch (const std::exception&) {
            throw DataError("malformed report line " + std::to_string(line_no) + " in " + path.string() +
                            ": '" + line + "'");
        }
        if (name == "lmse")
            report.lmse = score;
        else if (name == "whdr")
            report.whdr = score;
        else if (name == "saw_p50")
            report.saw_p50 = score;
        else if (name == "saw_p70")
            report.saw_p70 = score;
        else if (name == "saw_p80")
            report.saw_p80 = score;
        else if (name == "mre")
            report.mre = score;
        else if (name == "mace_t")
            report.mace_t = score;
        else
            throw DataError("unknown metric '" + name + "' at line " + std::to_string(line_no) + " in " +
                            path.string());
    }
    return report;
}

void render_radar_svg(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, ChartValues>>& entries) {
    if (entries.empty()) throw DataError("radar chart: no reports given");
    const int size = 420;
    const double cx = size / 2.0, cy = size / 2.0, radius = 150.0;
    const char* axis_names[5] = {"LMSE", "WHDR", "SAW", "MRE", "MACE"};
    const char* colors[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    auto axis_point = [&](int axis, double value) {
        const double angle = -3.14159265358979 / 2 + axis * 2 * 3.14159265358979 / 5;
        return std::pair<double, double>(cx + radius * value * std::cos(angle),
                                         cy + radius * value * std::sin(angle));
    };

    std::ofstream out(path);
    if (!out) throw DataError("cannot write chart: " + path.string());
    out << std::setprecision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 180 << "\" height=\"" << size
        << "\" viewBox=\"0 0 " << size + 180 << " " << size << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (double ring : {0.25, 0.5, 0.75, 1.0}) {
        out << "<polygon points=\"";
        for (int axis = 0; axis < 5; ++axis) {
            auto [x, y] = axis_point(axis, ring);
            out << x << ',' << y << ' ';
        }
        out << "\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    }
    for (int axis = 0; axis < 5; ++axis) {
        auto [x, y] = axis_point(axis, 1.0);
        out << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << x << "\" y2=\"" << y
            << "\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
        auto [lx, ly] = axis_point(axis, 1.14);
        out << "<text x=\"" << lx << "\" y=\"" << ly
            << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << axis_names[axis]
            << "</text>\n";
    }

    for (size_t e = 0; e < entries.size(); ++e) {
        const ChartValues& v = entries[e].second;
        const double values[5] = {v.lmse, v.whdr, v.saw, v.mre, v.mace};
        const char* color = colors[e % 6];
        out << "<polygon points=\"";
        for (int axis = 0; axis < 5; ++axis) {
            auto [x, y] = axis_point(axis, values[axis]);
            out << x << ',' << y << ' ';
        }
        out << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        out << "<rect x=\"" << size + 10 << "\" y=\"" << 20 + 22 * e << "\" width=\"14\" height=\"14\" fill=\""
            << color << "\"/>\n";
        out << "<text x=\"" << size + 30 << "\" y=\"" << 32 + 22 * e
            << "\" font-family=\"sans-serif\" font-size=\"13\">" << entries[e].first << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace iid
