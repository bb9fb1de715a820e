#include "trackdiff/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace trackdiff {

namespace {

std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

double parse_double(const std::string& s)
{
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("report: bad number '" + s + "'");
    return v;
}

template <typename Int>
Int parse_int(const std::string& s)
{
    Int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("report: bad integer '" + s + "'");
    return v;
}

struct Column {
    const char* name;
    std::function<std::string(const ReportCell&)> get;
    std::function<void(ReportCell&, const std::string&)> set;
};

#define TD_STR(field) \
    Column { #field, [](const ReportCell& c) { return c.field; }, [](ReportCell& c, const std::string& s) { c.field = s; } }
#define TD_DBL(field) \
    Column { #field, [](const ReportCell& c) { return fmt(c.field); }, \
             [](ReportCell& c, const std::string& s) { c.field = parse_double(s); } }
#define TD_INT(field, type) \
    Column { #field, [](const ReportCell& c) { return std::to_string(c.field); }, \
             [](ReportCell& c, const std::string& s) { c.field = parse_int<type>(s); } }

const std::vector<Column>& columns()
{
    static const std::vector<Column> cols{
        TD_STR(suite), TD_STR(scenario), TD_STR(variant), TD_STR(filter), TD_DBL(inv_r2_db), TD_DBL(mse_db),
        TD_DBL(degradation_db), TD_INT(trajectories, int), TD_STR(status),
        TD_STR(echo.truth_measurement), TD_DBL(echo.truth_theta_deg), TD_STR(echo.truth_noise), TD_STR(echo.truth_J),
        TD_STR(echo.model_measurement), TD_DBL(echo.model_theta_deg), TD_STR(echo.model_noise), TD_STR(echo.model_J),
        TD_DBL(echo.mix_weight), TD_DBL(echo.mix_scale), TD_DBL(echo.delta), TD_DBL(echo.nu_db),
        TD_INT(echo.horizon, int), TD_INT(echo.n_test_trajectories, int), TD_INT(echo.trackdiffuser_trajectories, int),
        TD_INT(echo.K, int), TD_STR(echo.schedule), TD_DBL(echo.omega), TD_INT(echo.L, int), TD_DBL(echo.temp_scale),
        TD_STR(echo.predict_shift), TD_DBL(echo.ukf_alpha), TD_DBL(echo.ukf_beta), TD_DBL(echo.ukf_kappa),
        TD_INT(echo.pf_particles, int), TD_DBL(echo.pf_ess_fraction), TD_DBL(echo.init_cov),
        TD_INT(echo.seed, std::uint64_t), TD_STR(echo.model_digest)};
    return cols;
}

#undef TD_STR
#undef TD_DBL
#undef TD_INT

std::string header_name(const char* field)
{
    std::string s = field;
    if (s.rfind("echo.", 0) == 0) s = s.substr(5);
    return s;
}

std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw Error("report: unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

const std::vector<std::string>& report_columns()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const Column& c : columns()) n.push_back(header_name(c.name));
        return n;
    }();
    return names;
}

void write_report_csv(std::ostream& os, const MseReport& report)
{
    const auto& cols = columns();
    const auto& names = report_columns();
    for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
    os << '\n';
    for (const ReportCell& cell : report.cells) {
        for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << quote(cols[i].get(cell));
        os << '\n';
    }
}

MseReport read_report_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw Error("report: empty file");
    const auto header = split_csv(line);
    const auto& names = report_columns();
    if (header != names) throw Error("report: unexpected header");
    MseReport report;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != names.size()) throw Error("report: wrong field count");
        ReportCell cell;
        for (std::size_t i = 0; i < fields.size(); ++i) columns()[i].set(cell, fields[i]);
        report.cells.push_back(std::move(cell));
    }
    return report;
}

void write_report_csv_file(const std::filesystem::path& path, const MseReport& report)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    write_report_csv(out, report);
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

MseReport read_report_csv_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_report_csv(in);
}

std::string render_report_svg(const MseReport& report, const std::string& title)
{
    if (report.cells.empty()) throw Error("report: no cells");
    // Series keyed by (scenario, variant, filter) in first-seen order.
    std::vector<std::string> keys;
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const ReportCell& c : report.cells) {
        std::string key = c.filter;
        if (c.variant != "default") key = c.variant + " " + key;
        if (!c.scenario.empty() && c.suite != "benchmark") key = c.suite + " " + key;
        if (!series.count(key)) keys.push_back(key);
        auto& pts = series[key];
        if (std::isfinite(c.mse_db)) {
            pts.emplace_back(c.inv_r2_db, c.mse_db);
            xmin = std::min(xmin, c.inv_r2_db);
            xmax = std::max(xmax, c.inv_r2_db);
            ymin = std::min(ymin, c.mse_db);
            ymax = std::max(ymax, c.mse_db);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (xmax == xmin) xmin -= 1.0, xmax += 1.0;
    if (ymax == ymin) ymin -= 1.0, ymax += 1.0;

    constexpr double W = 640, Hh = 420, L = 60, R = 170, T = 40, B = 50;
    const auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    const auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * (Hh - T - B); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::ostringstream s;
    s << std::setprecision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << Hh - B << "\" x2=\"" << W - R << "\" y2=\"" << Hh - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << Hh - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << "1/r^2 [dB]</text>\n";
    s << "<text x=\"14\" y=\"" << Hh / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << Hh / 2
      << ")\" text-anchor=\"middle\">MSE [dB]</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        s << "<text x=\"" << px(xv) << "\" y=\"" << Hh - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << xv
          << "</text>\n";
        s << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << yv
          << "</text>\n";
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto pts = series[keys[i]];
        std::sort(pts.begin(), pts.end());
        const char* color = palette[i % (sizeof(palette) / sizeof(palette[0]))];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" data-series=\""
          << xml_escape(keys[i]) << "\" points=\"";
        for (std::size_t p = 0; p < pts.size(); ++p)
            s << (p ? " " : "") << px(pts[p].first) << ',' << py(pts[p].second);
        s << "\"/>\n";
        const double ly = T + 16.0 * static_cast<double>(i);
        s << "<text x=\"" << W - R + 10 << "\" y=\"" << ly + 4 << "\" font-size=\"11\" fill=\"" << color << "\">"
          << xml_escape(keys[i]) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

void emit_report(const MseReport& report, const std::filesystem::path& dir, const std::string& stem, bool csv, bool svg)
{
    if (report.cells.empty()) throw Error("report: no cells");
    std::filesystem::create_directories(dir);
    if (csv) write_report_csv_file(dir / (stem + ".csv"), report);
    if (svg) {
        std::ofstream out(dir / (stem + ".svg"), std::ios::binary);
        if (!out) throw Error("cannot write '" + (dir / (stem + ".svg")).string() + "'");
        out << render_report_svg(report, stem);
    }
}

} // namespace trackdiff
