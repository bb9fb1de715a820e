#include "trackdiff/trajectory_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace trackdiff {

namespace {

void put(std::ostream& os, double v)
{
    if (std::isnan(v)) {
        os << "nan";
        return;
    }
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    os.write(buf, end - buf);
}

void write_header(std::ostream& os, bool with_id, Eigen::Index n_x, Eigen::Index n_z, bool with_est)
{
    if (with_id) os << "traj,";
    os << "t";
    for (Eigen::Index i = 1; i <= n_x; ++i) os << ",x" << i;
    for (Eigen::Index i = 1; i <= n_z; ++i) os << ",z" << i;
    if (with_est)
        for (Eigen::Index i = 1; i <= n_x; ++i) os << ",xhat" << i;
    os << '\n';
}

void write_rows(std::ostream& os, const TrajectoryRecord& rec, bool with_id, bool with_est)
{
    const Trajectory& tr = rec.trajectory;
    if (tr.states.size() != tr.measurements.size() + 1) throw Error("trajectory: inconsistent lengths");
    if (!rec.estimates.empty() && rec.estimates.size() != tr.measurements.size())
        throw Error("trajectory: estimate count does not match measurement count");
    const Eigen::Index n_x = tr.states.front().size();
    const Eigen::Index n_z = tr.measurements.empty() ? 0 : tr.measurements.front().size();
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        if (with_id) os << rec.id << ',';
        os << t;
        for (Eigen::Index i = 0; i < n_x; ++i) {
            os << ',';
            put(os, tr.states[t][i]);
        }
        for (Eigen::Index i = 0; i < n_z; ++i) {
            os << ',';
            put(os, t == 0 ? std::numeric_limits<double>::quiet_NaN() : tr.measurements[t - 1][i]);
        }
        if (with_est) {
            for (Eigen::Index i = 0; i < n_x; ++i) {
                os << ',';
                const bool have = t > 0 && !rec.estimates.empty();
                put(os, have ? rec.estimates[t - 1][i] : std::numeric_limits<double>::quiet_NaN());
            }
        }
        os << '\n';
    }
}

double parse_number(const std::string& s)
{
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("trajectory file: bad number '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

} // namespace

void write_trajectory(std::ostream& os, const Trajectory& traj, const std::vector<Vec>& estimates)
{
    const Eigen::Index n_z = traj.measurements.empty() ? 0 : traj.measurements.front().size();
    write_header(os, false, traj.states.front().size(), n_z, !estimates.empty());
    write_rows(os, TrajectoryRecord{0, traj, estimates}, false, !estimates.empty());
}

void write_trajectory_file(const std::filesystem::path& path, const Trajectory& traj, const std::vector<Vec>& estimates)
{
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    write_trajectory(os, traj, estimates);
}

void write_trajectories(std::ostream& os, const std::vector<TrajectoryRecord>& records)
{
    if (records.empty()) throw Error("trajectory file: no trajectories to write");
    const Trajectory& first = records.front().trajectory;
    const bool with_est = !records.front().estimates.empty();
    write_header(os, true, first.states.front().size(),
                 first.measurements.empty() ? 0 : first.measurements.front().size(), with_est);
    for (const auto& rec : records) write_rows(os, rec, true, with_est);
}

void write_trajectories_file(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records)
{
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    write_trajectories(os, records);
}

std::vector<TrajectoryRecord> read_trajectories(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw Error("trajectory file: missing header");
    const auto header = split(line);
    std::size_t col = 0;
    const bool with_id = !header.empty() && header[0] == "traj";
    if (with_id) ++col;
    if (col >= header.size() || header[col] != "t") throw Error("trajectory file: expected column 't'");
    ++col;
    Eigen::Index n_x = 0, n_z = 0, n_e = 0;
    for (std::size_t i = col; i < header.size(); ++i) {
        const std::string& h = header[i];
        if (h.rfind("xhat", 0) == 0) ++n_e;
        else if (h.rfind('x', 0) == 0) ++n_x;
        else if (h.rfind('z', 0) == 0) ++n_z;
        else throw Error("trajectory file: unknown column '" + h + "'");
    }
    if (n_e != 0 && n_e != n_x) throw Error("trajectory file: estimate block width differs from state width");

    std::vector<TrajectoryRecord> out;
    std::map<std::size_t, std::size_t> index;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw Error("trajectory file: wrong column count on line " + std::to_string(line_no));
        std::size_t c = 0;
        const std::size_t id = with_id ? static_cast<std::size_t>(parse_number(cells[c++])) : 0;
        const auto t = static_cast<std::size_t>(parse_number(cells[c++]));
        auto [it, fresh] = index.try_emplace(id, out.size());
        if (fresh) out.push_back(TrajectoryRecord{id, {}, {}});
        TrajectoryRecord& rec = out[it->second];
        if (t != rec.trajectory.states.size())
            throw Error("trajectory file: non-consecutive time index on line " + std::to_string(line_no));
        Vec x(n_x), z(n_z), e(n_e);
        for (Eigen::Index i = 0; i < n_x; ++i) x[i] = parse_number(cells[c++]);
        for (Eigen::Index i = 0; i < n_z; ++i) z[i] = parse_number(cells[c++]);
        for (Eigen::Index i = 0; i < n_e; ++i) e[i] = parse_number(cells[c++]);
        rec.trajectory.states.push_back(std::move(x));
        if (t > 0) {
            rec.trajectory.measurements.push_back(std::move(z));
            if (n_e > 0) rec.estimates.push_back(std::move(e));
        }
    }
    return out;
}

std::vector<TrajectoryRecord> read_trajectories_file(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path.string() + "'");
    return read_trajectories(is);
}

} // namespace trackdiff
