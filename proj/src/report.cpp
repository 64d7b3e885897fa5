#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "auxcl/errors.hpp"
#include "auxcl/experiment.hpp"

namespace auxcl {

namespace {

struct Row {
    std::string digest, method, setting;
    std::size_t buffer = 0;
    std::uint64_t seed = 0;
    double class_il = 0, task_il = 0, peak = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

std::vector<Row> read_metrics(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line)) return {};
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* need : {"config_digest", "method", "buffer", "setting", "seed", "class_il",
                             "task_il", "mean_boundary_peak"})
        if (!col.count(need))
            throw FormatError(path.string() + ": missing column '" + need + "'");

    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != header.size())
            throw FormatError(fmt::format("{}:{}: expected {} fields, got {}", path.string(),
                                          lineno, header.size(), f.size()));
        try {
            Row r;
            r.digest = f[col["config_digest"]];
            r.method = f[col["method"]];
            r.setting = f[col["setting"]];
            r.buffer = std::stoull(f[col["buffer"]]);
            r.seed = std::stoull(f[col["seed"]]);
            r.class_il = std::stod(f[col["class_il"]]);
            r.task_il = std::stod(f[col["task_il"]]);
            r.peak = std::stod(f[col["mean_boundary_peak"]]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw FormatError(fmt::format("{}:{}: unparsable number", path.string(), lineno));
        }
    }
    return rows;
}

// Keeps first-seen order so tables follow the grid order of the config.
template <typename T>
void note(std::vector<T>& seen, const T& v) {
    if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
}

}  // namespace

std::vector<ReportCell> aggregate_results(const std::filesystem::path& results_dir) {
    if (!std::filesystem::is_directory(results_dir))
        throw UsageError("results directory not found: " + results_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(results_dir))
        if (entry.is_regular_file() && entry.path().filename() == "metrics.csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("no metrics.csv under " + results_dir.string());

    struct Group {
        std::vector<std::string> methods, settings;
        std::vector<std::size_t> buffers;
        // (method, buffer, setting) -> seed -> values; a repeated seed keeps the first copy
        std::map<std::tuple<std::string, std::size_t, std::string>,
                 std::map<std::uint64_t, Row>> cells;
    };
    std::vector<std::string> digests;
    std::map<std::string, Group> groups;
    for (const auto& file : files) {
        for (Row& r : read_metrics(file)) {
            note(digests, r.digest);
            Group& g = groups[r.digest];
            note(g.methods, r.method);
            note(g.settings, r.setting);
            note(g.buffers, r.buffer);
            g.cells[{r.method, r.buffer, r.setting}].emplace(r.seed, r);
        }
    }

    std::vector<ReportCell> out;
    for (const auto& digest : digests) {
        Group& g = groups[digest];
        std::sort(g.buffers.begin(), g.buffers.end());
        std::size_t max_seeds = 0;
        for (const auto& [key, seeds] : g.cells) max_seeds = std::max(max_seeds, seeds.size());
        for (std::size_t b : g.buffers)
            for (const auto& m : g.methods)
                for (const auto& s : g.settings) {
                    ReportCell cell;
                    cell.digest = digest;
                    cell.method = m;
                    cell.buffer = b;
                    cell.setting = s;
                    auto it = g.cells.find({m, b, s});
                    if (it == g.cells.end()) {
                        cell.status = "missing";
                        out.push_back(cell);
                        continue;
                    }
                    std::vector<double> ci, ti, pk;
                    for (const auto& [seed, r] : it->second) {
                        ci.push_back(r.class_il);
                        ti.push_back(r.task_il);
                        pk.push_back(r.peak);
                    }
                    cell.num_seeds = ci.size();
                    cell.class_il = mean_std(ci);
                    cell.task_il = mean_std(ti);
                    cell.boundary_peak = mean_std(pk);
                    if (cell.num_seeds < max_seeds) cell.status = "partial";
                    out.push_back(cell);
                }
    }
    return out;
}

std::string render_report(const std::vector<ReportCell>& cells, ReportFormat format) {
    std::string out;
    if (format == ReportFormat::Csv) {
        out = "config_digest,method,buffer,setting,seeds,class_il_mean,class_il_std,task_il_mean,"
              "task_il_std,peak_mean,peak_std,status\n";
        for (const auto& c : cells) {
            if (c.status == "missing") {
                out += fmt::format("{},{},{},{},0,,,,,,,missing\n", c.digest, c.method, c.buffer,
                                   c.setting);
                continue;
            }
            out += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n",
                               c.digest, c.method, c.buffer, c.setting, c.num_seeds,
                               c.class_il.mean, c.class_il.std, c.task_il.mean, c.task_il.std,
                               c.boundary_peak.mean, c.boundary_peak.std, c.status);
        }
        return out;
    }

    std::string current;
    for (const auto& c : cells) {
        if (c.digest != current) {
            if (!current.empty()) out += "\n";
            current = c.digest;
            out += fmt::format("config {}\n", c.digest);
            out += fmt::format("{:>7}  {:<10} {:<18} {:>5}  {:>16}  {:>16}  {:>15}  {}\n",
                               "buffer", "method", "setting", "seeds", "class-il %",
                               "task-il %", "peak", "status");
        }
        if (c.status == "missing") {
            out += fmt::format("{:>7}  {:<10} {:<18} {:>5}  {:>16}  {:>16}  {:>15}  missing\n",
                               c.buffer, c.method, c.setting, 0, "-", "-", "-");
            continue;
        }
        const auto pct = [](const MeanStd& m) {
            return fmt::format("{:.2f} ± {:.2f}", 100.0 * m.mean, 100.0 * m.std);
        };
        const auto raw = [](const MeanStd& m) { return fmt::format("{:.3f} ± {:.3f}", m.mean, m.std); };
        out += fmt::format("{:>7}  {:<10} {:<18} {:>5}  {:>16}  {:>16}  {:>15}  {}\n", c.buffer,
                           c.method, c.setting, c.num_seeds, pct(c.class_il), pct(c.task_il),
                           raw(c.boundary_peak), c.status);
    }
    return out;
}

}  // namespace auxcl
