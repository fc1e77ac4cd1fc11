#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "spon/scenario.hpp"

namespace spon::experiments {

namespace {

constexpr const char* kRawHeader = "scenario,variant,loss_pct,rep,seed,metric,index,value";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (auto& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return out;
}

std::string gain_text(const std::optional<double>& g) { return g ? format_double(*g) : "N/A"; }

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("no rows to summarize");
    const std::string& scenario = rows.front().scenario;
    using Key = std::tuple<std::string, double, std::string>;
    std::map<Key, std::vector<double>> groups;
    std::vector<Key> order;
    for (const auto& r : rows) {
        if (r.scenario != scenario) throw std::invalid_argument("rows from mixed scenarios");
        Key k{r.variant, r.loss_pct, r.metric};
        auto [it, fresh] = groups.try_emplace(k);
        if (fresh) order.push_back(k);
        it->second.push_back(r.value);
    }
    std::sort(order.begin(), order.end(), [](const Key& a, const Key& b) {
        const bool ab = std::get<0>(a) == "baseline";
        const bool bb = std::get<0>(b) == "baseline";
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        if (std::get<2>(a) != std::get<2>(b)) return std::get<2>(a) < std::get<2>(b);
        if (ab != bb) return ab;
        return std::get<0>(a) < std::get<0>(b);
    });

    std::vector<SummaryRow> out;
    std::map<std::pair<double, std::string>, double> baseline_mean;
    for (const auto& k : order) {
        const auto& v = groups[k];
        SummaryRow s;
        s.scenario = scenario;
        s.variant = std::get<0>(k);
        s.loss_pct = std::get<1>(k);
        s.metric = std::get<2>(k);
        s.n = v.size();
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(s.n);
        if (s.n > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - s.mean) * (x - s.mean);
            s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
        }
        if (s.variant == "baseline") baseline_mean[{s.loss_pct, s.metric}] = s.mean;
        out.push_back(std::move(s));
    }
    for (auto& s : out) {
        if (s.variant == "baseline") continue;
        auto it = baseline_mean.find({s.loss_pct, s.metric});
        if (it == baseline_mean.end() || it->second == 0.0) continue;
        s.gain_pct = (it->second - s.mean) / it->second * 100.0;
    }
    return out;
}

void write_raw_csv(const std::filesystem::path& file, const std::vector<MetricRow>& rows) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << kRawHeader << '\n';
    for (const auto& r : rows)
        os << r.scenario << ',' << r.variant << ',' << format_double(r.loss_pct) << ',' << r.rep << ',' << r.seed << ','
           << r.metric << ',' << r.index << ',' << format_double(r.value) << '\n';
}

std::vector<MetricRow> read_raw_csv(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    std::string line;
    if (!std::getline(is, line) || split_csv(line) != split_csv(kRawHeader))
        throw std::runtime_error(file.string() + ": unexpected header");
    std::vector<MetricRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 8) throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": bad field count");
        try {
            MetricRow r;
            r.scenario = f[0];
            r.variant = f[1];
            r.loss_pct = std::stod(f[2]);
            r.rep = static_cast<unsigned>(std::stoul(f[3]));
            r.seed = std::stoull(f[4]);
            r.metric = f[5];
            r.index = std::stoull(f[6]);
            r.value = std::stod(f[7]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    return rows;
}

void write_summary_csv(const std::filesystem::path& file, const std::vector<SummaryRow>& rows) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "scenario,variant,loss_pct,metric,n,mean,stddev,gain_pct\n";
    for (const auto& s : rows)
        os << s.scenario << ',' << s.variant << ',' << format_double(s.loss_pct) << ',' << s.metric << ',' << s.n << ','
           << format_double(s.mean) << ',' << format_double(s.stddev) << ',' << gain_text(s.gain_pct) << '\n';
}

std::string summary_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %7s %-24s %6s %14s %14s %10s\n", "variant", "loss%", "metric", "n", "mean",
                  "stddev", "gain%");
    os << buf;
    for (const auto& s : rows) {
        std::string gain = "N/A";
        if (s.gain_pct) {
            char g[32];
            std::snprintf(g, sizeof g, "%.2f", *s.gain_pct);
            gain = g;
        }
        std::snprintf(buf, sizeof buf, "%-14s %7.2f %-24s %6zu %14.4f %14.4f %10s\n", s.variant.c_str(), s.loss_pct,
                      s.metric.c_str(), s.n, s.mean, s.stddev, gain.c_str());
        os << buf;
    }
    return os.str();
}

void write_report(const std::filesystem::path& dir, const MetricReport& report) {
    std::filesystem::create_directories(dir);
    std::map<std::string, std::vector<MetricRow>> by_variant;
    for (const auto& r : report.rows) by_variant[r.variant].push_back(r);
    for (const auto& [variant, rows] : by_variant) write_raw_csv(dir / ("raw_" + sanitize(variant) + ".csv"), rows);
    if (report.rows.empty()) return;
    auto summary = summarize(report.rows);
    write_summary_csv(dir / "summary.csv", summary);
    std::ofstream(dir / "summary.txt") << report.scenario << '\n' << summary_table(summary);
}

std::vector<SummaryRow> summarize_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("raw_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<MetricRow> rows;
    for (const auto& f : files) {
        auto part = read_raw_csv(f);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    auto summary = summarize(rows);
    write_summary_csv(dir / "summary.csv", summary);
    std::ofstream(dir / "summary.txt") << rows.front().scenario << '\n' << summary_table(summary);
    return summary;
}

}  // namespace spon::experiments
