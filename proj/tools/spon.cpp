#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "spon/assets.hpp"
#include "spon/scenario.hpp"
#include "spon/topology.hpp"

namespace ex = spon::experiments;

namespace {

constexpr int kUsage = 1;
constexpr int kScenarioFailed = 2;

int cmd_run(const std::string& scenario, const std::string& service, std::vector<unsigned> ks,
            const std::vector<double>& loss, std::uint64_t seed, unsigned reps, const std::string& out, bool no_baseline) {
    ex::ScenarioConfig cfg;
    try {
        cfg.name = ex::parse_scenario(scenario);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    }
    const auto kind = service == "rel" ? spon::overlay::ServiceKind::Reliable : spon::overlay::ServiceKind::Priority;
    if (cfg.name == ex::ScenarioName::Fairness) ks = {1};
    cfg.variants = ex::standard_variants(cfg.name, kind, ks, !no_baseline);
    cfg.loss_pct = loss;
    cfg.seed = seed;
    cfg.reps = reps;
    cfg.params = ex::default_params(cfg.name);

    ex::MetricReport report;
    try {
        report = ex::run_scenario(cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    }
    for (const auto& r : report.runs) {
        if (r.failed) std::cerr << r.variant << " rep " << r.rep << ": FAILED " << r.error << '\n';
        if (!r.settle_ok) std::cerr << r.variant << " rep " << r.rep << ": settle check failed\n" << r.settle_report;
    }
    try {
        ex::write_report(out, report);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kScenarioFailed;
    }
    if (!report.rows.empty()) std::cout << ex::summary_table(ex::summarize(report.rows));
    return report.all_ok() ? 0 : kScenarioFailed;
}

int cmd_paths(const std::string& file, const std::string& builtin, const std::string& src, const std::string& dst,
              unsigned k) {
    try {
        if (!builtin.empty() && !spon::canonical_topology(builtin)) {
            std::cerr << "no built-in topology '" << builtin << "'\n";
            return kUsage;
        }
        spon::Topology topo = builtin.empty() ? spon::load_topology_file(file)
                                              : spon::parse_topology(*spon::canonical_topology(builtin));
        spon::TopologyView view(std::make_shared<const spon::Topology>(std::move(topo)));
        for (const auto& p : spon::k_disjoint_paths(view, spon::NodeId(src), spon::NodeId(dst), k)) std::cout << spon::format_path(p) << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    }
}

int cmd_summarize(const std::string& dir) {
    try {
        std::cout << ex::summary_table(ex::summarize_dir(dir));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spon: payment overlay simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a scenario and write CSV results");
    std::string scenario;
    std::string service = "pri";
    std::vector<unsigned> ks{0};
    std::vector<double> loss{0.0};
    std::uint64_t seed = 1;
    unsigned reps = 5;
    std::string out = "results";
    bool no_baseline = false;
    run->add_option("--scenario", scenario, "Scenario name")->required();
    run->add_option("--service", service, "Overlay service")->check(CLI::IsMember({"pri", "rel"}));
    run->add_option("--k", ks, "Disjoint paths (0 floods); repeat or comma-separate")
        ->delimiter(',')
        ->check(CLI::Range(0u, 3u));
    run->add_option("--loss", loss, "Loss percentages; repeat or comma-separate")->delimiter(',')->check(CLI::Range(0.0, 100.0));
    run->add_option("--seed", seed, "Scenario seed");
    run->add_option("--reps", reps, "Repetitions")->check(CLI::PositiveNumber);
    run->add_option("--out", out, "Output directory");
    run->add_flag("--no-baseline", no_baseline, "Skip the baseline variant");

    auto* topo = app.add_subcommand("topo", "Topology utilities");
    topo->require_subcommand(1);
    auto* paths = topo->add_subcommand("paths", "Print k node-disjoint paths");
    std::string file;
    std::string builtin;
    std::string src;
    std::string dst;
    unsigned k = 1;
    auto* file_opt = paths->add_option("--file", file, "Topology file");
    auto* builtin_opt = paths->add_option("--builtin", builtin, "Built-in topology (chain, global, fairness, bgp)");
    file_opt->excludes(builtin_opt);
    paths->add_option("--src", src)->required();
    paths->add_option("--dst", dst)->required();
    paths->add_option("--k", k)->check(CLI::PositiveNumber);

    auto* summ = app.add_subcommand("summarize", "Rebuild summary files from raw CSVs");
    std::string in;
    summ->add_option("--in", in, "Results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    if (run->parsed()) return cmd_run(scenario, service, ks, loss, seed, reps, out, no_baseline);
    if (paths->parsed()) {
        if (file.empty() && builtin.empty()) {
            std::cerr << "one of --file or --builtin is required\n";
            return kUsage;
        }
        return cmd_paths(file, builtin, src, dst, k);
    }
    if (summ->parsed()) return cmd_summarize(in);
    return kUsage;
}
