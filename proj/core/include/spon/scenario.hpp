#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spon/netsim.hpp"
#include "spon/payment.hpp"

namespace spon::experiments {

enum class ScenarioName {
    ChainPingLoss,
    ChainStreamLoss,
    GlobalStreamLoss,
    ChainMeltdown,
    GlobalMeltdown,
    Fairness,
    Bgp,
};

const char* to_string(ScenarioName s);
/// Throws std::invalid_argument for unknown names.
ScenarioName parse_scenario(const std::string& name);
const std::vector<ScenarioName>& all_scenarios();

/// Baseline (direct connector pairing) or one overlay service class.
struct Variant {
    std::string name;
    bool baseline = false;
    overlay::ServiceClass service;
    /// Baseline only: the direct channel is pinned to this overlay path.
    std::optional<std::vector<NodeId>> pinned_path;

    static Variant make_baseline();
    static Variant overlay(overlay::ServiceKind kind, unsigned k);
    static Variant baseline_pinned(std::string name, std::vector<NodeId> path);
};

struct FairnessParams {
    unsigned clients_per_flow = 100;
    unsigned streams_per_client = 8;
    double ramp_interval_ms = 1000.0;
    double hold_ms = 20000.0;
    double capacity_mbps = 15.0;
    double honest_mbps = 15.0;
    /// Malicious clients active from the start instead of one per interval.
    bool malicious_full_from_start = false;
    bool malicious_present = true;
    std::size_t payload_bytes = 1000;
    /// Relative deadline the load clients stamp on each message.
    double deadline_ms = 10000.0;
};

/// Everything a scenario run needs besides the variant, loss level and seed.
struct ScenarioParams {
    unsigned payments = 1;
    payment::Amount payment_total = 0;
    payment::Amount packet_amount = 0;
    unsigned window = 1;
    std::uint32_t connector_fee_ppm = 0;
    unsigned ping_count = 100;
    double ping_interval_ms = 1000.0;
    std::vector<NodeId> meltdown_nodes;
    double meltdown_period_ms = 40000.0;
    unsigned meltdown_cycles = 5;
    /// Latency of the direct baseline channel.
    double baseline_latency_ms = 0.0;
    /// Overlay link whose loss is varied (empty pair for none).
    std::optional<std::pair<NodeId, NodeId>> loss_link;
    FairnessParams fairness;
    double horizon_ms = 4.0e6;
    netsim::SimConfig sim;
};

/// Parameter defaults for each scenario.
ScenarioParams default_params(ScenarioName s);

struct MetricRow {
    std::string scenario;
    std::string variant;
    double loss_pct = 0.0;
    unsigned rep = 0;
    std::uint64_t seed = 0;
    std::string metric;
    std::uint64_t index = 0;
    double value = 0.0;

    bool operator==(const MetricRow&) const = default;
};

struct RunSpec {
    ScenarioName scenario = ScenarioName::ChainPingLoss;
    Variant variant;
    double loss_pct = 0.0;
    unsigned rep = 0;
    std::uint64_t seed = 0;
    ScenarioParams params;
    bool record_trace = false;
};

struct RunOutput {
    std::vector<MetricRow> rows;
    bool failed = false;
    std::string error;
    bool settle_ok = true;
    std::string settle_report;
    netsim::Trace trace;
    payment::TxLog txlog;
    /// Payment results of the sender, in order (empty for ping/fairness).
    std::vector<payment::PaymentResult> payments;
};

/// One simulation. Exceptions from the simulator are caught and reported
/// through `failed`/`error`.
RunOutput run_once(const RunSpec& spec);

struct ScenarioConfig {
    ScenarioName name = ScenarioName::ChainPingLoss;
    std::vector<double> loss_pct = {0.0};
    std::vector<Variant> variants;
    std::uint64_t seed = 1;
    unsigned reps = 5;
    ScenarioParams params;
    bool record_trace = false;
};

/// Baseline (and the pinned baseline for chain-meltdown) plus the overlay
/// variant for (kind, k). Fairness has no baseline.
std::vector<Variant> standard_variants(ScenarioName s, overlay::ServiceKind kind, std::vector<unsigned> ks,
                                       bool with_baseline = true);

struct RunInfo {
    std::string variant;
    double loss_pct;
    unsigned rep;
    std::uint64_t seed;
    bool failed;
    std::string error;
    bool settle_ok;
    std::string settle_report;
    std::uint64_t events;
};

struct MetricReport {
    std::string scenario;
    std::vector<MetricRow> rows;
    std::vector<RunInfo> runs;

    bool all_ok() const;
};

/// Seed of repetition `rep` derived from the scenario seed.
std::uint64_t rep_seed(std::uint64_t seed, unsigned rep);

MetricReport run_scenario(const ScenarioConfig& config);

/// Fairness experiment on the canonical fairness topology.
MetricReport fairness_scenario(const FairnessParams& params, std::uint64_t seed = 1, unsigned reps = 1);

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow {
    std::string scenario;
    std::string variant;
    double loss_pct = 0.0;
    std::string metric;
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;
    /// (baseline mean - mean) / baseline mean x 100; unset without a baseline.
    std::optional<double> gain_pct;
};

/// Groups by (variant, loss, metric). Throws std::invalid_argument on mixed
/// scenarios or empty input.
std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows);

std::string format_double(double v);
void write_raw_csv(const std::filesystem::path& file, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_raw_csv(const std::filesystem::path& file);
void write_summary_csv(const std::filesystem::path& file, const std::vector<SummaryRow>& rows);
std::string summary_table(const std::vector<SummaryRow>& rows);

/// raw_<variant>.csv per variant, summary.csv, summary.txt.
void write_report(const std::filesystem::path& dir, const MetricReport& report);
/// Re-reads every raw_*.csv in `dir` and rewrites summary.csv / summary.txt.
std::vector<SummaryRow> summarize_dir(const std::filesystem::path& dir);

}  // namespace spon::experiments
