#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "spon/netsim.hpp"
#include "spon/scenario.hpp"

using namespace spon::experiments;
namespace fs = std::filesystem;

namespace {

MetricRow row(std::string variant, double loss, std::string metric, double value, unsigned rep = 0) {
    MetricRow r;
    r.scenario = "chain-ping-loss";
    r.variant = std::move(variant);
    r.loss_pct = loss;
    r.rep = rep;
    r.seed = 1;
    r.metric = std::move(metric);
    r.value = value;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("spon_unit_" + name);
    fs::remove_all(p);
    return p;
}

ScenarioConfig small_ping(std::vector<double> loss, unsigned reps) {
    ScenarioConfig c;
    c.name = ScenarioName::ChainPingLoss;
    c.loss_pct = std::move(loss);
    c.variants = standard_variants(c.name, spon::overlay::ServiceKind::Priority, {0});
    c.seed = 5;
    c.reps = reps;
    c.params = default_params(c.name);
    c.params.ping_count = 30;
    c.params.horizon_ms = 30 * 1000.0 + 60000.0;
    return c;
}

std::uint64_t ref_splitmix(std::uint64_t x) {
    std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

TEST_SUITE("experiments") {
    TEST_CASE("single row summary") {
        auto s = summarize({row("pri-fld", 0, "rtt_ms", 33.0)});
        REQUIRE(s.size() == 1);
        CHECK(s[0].n == 1);
        CHECK(s[0].mean == 33.0);
        CHECK(s[0].stddev == 0.0);
        CHECK_FALSE(s[0].gain_pct);
        auto table = summary_table(s);
        CHECK(std::count(table.begin(), table.end(), '\n') == 2);
        CHECK(table.find("N/A") != std::string::npos);
    }

    TEST_CASE("gain against baseline") {
        auto s = summarize({row("pri-fld", 5, "rtt_ms", 30.0), row("baseline", 5, "rtt_ms", 40.0, 0),
                            row("baseline", 5, "rtt_ms", 60.0, 1), row("pri-fld", 5, "rtt_ms", 40.0, 1)});
        REQUIRE(s.size() == 2);
        CHECK(s[0].variant == "baseline");
        CHECK(s[0].mean == 50.0);
        CHECK(s[0].stddev == doctest::Approx(std::sqrt(200.0)));
        REQUIRE(s[1].gain_pct);
        CHECK(*s[1].gain_pct == doctest::Approx(30.0));
    }

    TEST_CASE("rejects mixed scenarios and empty input") {
        auto a = row("baseline", 0, "rtt_ms", 1.0);
        auto b = a;
        b.scenario = "bgp";
        CHECK_THROWS_AS(summarize({a, b}), std::invalid_argument);
        CHECK_THROWS_AS(summarize({}), std::invalid_argument);
    }

    TEST_CASE("summary csv marks missing gain") {
        auto dir = scratch("na");
        fs::create_directories(dir);
        write_summary_csv(dir / "s.csv", summarize({row("pri-k1", 0, "rtt_ms", 1.5)}));
        auto text = slurp(dir / "s.csv");
        CHECK(text.rfind("scenario,variant,loss_pct,metric,n,mean,stddev,gain_pct\n", 0) == 0);
        CHECK(text.find(",N/A\n") != std::string::npos);
        fs::remove_all(dir);
    }

    TEST_CASE("raw csv round trip") {
        std::vector<MetricRow> rows{row("baseline", 2, "rtt_ms", 0.1 + 0.2), row("pri-fld", 10, "rtt_ms", 1.0 / 3.0, 4)};
        rows[1].index = 17;
        rows[1].seed = 0xfedcba9876543210ULL;
        auto dir = scratch("csv");
        fs::create_directories(dir);
        write_raw_csv(dir / "raw.csv", rows);
        CHECK(read_raw_csv(dir / "raw.csv") == rows);
        std::ofstream(dir / "bad.csv") << "scenario,variant\n";
        CHECK_THROWS(read_raw_csv(dir / "bad.csv"));
        fs::remove_all(dir);
    }

    TEST_CASE("repetition seeds") {
        CHECK(spon::netsim::splitmix64(0) == 0xe220a8397b1dcdafULL);
        for (unsigned r = 0; r < 5; ++r) CHECK(rep_seed(42, r) == ref_splitmix(42 + r));
    }

    TEST_CASE("scenario names") {
        for (auto s : all_scenarios()) CHECK(parse_scenario(to_string(s)) == s);
        CHECK_THROWS_AS(parse_scenario("nope"), std::invalid_argument);
        auto v = standard_variants(ScenarioName::ChainMeltdown, spon::overlay::ServiceKind::Priority, {2, 0});
        REQUIRE(v.size() == 4);
        CHECK(v[0].name == "baseline");
        CHECK(v[1].pinned_path);
        CHECK(standard_variants(ScenarioName::Fairness, spon::overlay::ServiceKind::Priority, {1}).size() == 1);
    }

    TEST_CASE("invalid configurations") {
        auto c = small_ping({0}, 0);
        CHECK_THROWS_AS(run_scenario(c), std::invalid_argument);
        c.reps = 1;
        c.loss_pct = {101};
        CHECK_THROWS_AS(run_scenario(c), std::invalid_argument);
        c.loss_pct = {0};
        c.variants.clear();
        CHECK_THROWS_AS(run_scenario(c), std::invalid_argument);
    }

    TEST_CASE("same seed gives identical files") {
        auto a = scratch("det_a");
        auto b = scratch("det_b");
        write_report(a, run_scenario(small_ping({5}, 2)));
        write_report(b, run_scenario(small_ping({5}, 2)));
        for (const char* f : {"raw_baseline.csv", "raw_pri-fld.csv", "summary.csv", "summary.txt"}) {
            CAPTURE(f);
            REQUIRE(fs::exists(a / f));
            CHECK(slurp(a / f) == slurp(b / f));
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }

    TEST_CASE("summary is recomputable from raw rows") {
        auto dir = scratch("self");
        auto report = run_scenario(small_ping({0, 2, 5, 10}, 2));
        CHECK(report.all_ok());
        write_report(dir, report);
        auto before = slurp(dir / "summary.csv");
        auto again = summarize_dir(dir);
        CHECK(slurp(dir / "summary.csv") == before);

        std::map<std::tuple<std::string, double, std::string>, std::pair<double, std::size_t>> acc;
        for (const auto& r : report.rows) {
            auto& [sum, n] = acc[{r.variant, r.loss_pct, r.metric}];
            sum += r.value;
            ++n;
        }
        REQUIRE(again.size() == acc.size());
        for (const auto& s : again) {
            auto [sum, n] = acc.at({s.variant, s.loss_pct, s.metric});
            CHECK(s.n == n);
            CHECK(s.mean == doctest::Approx(sum / static_cast<double>(n)));
        }
        std::size_t overlay_rtt = 0;
        for (const auto& s : again)
            if (s.metric == "rtt_ms" && s.variant == "pri-fld") {
                ++overlay_rtt;
                CHECK(s.gain_pct.has_value());
            }
        CHECK(overlay_rtt == 4);
        fs::remove_all(dir);
    }
}
