// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "pcie_sim/harness.hpp"
#include "pcie_sim/trace.hpp"

using namespace pcie_sim;

namespace {

CampaignConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string trace_text(const Simulator& sim) {
  std::ostringstream os;
  emit_trace(sim.trace(), os);
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PCIE_SIM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string temp_path(const std::string& name) { return std::string(TEST_TMP_DIR) + "/" + name; }

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("trace line format") {
    TraceRecord idle;
    idle.cycle = 5;
    idle.ltssm = Ltssm::L0;
    CHECK(format_trace_line(idle) == "cycle=5 tx=- rx=- err=0 kind=- pr=0 ltssm=L0");

    TraceRecord busy;
    busy.cycle = 12;
    busy.tx_data = Bytes{0x00, 0x0A, 0xFF};
    busy.err_kinds = {ErrorKind::BadTlp, ErrorKind::RxError};
    busy.pr_recovery = true;
    busy.ltssm = Ltssm::RecoveryRetrain;
    const std::string line = format_trace_line(busy);
    CHECK(line == "cycle=12 tx=000aff rx=- err=1 kind=BadTlp,RxError pr=1 ltssm=RecoveryRetrain");
    const auto parsed = parse_trace_line(line);
    REQUIRE(parsed);
    CHECK(parsed->cycle == 12);
    CHECK(parsed->kinds == std::vector<std::string>{"BadTlp", "RxError"});
    CHECK_FALSE(parse_trace_line("cycle=1 tx=-"));
  }

  TEST_CASE("config parsing") {
    const CampaignConfig c = parse(
        "# comment\n"
        "seed = 42 ; trailing\n"
        "mode=baseline\n"
        "horizon_cycles=5000\n"
        "count_per_kind=3\n"
        "kinds=DropAck, FlipLcrcBit\n"
        "report_path=/tmp/x.json\n");
    CHECK(c.seed == 42);
    CHECK(c.mode == RecoveryMode::Baseline);
    CHECK(c.horizon_cycles == 5000);
    CHECK(c.count_per_kind == 3);
    CHECK(c.kinds == std::vector<FaultKind>{FaultKind::DropAck, FaultKind::FlipLcrcBit});
    CHECK(c.report_path == "/tmp/x.json");
    CHECK_FALSE(c.trace_path);
    CHECK(campaign_faults(c).size() == 6);

    CHECK_THROWS_AS(parse("colour=blue\n"), ConfigError);
    CHECK_THROWS_AS(parse("mode=fast\n"), ConfigError);
    CHECK_THROWS_AS(parse("seed=-1\n"), ConfigError);
    CHECK_THROWS_AS(parse("seed\n"), ConfigError);
    CHECK_THROWS_AS(parse("horizon_cycles=0\n"), ConfigError);
    CHECK_THROWS_AS(parse("kinds=DropAck,Nope\n"), ConfigError);
    CHECK_THROWS_AS(campaign_faults(parse("horizon_cycles=100\ncount_per_kind=100\n")), ConfigError);
  }

  TEST_CASE("fault-free campaign") {
    CampaignConfig c;
    c.horizon_cycles = 1000;
    const CampaignRun run = execute_campaign(c);
    CHECK(run.report.passed());
    CHECK(run.report.corrupted_bytes_delivered == 0);
    for (const KindCounts& k : run.report.per_kind) {
      CHECK(k.injected == 0);
      CHECK(k.detected == 0);
    }
    CHECK(run.sim->events().empty());
    CHECK(run.report.transactions > 0);
    // One record per cycle, from zero.
    for (std::size_t i = 0; i < run.sim->trace().size(); ++i) REQUIRE(run.sim->trace()[i].cycle == i);
  }

  TEST_CASE("ten faults per kind") {
    CampaignConfig c;
    c.seed = 17;
    c.count_per_kind = 10;
    c.horizon_cycles = 30'000;
    const CampaignRun run = execute_campaign(c);
    std::uint64_t detected = 0;
    std::uint64_t classified = 0;
    for (const KindCounts& k : run.report.per_kind) {
      CHECK(k.injected == 10);
      detected += k.detected;
      classified += k.classified_correctly;
    }
    CHECK(detected == 150);
    CHECK(classified == 150);
    CHECK(run.report.corrupted_bytes_delivered == 0);
    CHECK(run.report.passed());

    // Every err=1 kind in the trace is an event the report accounted for.
    std::map<std::string, std::uint64_t> trace_counts;
    for (const TraceRecord& r : run.sim->trace())
      for (ErrorKind k : r.err_kinds) ++trace_counts[to_string(k)];
    std::map<std::string, std::uint64_t> event_counts;
    for (const ErrorEvent& e : run.sim->events()) ++event_counts[to_string(e.kind)];
    CHECK(trace_counts == event_counts);
    // A BadTlp detection cycle.
    bool saw_bad_tlp = false;
    for (const TraceRecord& r : run.sim->trace())
      if (format_trace_line(r).find("err=1 kind=BadTlp") != std::string::npos) saw_bad_tlp = true;
    CHECK(saw_bad_tlp);
  }

  TEST_CASE("recovery cycles show pr=1") {
    CampaignConfig c;
    c.horizon_cycles = 3001;
    c.faults = {FaultSpec{0, 3000, FaultKind::FlipEcrcBit, 9, 9}};
    const CampaignRun run = execute_campaign(c);
    REQUIRE(run.sim->recoveries().size() == 1);
    const std::uint64_t at = run.sim->recoveries()[0].corrected_cycle;
    CHECK(format_trace_line(run.sim->trace().at(at)).find(" pr=1 ") != std::string::npos);
  }

  TEST_CASE("identical configs give identical outputs") {
    CampaignConfig c;
    c.seed = 4;
    c.count_per_kind = 3;
    c.horizon_cycles = 8000;
    const CampaignRun a = execute_campaign(c);
    const CampaignRun b = execute_campaign(c);
    CHECK(a.report.to_json().dump() == b.report.to_json().dump());
    CHECK(trace_text(*a.sim) == trace_text(*b.sim));
  }

  TEST_CASE("command line exit codes") {
    CHECK(run_cli("classify --kind BadTlp") == 0);
    CHECK(run_cli("classify --kind Bogus") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("run --config /nonexistent/config.ini") == 2);

    const std::string cfg = temp_path("harness_cli.ini");
    const std::string report = temp_path("harness_cli.json");
    const std::string trace = temp_path("harness_cli.trace");
    {
      std::ofstream out(cfg);
      out << "seed=3\nhorizon_cycles=2000\ncount_per_kind=1\nreport_path=" << report << "\ntrace_path=" << trace
          << "\n";
    }
    CHECK(run_cli("run --config " + cfg) == 0);
    std::ifstream rep(report);
    CHECK(rep.good());
    CHECK(run_cli("trace --input " + trace + " --from 10 --to 20") == 0);
    CHECK(run_cli("inject --kind FlipLcrcBit --cycle 500 --seed 2") == 0);
    CHECK(run_cli("inject --kind NotAFault --cycle 500 --seed 2") == 2);
  }
}
