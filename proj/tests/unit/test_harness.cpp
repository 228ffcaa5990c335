#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "coolgp/config.hpp"
#include "coolgp/errors.hpp"
#include "coolgp/harness.hpp"

using namespace coolgp;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "coolgp_harness_test";
const std::string kTiny = " --dim 2 --batches 6 --block-size 5 --n-test 20 --vocab-size 8 --bank-size 4";

struct Run {
  int code;
  std::string output;
};

Run cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path log = kRoot / "cli.log";
  const std::string cmd = std::string(COOLGP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string dir(const std::string& name) { return (kRoot / name).string(); }

// Generated once and shared by the simulation tests.
const std::string& dataset() {
  static const std::string path = [] {
    fs::remove_all(kRoot);
    const Run r = cli("gen --seed 3 --out " + dir("data") + kTiny);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return dir("data");
  }();
  return path;
}

}  // namespace

TEST_CASE("settings resolution") {
  const auto d = harness::resolve_settings({});
  CHECK(d.at("fusion_period") == "10");
  CHECK(d.at("vocab_size") == "50");
  CHECK(d.at("bank_size") == "10");
  CHECK_THROWS_AS(harness::resolve_settings({{"bogus", "1"}}), ConfigError);

  fs::create_directories(kRoot);
  const fs::path cfg = kRoot / "layer.cfg";
  write_key_values({{"bank_size", "3"}, {"vocab_size", "12"}, {"seed", "5"}}, cfg);
  const auto r = harness::resolve_settings({{"config", cfg.string()}, {"bank_size", "4"}});
  CHECK(r.at("bank_size") == "4");
  CHECK(r.at("vocab_size") == "12");
  CHECK(r.at("seed") == "5");
  CHECK(r.at("agents") == "2");

  write_key_values({{"nonsense", "1"}}, cfg);
  CHECK_THROWS_AS(harness::resolve_settings({{"config", cfg.string()}}), ConfigError);
}

TEST_CASE("pooling keeps every block once with its domain") {
  std::vector<Block> s1(4, Block{Matrix::Zero(1, 1), Vector::Zero(1)});
  std::vector<Block> s2(3, Block{Matrix::Ones(1, 1), Vector::Ones(1)});
  const auto pooled = harness::pool_streams(s1, s2, 7);
  REQUIRE(pooled.blocks.size() == 7);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(pooled.blocks[i].targets(0) == static_cast<double>(pooled.domain[i]));
    ones += pooled.domain[i];
  }
  CHECK(ones == 3);
  CHECK(harness::pool_streams(s1, s2, 7).domain == pooled.domain);
}

TEST_CASE("gen writes datasets and a manifest deterministically") {
  const std::string data = dataset();
  for (const char* f : {"stream1.csv", "stream2.csv", "test.csv", "gen.manifest"}) CHECK(fs::exists(fs::path(data) / f));
  CHECK(first_line(fs::path(data) / "stream1.csv") == "block_id,x1,x2,y");

  REQUIRE(cli("gen --seed 3 --out " + dir("data_again") + kTiny).code == 0);
  REQUIRE(cli("gen --seed 4 --out " + dir("data_other") + kTiny).code == 0);
  for (const char* f : {"stream1.csv", "stream2.csv", "test.csv"}) {
    CHECK(slurp(fs::path(data) / f) == slurp(kRoot / "data_again" / f));
    CHECK(slurp(fs::path(data) / f) != slurp(kRoot / "data_other" / f));
  }
  const auto manifest = read_key_values(fs::path(data) / "gen.manifest");
  CHECK(manifest.at("command") == "gen");
  CHECK(manifest.at("seed") == "3");
  CHECK(manifest.at("config.blocks_per_stream") == "6");
  CHECK(manifest.contains("synthetic.projection1"));
}

TEST_CASE("two-agent run") {
  const std::string data = dataset();
  const std::string args = "two-agent --seed 1 --fusion-period 3 --data " + data + kTiny;
  REQUIRE(cli(args + " --out " + dir("two_a")).code == 0);
  REQUIRE(cli(args + " --out " + dir("two_b")).code == 0);
  const fs::path metrics = kRoot / "two_a" / "metrics.csv";
  CHECK(first_line(metrics) == "batch_index,agent_id,rmse_pre,rmse_post,ess,wall_ms");
  CHECK(slurp(metrics) == slurp(kRoot / "two_b" / "metrics.csv"));
  std::ifstream in(metrics);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 1 + 2 * 4);  // batches 3, 6, 9, 12

  const auto m = read_key_values(kRoot / "two_a" / "two-agent.manifest");
  CHECK(m.at("config.vocab_size") == "8");
  CHECK(m.at("config.fusion_period") == "3");

  REQUIRE(cli(args + " --set dispatch=by-domain --out " + dir("two_c")).code == 0);
  CHECK(cli(args + " --set dispatch=sideways --out " + dir("two_d")).code == 2);
}

TEST_CASE("network run with full-scale flags echoed") {
  const std::string data = dataset();
  const Run r = cli("network --seed 2 --agents 20 --topology random-tree --loss-rate 0.2 --fusion-period 10"
                    " --vocab-size 50 --bank-size 10 --threads 1 --set message_trace=true --data " +
                    data + " --out " + dir("net"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto m = read_key_values(kRoot / "net" / "network.manifest");
  CHECK(m.at("config.agents") == "20");
  CHECK(m.at("config.topology") == "random-tree");
  CHECK(m.at("config.loss_rate") == "0.2");
  CHECK(m.at("config.fusion_period") == "10");
  CHECK(m.at("config.vocab_size") == "50");
  CHECK(m.at("config.bank_size") == "10");
  CHECK(m.contains("resolved.tree_diameter"));
  CHECK(fs::file_size(kRoot / "net" / "messages.bin") > 0);
  CHECK(first_line(kRoot / "net" / "deliveries.csv") == "sweep,batch_index,round,from,to,delivered");

  const Run custom = cli("network --agents 4 --topology custom --set edges=0-1,1-2,2-0,2-3 --data " + data +
                         " --out " + dir("net_custom") + kTiny);
  CHECK_MESSAGE(custom.code == 0, custom.output);
}

TEST_CASE("loss sweep output is independent of the thread count") {
  const std::string data = dataset();
  const std::string args = "loss-sweep --agents 4 --set seeds=2 --set loss_rates=0,0.5 --data " + data + kTiny;
  REQUIRE(cli(args + " --threads 1 --out " + dir("sweep1")).code == 0);
  REQUIRE(cli(args + " --threads 2 --out " + dir("sweep2")).code == 0);
  const fs::path csv = kRoot / "sweep1" / "loss_sweep.csv";
  CHECK(first_line(csv) == "loss_rate,system,seed,rmse_post,completeness");
  CHECK(slurp(csv) == slurp(kRoot / "sweep2" / "loss_sweep.csv"));
  std::ifstream in(csv);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 1 + 2 * 2 * 2);
}

TEST_CASE("verify subcommand") {
  const Run r = cli("verify consensus --out " + dir("verify"));
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(kRoot / "verify" / "verify_consensus.txt"));
  CHECK(fs::exists(kRoot / "verify" / "verify-consensus.manifest"));
  CHECK(cli("verify no-such-suite --out " + dir("verify")).code == 2);
}

TEST_CASE("errors and exit codes") {
  const Run missing = cli("network --data " + dir("nowhere") + " --out " + dir("err"));
  CHECK(missing.code == 2);
  CHECK(missing.output.find("coolgp gen") != std::string::npos);
  CHECK(cli("two-agent --set colour=blue --out " + dir("err")).code == 2);
  CHECK(cli("network --loss-rate 1.5 --data " + dataset() + " --out " + dir("err")).code == 2);
  CHECK(cli("gen --seed notanumber --out " + dir("err")).code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("").code == 2);
  CHECK(cli("--help").code == 0);

  fs::create_directories(kRoot / "bad");
  std::ofstream(kRoot / "bad" / "stream1.csv") << "block_id,x1,x2,y\n0,1,2\n";
  std::ofstream(kRoot / "bad" / "stream2.csv") << "block_id,x1,x2,y\n";
  std::ofstream(kRoot / "bad" / "test.csv") << "block_id,x1,x2,y\n0,0,0,0\n";
  const Run bad = cli("network --data " + dir("bad") + " --out " + dir("err"));
  CHECK(bad.code == 2);
  CHECK(bad.output.find("line 2") != std::string::npos);
}
