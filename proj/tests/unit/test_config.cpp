#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "coolgp/config.hpp"
#include "coolgp/errors.hpp"

using namespace coolgp;
namespace fs = std::filesystem;

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\nseed = 7\n\n  out=run/a  \nlist = 0, 0.5\n");
  CHECK(kv.size() == 3);
  CHECK(kv.at("seed") == "7");
  CHECK(kv.at("out") == "run/a");
  CHECK(kv.at("list") == "0, 0.5");

  CHECK(parse_key_values("a = 1\na = 2\n").at("a") == "2");
  CHECK(parse_key_values("empty =\n").at("empty").empty());
  CHECK_THROWS_WITH_AS(parse_key_values("a = 1\nnonsense\n", "cfg"), doctest::Contains("cfg line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse_key_values("= 3\n"), doctest::Contains("line 1"), ParseError);
}

TEST_CASE("formatting round trips") {
  const KeyValues kv = {{"b", "2"}, {"a", "x y"}, {"c", ""}};
  CHECK(format_key_values(kv) == "a = x y\nb = 2\nc = \n");
  CHECK(parse_key_values(format_key_values(kv)) == kv);

  const fs::path p = fs::temp_directory_path() / "coolgp_config_test.cfg";
  write_key_values(kv, p);
  CHECK(read_key_values(p) == kv);
  fs::remove(p);
  CHECK_THROWS_AS(read_key_values(p), ConfigError);
}

TEST_CASE("layering keeps the later value") {
  const KeyValues defaults = {{"a", "1"}, {"b", "2"}, {"c", "3"}};
  const KeyValues file = {{"b", "20"}, {"c", "30"}};
  const KeyValues flags = {{"c", "300"}};
  const auto r = layer(layer(defaults, file), flags);
  CHECK(r.at("a") == "1");
  CHECK(r.at("b") == "20");
  CHECK(r.at("c") == "300");
}

TEST_CASE("typed getters") {
  const KeyValues kv = {{"d", "0.25"}, {"i", "-4"}, {"n", "12"}, {"big", "18446744073709551615"},
                        {"t", "yes"},  {"f", "off"}, {"l", "0,0.2, 0.4"}, {"bad", "1.5x"}, {"neg", "-1"}};
  CHECK(get_double(kv, "d") == 0.25);
  CHECK(get_int(kv, "i") == -4);
  CHECK(get_size(kv, "n") == 12);
  CHECK(get_u64(kv, "big") == 18446744073709551615ull);
  CHECK(get_bool(kv, "t"));
  CHECK_FALSE(get_bool(kv, "f"));
  CHECK(get_double_list(kv, "l") == std::vector<double>{0.0, 0.2, 0.4});
  CHECK_THROWS_AS(get_double(kv, "bad"), ConfigError);
  CHECK_THROWS_AS(get_size(kv, "neg"), ConfigError);
  CHECK_THROWS_AS(get_bool(kv, "d"), ConfigError);
  CHECK_THROWS_WITH_AS(get_string(kv, "missing"), doctest::Contains("missing"), ConfigError);
}

TEST_CASE("run manifests") {
  RunManifest m;
  m.command = "network";
  m.seed = 42;
  m.config = {{"agents", "20"}, {"loss_rate", "0.2"}};
  m.started = "2026-01-01T00:00:00Z";
  m.finished = "2026-01-01T00:00:01Z";
  m.outputs = {"out/metrics.csv"};
  m.extra = {{"resolved.tree_diameter", "5"}};
  const auto kv = m.to_key_values();
  CHECK(kv.at("command") == "network");
  CHECK(kv.at("seed") == "42");
  CHECK(kv.at("version") == std::string(kVersion));
  CHECK(kv.at("output.0") == "out/metrics.csv");
  CHECK(kv.at("config.agents") == "20");
  CHECK(kv.at("resolved.tree_diameter") == "5");
  CHECK(config_from_manifest(kv) == m.config);

  const auto ts = utc_timestamp();
  CHECK(ts.size() == 20);
  CHECK(ts.back() == 'Z');
}
