#include "coolgp/config.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "coolgp/errors.hpp"

namespace coolgp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const std::string& lookup(const KeyValues& values, const std::string& key) {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing setting '" + key + "'");
  return it->second;
}

template <typename T>
T parse_as(const std::string& text, const std::string& key, const char* kind) {
  T value{};
  const std::string_view s = trim(text);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("setting '" + key + "' = '" + text + "' is not a valid " + kind);
  return value;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(source + " line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source + " line " + std::to_string(line_no) + ": empty key");
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

void write_key_values(const KeyValues& values, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_key_values(values);
}

KeyValues layer(KeyValues base, const KeyValues& over) {
  for (const auto& [k, v] : over) base[k] = v;
  return base;
}

std::string get_string(const KeyValues& values, const std::string& key) { return lookup(values, key); }

double get_double(const KeyValues& values, const std::string& key) {
  return parse_as<double>(lookup(values, key), key, "number");
}

std::int64_t get_int(const KeyValues& values, const std::string& key) {
  return parse_as<std::int64_t>(lookup(values, key), key, "integer");
}

std::size_t get_size(const KeyValues& values, const std::string& key) {
  return parse_as<std::size_t>(lookup(values, key), key, "non-negative integer");
}

std::uint64_t get_u64(const KeyValues& values, const std::string& key) {
  return parse_as<std::uint64_t>(lookup(values, key), key, "non-negative integer");
}

bool get_bool(const KeyValues& values, const std::string& key) {
  const std::string v(trim(lookup(values, key)));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("setting '" + key + "' = '" + v + "' is not a boolean");
}

std::vector<double> get_double_list(const KeyValues& values, const std::string& key) {
  const std::string& text = lookup(values, key);
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(parse_as<double>(item, key, "number list"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

KeyValues RunManifest::to_key_values() const {
  KeyValues out;
  out["command"] = command;
  out["seed"] = std::to_string(seed);
  out["version"] = std::string(kVersion);
  out["started"] = started;
  out["finished"] = finished;
  for (std::size_t i = 0; i < outputs.size(); ++i) out["output." + std::to_string(i)] = outputs[i].string();
  for (const auto& [k, v] : config) out["config." + k] = v;
  for (const auto& [k, v] : extra) out[k] = v;
  return out;
}

void RunManifest::write(const std::filesystem::path& path) const { write_key_values(to_key_values(), path); }

KeyValues config_from_manifest(const KeyValues& manifest) {
  static constexpr std::string_view prefix = "config.";
  KeyValues out;
  for (const auto& [k, v] : manifest)
    if (k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace coolgp
