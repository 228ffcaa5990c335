#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace coolgp {

inline constexpr std::string_view kVersion = "1.0.0";

/// Ordered string settings. Text form is one `key = value` per line; blank
/// lines and lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;

/// Throws ParseError naming `source` and the line number on a malformed line.
KeyValues parse_key_values(std::string_view text, const std::string& source = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

/// Entries of `over` replace those of `base`.
KeyValues layer(KeyValues base, const KeyValues& over);

/// Typed lookups; throw ConfigError on a missing key or an unparsable value.
std::string get_string(const KeyValues& values, const std::string& key);
double get_double(const KeyValues& values, const std::string& key);
std::int64_t get_int(const KeyValues& values, const std::string& key);
std::size_t get_size(const KeyValues& values, const std::string& key);
std::uint64_t get_u64(const KeyValues& values, const std::string& key);
bool get_bool(const KeyValues& values, const std::string& key);
/// Comma-separated doubles, e.g. "0,0.2,0.4".
std::vector<double> get_double_list(const KeyValues& values, const std::string& key);

/// Record written next to every command's outputs.
struct RunManifest {
  std::string command;
  KeyValues config;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::filesystem::path> outputs;
  /// Free-form extra entries (e.g. per-system settings).
  KeyValues extra;

  /// Flattened form: config entries are prefixed with "config.".
  KeyValues to_key_values() const;
  void write(const std::filesystem::path& path) const;
};

/// The "config." entries of a manifest with the prefix removed, ready to be
/// fed back as a config file.
KeyValues config_from_manifest(const KeyValues& manifest);

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace coolgp
