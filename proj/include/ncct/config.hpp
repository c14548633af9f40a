#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncct {

// `key = value` configuration lines, also the format of the run
// manifests the CLI writes (so a manifest can be fed straight back in
// as a config file).

struct ConfigEntry {
    std::string key;
    std::string value;
    int line = 0; // 1-based, for error messages
};

// '#' starts a comment, blank lines are skipped, whitespace around key
// and value is trimmed. A non-blank line without '=' or with an empty
// key is a FormatError naming the line.
std::vector<ConfigEntry> parse_config_text(const std::string& text);
std::vector<ConfigEntry> parse_config_file(const std::string& path);

std::string format_config(const std::vector<ConfigEntry>& entries);

// Strict value parsers; `key` only flavors the error message.
std::int64_t parse_int_value(const std::string& key, const std::string& value);
std::uint64_t parse_u64_value(const std::string& key, const std::string& value);
double parse_double_value(const std::string& key, const std::string& value);
bool parse_bool_value(const std::string& key, const std::string& value);

} // namespace ncct
