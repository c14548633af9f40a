#include "ncct/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ncct/error.hpp"

namespace ncct {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace

std::vector<ConfigEntry> parse_config_text(const std::string& text) {
    std::vector<ConfigEntry> entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + stripped + "'");
        ConfigEntry e;
        e.key = trim(stripped.substr(0, eq));
        e.value = trim(stripped.substr(eq + 1));
        e.line = lineno;
        if (e.key.empty())
            throw FormatError("config line " + std::to_string(lineno) + ": empty key");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ConfigEntry> parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string format_config(const std::vector<ConfigEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += e.key;
        out += " = ";
        out += e.value;
        out += '\n';
    }
    return out;
}

std::int64_t parse_int_value(const std::string& key, const std::string& value) {
    std::int64_t result = 0;
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, result);
    if (ec != std::errc() || ptr != last)
        throw InvalidArgument(key + ": expected an integer, got '" + value + "'");
    return result;
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& value) {
    std::uint64_t result = 0;
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, result);
    if (ec != std::errc() || ptr != last)
        throw InvalidArgument(key + ": expected a non-negative integer, got '" + value + "'");
    return result;
}

double parse_double_value(const std::string& key, const std::string& value) {
    if (value.empty())
        throw InvalidArgument(key + ": expected a number, got ''");
    errno = 0;
    char* end = nullptr;
    const double result = std::strtod(value.c_str(), &end);
    if (errno != 0 || end != value.c_str() + value.size())
        throw InvalidArgument(key + ": expected a number, got '" + value + "'");
    return result;
}

bool parse_bool_value(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw InvalidArgument(key + ": expected true/false, got '" + value + "'");
}

} // namespace ncct
