#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace lrpca::util {

/// Ordered key -> value map read from `key = value` lines. Blank lines and
/// lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError on malformed lines and duplicate keys.
KeyValues parse_key_values(std::string_view text);

/// Typed accessors; each throws ConfigError naming the key on a bad value.
std::size_t to_size(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace lrpca::util
