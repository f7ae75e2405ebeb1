#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>

namespace mdc {

// Flat `key = value` configuration text with '#' comments.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(std::istream& in);
ConfigMap read_config_file(const std::string& path);

std::string cfg_str(const ConfigMap& c, const std::string& key,
                    const std::string& fallback);
int cfg_int(const ConfigMap& c, const std::string& key, int fallback);
std::uint64_t cfg_u64(const ConfigMap& c, const std::string& key,
                      std::uint64_t fallback);
double cfg_double(const ConfigMap& c, const std::string& key, double fallback);
bool cfg_bool(const ConfigMap& c, const std::string& key, bool fallback);

}  // namespace mdc
