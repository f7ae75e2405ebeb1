#include "mdc/config.hpp"

#include <fstream>
#include <stdexcept>

namespace mdc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    out[key] = val;
  }
  return out;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in);
}

std::string cfg_str(const ConfigMap& c, const std::string& key,
                    const std::string& fallback) {
  const auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

int cfg_int(const ConfigMap& c, const std::string& key, int fallback) {
  const auto it = c.find(key);
  return it == c.end() ? fallback : std::stoi(it->second);
}

std::uint64_t cfg_u64(const ConfigMap& c, const std::string& key,
                      std::uint64_t fallback) {
  const auto it = c.find(key);
  return it == c.end() ? fallback : std::stoull(it->second);
}

double cfg_double(const ConfigMap& c, const std::string& key,
                  double fallback) {
  const auto it = c.find(key);
  return it == c.end() ? fallback : std::stod(it->second);
}

bool cfg_bool(const ConfigMap& c, const std::string& key, bool fallback) {
  const auto it = c.find(key);
  if (it == c.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

}  // namespace mdc
