// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "trdcma/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trdcma {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: cannot parse value '" + value +
                              "' for key '" + key + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0') bad_value(key, value);
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) {
    throw std::invalid_argument("config: cannot open " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config: malformed section at line " +
                                    std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: empty key at line " +
                                  std::to_string(lineno));
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.entries_.count(full) != 0) {
      throw std::invalid_argument("config: duplicate key '" + full + "'");
    }
    cfg.entries_[full] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

void Config::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_double(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  char* end = nullptr;
  const long v = std::strtol(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') bad_value(key, it->second);
  return static_cast<int>(v);
}

std::uint64_t Config::get_uint64(const std::string& key,
                                 std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') bad_value(key, it->second);
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

std::vector<double> Config::get_double_list(
    const std::string& key, const std::vector<double>& fb) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fb;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) {
    out.push_back(parse_double(key, item));
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& fb) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fb;
  std::vector<int> out;
  for (const auto& item : split_list(it->second)) {
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0') bad_value(key, item);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<std::string> Config::unknown_keys(
    const std::set<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (known.count(key) == 0) out.push_back(key);
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace trdcma
