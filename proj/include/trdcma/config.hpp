// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_CONFIG_HPP
#define TRDCMA_CONFIG_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace trdcma {

// Plain-text key/value configuration tree. INI-style [section] headers
// prefix the keys that follow ("[link]" + "num_users = 5" stores
// "link.num_users"). '#' starts a comment, lists are comma-separated.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key,
                           std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fb) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fb) const;

  // keys present in the file but not in the known set (config typo guard)
  std::vector<std::string> unknown_keys(
      const std::set<std::string>& known) const;

  // sorted key=value serialization; input of the config hash
  std::string canonical() const;
  std::uint64_t hash() const;  // FNV-1a 64 of canonical()

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace trdcma

#endif  // TRDCMA_CONFIG_HPP
