#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "model.hpp"

namespace explq {

/// Flat `key = value` configuration. '#' starts a comment; blank lines are
/// ignored; duplicate keys are an error.
class FlatConfig {
 public:
  static FlatConfig parse(std::string_view text, const std::string& origin = "<config>") {
    FlatConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto eol = text.find('\n', pos);
      std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
      pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) fail(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.emplace(key, value).second) {
        fail(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": duplicate key " + key);
      }
    }
    return cfg;
  }

  static FlatConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Rejects any key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) fail(ErrorKind::config, "unknown config key " + k);
    }
  }

  [[nodiscard]] std::string text_or(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  [[nodiscard]] double number(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "missing config key " + key);
    return to_double(key, it->second);
  }
  [[nodiscard]] double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  [[nodiscard]] std::uint64_t integer(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "missing config key " + key);
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      fail(ErrorKind::config, "config key " + key + " is not a non-negative integer: " + s);
    }
    return v;
  }
  [[nodiscard]] std::uint64_t integer_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }
  [[nodiscard]] std::vector<double> number_list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "missing config key " + key);
    std::vector<double> out;
    std::string_view rest = it->second;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      if (item.empty()) fail(ErrorKind::config, "config key " + key + " has an empty list item");
      out.push_back(to_double(key, std::string(item)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (out.empty()) fail(ErrorKind::config, "config key " + key + " is an empty list");
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  }
  static double to_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) fail(ErrorKind::config, "config key " + key + " is not a number: " + s);
    return v;
  }

  std::map<std::string, std::string> values_;
};

inline const std::vector<std::string>& model_config_keys() {
  static const std::vector<std::string> keys = {
      "dynamics.a", "dynamics.b", "dynamics.c", "dynamics.d", "reward.m",       "reward.n",
      "reward.r",   "reward.p",   "reward.q",   "discount.rho", "explore.lambda"};
  return keys;
}

/// Builds the model from the eleven `dynamics.*`, `reward.*`, `discount.rho`,
/// `explore.lambda` keys; every one of them is required.
[[nodiscard]] inline LqModel model_from_config(const FlatConfig& cfg) {
  LqModel m;
  m.dynamics = {cfg.number("dynamics.a"), cfg.number("dynamics.b"), cfg.number("dynamics.c"),
                cfg.number("dynamics.d")};
  m.reward = {cfg.number("reward.m"), cfg.number("reward.n"), cfg.number("reward.r"), cfg.number("reward.p"),
              cfg.number("reward.q")};
  m.discount = cfg.number("discount.rho");
  m.temperature = cfg.number("explore.lambda");
  return m;
}

/// Strict model-only ingestion: unknown keys are rejected.
[[nodiscard]] inline LqModel load_model(const std::string& path) {
  const auto cfg = FlatConfig::load(path);
  const auto& keys = model_config_keys();
  cfg.require_known({keys.begin(), keys.end()});
  return model_from_config(cfg);
}

}  // namespace explq
