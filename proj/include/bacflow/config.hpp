#pragma once

// Flat `key = value` configuration, one setting per line, '#' starts a
// comment. `capture` and `connection_threshold` may repeat. Command-line
// flags are applied on top with set() and always win.

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bacflow/appdata_scoring.hpp"
#include "bacflow/cov.hpp"
#include "bacflow/errors.hpp"
#include "bacflow/flow_map.hpp"

namespace bacflow {

struct AppConfig {
  std::vector<std::filesystem::path> captures;
  std::filesystem::path cov_dir;
  std::filesystem::path sensor_meta;
  std::filesystem::path baseline = "baseline.json";
  std::filesystem::path flow_csv = "flows.csv";
  std::filesystem::path anomaly_log = "anomalies.ndjson";
  std::filesystem::path scores_dir = "scores";
  std::string listen = "127.0.0.1:8080";

  FlowMapConfig flow;
  ScoringConfig scoring;

  // Applies one setting; unknown keys and unparsable values are errors.
  void set(const std::string& key, const std::string& value) {
    auto num = [&]() {
      auto d = detail::parse_double(value);
      if (!d) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
      return *d;
    };
    auto integer = [&]() {
      double d = num();
      if (d < 0 || d != static_cast<double>(static_cast<long long>(d)))
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
      return static_cast<long long>(d);
    };
    if (key == "capture") captures.emplace_back(value);
    else if (key == "cov_dir") cov_dir = value;
    else if (key == "sensor_meta") sensor_meta = value;
    else if (key == "baseline") baseline = value;
    else if (key == "flow_csv") flow_csv = value;
    else if (key == "anomaly_log") anomaly_log = value;
    else if (key == "scores_dir") scores_dir = value;
    else if (key == "listen") listen = value;
    else if (key == "periodic_ratio") flow.classifier.periodic_ratio = num();
    else if (key == "sporadic_low") flow.classifier.sporadic_low = num();
    else if (key == "sporadic_high") flow.classifier.sporadic_high = num();
    else if (key == "min_samples") flow.classifier.min_samples = static_cast<std::size_t>(integer());
    else if (key == "anomaly_threshold") flow.anomaly.default_threshold = num();
    else if (key == "length_sd_mult") flow.anomaly.length_sd_mult = num();
    else if (key == "sigma_floor_fraction") flow.anomaly.sigma_floor_fraction = num();
    else if (key == "reorder_window_ms") flow.reorder_window = std::chrono::milliseconds{integer()};
    else if (key == "connection_threshold") add_connection_threshold(value);
    else if (key == "timezone") {
      try {
        scoring.tz = UtcOffset::parse(value);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "history_days") scoring.history_days = static_cast<int>(integer());
    else if (key == "time_window_minutes") scoring.window = std::chrono::minutes{integer()};
    else if (key == "float_sd_floor") scoring.float_sd_floor = num();
    else throw ConfigError("unknown setting '" + key + "'");
  }

  void validate() const {
    const auto& c = flow.classifier;
    if (!(c.periodic_ratio > 0 && c.sporadic_low > 0 && c.sporadic_high > 0))
      throw ConfigError("classification ratios must be positive");
    if (!(c.sporadic_low < c.sporadic_high)) throw ConfigError("sporadic_low must be below sporadic_high");
    auto in_unit = [](double q) { return q > 0.0 && q < 1.0; };
    if (!in_unit(flow.anomaly.default_threshold)) throw ConfigError("anomaly_threshold must lie in (0, 1)");
    for (const auto& [k, q] : flow.anomaly.connection_thresholds)
      if (!in_unit(q)) throw ConfigError("connection_threshold must lie in (0, 1)");
    if (!(flow.anomaly.length_sd_mult > 0)) throw ConfigError("length_sd_mult must be positive");
    if (!(flow.anomaly.sigma_floor_fraction > 0)) throw ConfigError("sigma_floor_fraction must be positive");
    if (scoring.history_days < 1) throw ConfigError("history_days must be at least 1");
    if (!(scoring.float_sd_floor > 0)) throw ConfigError("float_sd_floor must be positive");
  }

  static AppConfig parse(std::istream& in) {
    AppConfig cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      auto hash = line.find('#');
      auto text = detail::trim(std::string_view(line).substr(0, hash));
      if (text.empty()) continue;
      auto eq = text.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
      cfg.set(std::string(detail::trim(text.substr(0, eq))), std::string(detail::trim(text.substr(eq + 1))));
    }
    return cfg;
  }

  static AppConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse(in);
  }

 private:
  // `<src> <dst> <q>` with addresses in canonical form.
  void add_connection_threshold(const std::string& value) {
    std::istringstream ss(value);
    std::string src, dst, q;
    if (!(ss >> src >> dst >> q)) throw ConfigError("connection_threshold expects '<src> <dst> <q>'");
    auto s = BacnetAddress::parse(src), d = BacnetAddress::parse(dst);
    auto v = detail::parse_double(q);
    if (!s || !d || !v) throw ConfigError("bad connection_threshold '" + value + "'");
    flow.anomaly.connection_thresholds[{*s, *d}] = *v;
  }
};

}  // namespace bacflow
