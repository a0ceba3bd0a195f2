// bacflow command-line driver: analyze, check, export-gexf, score, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bacflow/bacflow.hpp"
#include "bacflow/service_http.hpp"

namespace {

using bacflow::AppConfig;

struct Overrides {
  std::string config;
  std::vector<std::string> sets;  // key=value, applied after the file
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Configuration file (key = value)");
  cmd->add_option("--set", o.sets, "Override one setting, key=value (repeatable)");
}

AppConfig load(const Overrides& o) {
  AppConfig cfg = o.config.empty() ? AppConfig{} : AppConfig::load(o.config);
  for (const auto& kv : o.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw bacflow::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(std::string(bacflow::detail::trim(kv.substr(0, eq))), std::string(bacflow::detail::trim(kv.substr(eq + 1))));
  }
  cfg.validate();
  return cfg;
}

// Writes to `path`, or stdout for "-" / empty.
template <typename F>
int with_output(const std::string& path, F&& f) {
  if (path.empty() || path == "-") return f(std::cout);
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    std::cerr << "error: cannot write " << path << '\n';
    return 1;
  }
  return f(out);
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BACnet/IP traffic analyzer"};
  app.require_subcommand(1);

  Overrides analyze_o, check_o, export_o, score_o, serve_o;

  auto* analyze = app.add_subcommand("analyze", "Build the flow table and baseline from captures");
  add_common(analyze, analyze_o);
  std::vector<std::string> captures;
  bool update = false;
  std::string baseline_out, csv_out;
  analyze->add_option("captures", captures, "pcap files (added to the configured captures)");
  analyze->add_flag("--update", update, "Merge into the existing baseline and start a new delta generation");
  analyze->add_option("--baseline", baseline_out, "Baseline JSON path");
  analyze->add_option("--csv", csv_out, "Flow-table CSV path");

  auto* check = app.add_subcommand("check", "Flag packets that do not fit the baseline");
  add_common(check, check_o);
  std::string check_capture, check_baseline, check_out;
  bool append_log = false;
  check->add_option("capture", check_capture, "pcap file")->required();
  check->add_option("--baseline", check_baseline, "Baseline JSON path");
  check->add_option("-o,--output", check_out, "NDJSON output (default stdout)");
  check->add_flag("--log", append_log, "Also append records to the configured anomaly log");

  auto* gexf = app.add_subcommand("export-gexf", "Export the communication graph as GEXF 1.3");
  add_common(gexf, export_o);
  std::string gexf_source, gexf_layer = "both", gexf_out;
  gexf->add_option("source", gexf_source, "Baseline (.json) or capture (default: configured baseline)");
  gexf->add_option("--layer", gexf_layer, "network-message, application-data or both");
  gexf->add_option("-o,--output", gexf_out, "GEXF output (default stdout)");

  auto* score = app.add_subcommand("score", "Score one day of sensor events");
  add_common(score, score_o);
  std::string score_day, score_out;
  score->add_option("day", score_day, "Day to score, YYYY-MM-DD")->required();
  score->add_option("-o,--output", score_out, "Tree JSON output (default <scores_dir>/<day>.json)");

  auto* serve = app.add_subcommand("serve", "Serve the console JSON API");
  add_common(serve, serve_o);
  std::string listen;
  serve->add_option("--listen", listen, "host:port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      auto cfg = load(analyze_o);
      for (const auto& c : captures) cfg.captures.emplace_back(c);
      if (!baseline_out.empty()) cfg.baseline = baseline_out;
      if (!csv_out.empty()) cfg.flow_csv = csv_out;
      return bacflow::cmd_analyze(cfg, update, std::cerr);
    }
    if (*check) {
      auto cfg = load(check_o);
      if (!check_baseline.empty()) cfg.baseline = check_baseline;
      return with_output(check_out, [&](std::ostream& out) {
        return bacflow::cmd_check(cfg, check_capture, append_log, out, std::cerr);
      });
    }
    if (*gexf) {
      auto cfg = load(export_o);
      auto layer = bacflow::parse_layer_filter(gexf_layer);
      if (!layer) {
        std::cerr << "error: unknown layer '" << gexf_layer << "'\n";
        return 2;
      }
      std::filesystem::path source = gexf_source.empty() ? cfg.baseline : std::filesystem::path(gexf_source);
      return with_output(gexf_out, [&](std::ostream& out) {
        return bacflow::cmd_export_gexf(cfg, source, *layer, out, std::cerr);
      });
    }
    if (*score) {
      auto cfg = load(score_o);
      auto day = bacflow::parse_day(score_day);
      if (!day) {
        std::cerr << "error: '" << score_day << "' is not a YYYY-MM-DD date\n";
        return 2;
      }
      if (score_out.empty()) score_out = (cfg.scores_dir / (bacflow::format_day(*day) + ".json")).string();
      return with_output(score_out, [&](std::ostream& out) { return bacflow::cmd_score(cfg, *day, out, std::cerr); });
    }
    if (*serve) {
      auto cfg = load(serve_o);
      if (!listen.empty()) cfg.listen = listen;
      auto colon = cfg.listen.rfind(':');
      if (colon == std::string::npos) throw bacflow::ConfigError("listen expects host:port");
      std::string host = cfg.listen.substr(0, colon);
      int port = std::stoi(cfg.listen.substr(colon + 1));
      bacflow::ConsoleService svc(cfg);
      httplib::Server server;
      bacflow::mount(server, svc);
      g_server = &server;
      std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
      std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
      std::cerr << "serving on " << host << ':' << port << '\n';
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << cfg.listen << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const bacflow::ConfigError& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
