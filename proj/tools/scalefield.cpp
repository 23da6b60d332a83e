// scalefield: command-line driver for the experiments.
//
//   scalefield <subcommand> [--config FILE] [--set key=value ...] [--seed U64] [--out DIR]
//   scalefield plot-data IN.csv [-o OUT.csv]
//
// Exit codes: 0 ok, 1 assertion failed, 2 config error, 3 abort rate exceeded.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scalefield/experiments.hpp"

#ifndef SCALEFIELD_VERSION
#define SCALEFIELD_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace scalefield;

namespace {

constexpr int kOk = 0, kAssertion = 1, kConfigError = 2, kAbortRate = 3;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

ordered_json config_json(const Config& c) {
  ordered_json values = ordered_json::object(), origins = ordered_json::object();
  for (const auto& [k, v] : c.values()) {
    values[k] = v;
    origins[k] = c.origin(k);
  }
  return {{"values", values}, {"origins", origins}};
}

struct Options {
  std::string experiment;
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string mode;
  std::string quadratic;
};

int run(const Options& o) {
  Config config;
  try {
    config = Config::defaults(o.experiment);
    if (!o.config_path.empty()) config.parse_file(o.config_path);
    if (config.value("experiment") != o.experiment)
      throw ConfigError(config.origin("experiment") + ": experiment = '" + config.value("experiment") +
                        "' does not match the subcommand '" + o.experiment + "'");
    if (!o.mode.empty()) config.set("drift.mode", o.mode, "--mode");
    if (!o.quadratic.empty()) {
      const auto eq = o.quadratic.find('=');
      if (eq == std::string::npos || o.quadratic.substr(0, eq) != "m")
        throw ConfigError("--quadratic " + o.quadratic + ": expected m=VALUE");
      config.set("bd.functional", "quadratic", "--quadratic");
      config.set("bd.mass", o.quadratic.substr(eq + 1), "--quadratic " + o.quadratic);
    }
    for (const auto& s : o.sets) config.set(s);
    if (o.seed_given) config.set("mc.seed", std::to_string(o.seed), "--seed");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  std::optional<RunConfig> rc;
  try {
    rc.emplace(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const fs::path out = o.out.empty() ? fs::path("out") / o.experiment : fs::path(o.out);
  fs::create_directories(out);
  const fs::path manifest_path = out / "manifest.json";
  ordered_json manifest;
  manifest["status"] = "incomplete";
  manifest["experiment"] = o.experiment;
  manifest["version"] = SCALEFIELD_VERSION;
  manifest["timestamp"] = utc_timestamp();
  manifest["workers"] = rc->workers;
  manifest["config"] = config_json(config);
  manifest["outputs"] = ordered_json::array();
  write_text(manifest_path, manifest.dump(2) + "\n");

  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  try {
    result = run_experiment(*rc, &std::cerr);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    write_text(manifest_path, manifest.dump(2) + "\n");
    std::cerr << "error: " << e.what() << "\n";
    return kAssertion;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  for (const Table& t : result.tables) {
    const std::string file = t.name + ".csv";
    write_text(out / file, t.csv());
    manifest["outputs"].push_back({{"name", t.name}, {"path", file}, {"header", t.header}, {"rows", t.rows.size()}});
  }
  ordered_json checks = ordered_json::array();
  for (const Check& c : result.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"diagnostic", c.diagnostic}, {"detail", c.detail}});
    std::cout << (c.passed ? "PASS" : c.diagnostic ? "DIAG" : "FAIL") << "  " << c.name << ": " << c.detail << "\n";
  }
  const bool abort_exceeded = result.abort_rate() > rc->max_abort_rate;
  const int code = abort_exceeded ? kAbortRate : result.assertions_passed() ? kOk : kAssertion;
  if (abort_exceeded)
    std::cout << "FAIL  abort rate " << result.abort_rate() << " exceeds abort.max_rate " << rc->max_abort_rate
              << "\n";
  manifest["status"] = "complete";
  manifest["wall_clock_seconds"] = wall;
  manifest["replicas"] = result.replicas;
  manifest["aborted"] = result.aborted;
  manifest["abort_rate"] = result.abort_rate();
  manifest["checks"] = checks;
  manifest["exit_code"] = code;
  write_text(manifest_path, manifest.dump(2) + "\n");
  return code;
}

int plot_data(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << in_path << "\n";
    return kConfigError;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text;
  try {
    text = emit_plot_data(ss.str());
  } catch (const std::invalid_argument& e) {
    std::cerr << in_path << ": malformed CSV: " << e.what() << "\n";
    return kConfigError;
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scale-regularized field experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SCALEFIELD_VERSION);

  Options o;
  for (const std::string& name : experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", o.config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "override one key, key=value (repeatable)");
    sub->add_option("--seed", o.seed, "master seed (overrides mc.seed)");
    sub->add_option("--out", o.out, "output directory (default out/<subcommand>)");
    if (name == "drift-run")
      sub->add_option("--mode", o.mode, "under-p or under-q")->check(CLI::IsMember({"under-p", "under-q"}));
    if (name == "bd-optimize") sub->add_option("--quadratic", o.quadratic, "quadratic surrogate, m=VALUE");
    sub->callback([&o, name, sub] {
      o.experiment = name;
      o.seed_given = sub->count("--seed") > 0;
    });
  }
  std::string plot_in, plot_out;
  CLI::App* plot = app.add_subcommand("plot-data", "reshape a CSV table to long format row,variable,value");
  plot->add_option("input", plot_in, "input CSV")->required();
  plot->add_option("-o,--output", plot_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  try {
    if (plot->parsed()) return plot_data(plot_in, plot_out);
    return run(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssertion;
  }
}
