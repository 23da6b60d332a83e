#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace scalefield {

/// Invalid configuration; the message names the source line or override.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat configuration with dotted keys, e.g. `grid.n_max = 8`.
///
/// Text form: one `key = value` per line, `#` starts a comment. Every key
/// must be known; values are checked when a RunConfig is built.
class Config {
 public:
  /// Defaults for one subcommand; throws ConfigError for unknown names.
  static Config defaults(const std::string& experiment);

  void parse(const std::string& text, const std::string& source);
  void parse_file(const std::string& path);
  /// `key=value` from the command line.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value, const std::string& origin);

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  const std::string& value(const std::string& key) const;
  const std::string& origin(const std::string& key) const;

  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
};

const std::vector<std::string>& experiment_names();

/// Validated, typed view of a Config. Construction throws ConfigError.
struct RunConfig {
  explicit RunConfig(const Config& config);

  Config source;
  std::string experiment;

  int n_max = 2, padding = 4;
  double T = 4.0, resolution = 1.0;

  double lambda = 0.3, gamma = 0.0, T_bar = 2.0, N_stop = 50.0, delta = 0.1;
  int n_aux = 5;
  bool aux = true;
  int picard = 0;

  std::size_t replicas = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  double max_abort_rate = 0.05;
};

struct Table {
  std::string name;  ///< file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  /// RFC 4180 style text, "\n" line ends, no trailing spaces.
  std::string csv() const;
};

/// Shortest round-trip text of a double ("nan", "inf", "-inf" for the rest).
std::string format_double(double x);

struct Check {
  std::string name;
  bool passed = false;
  bool diagnostic = false;  ///< reported, never fails the run
  std::string detail;
};

struct ExperimentResult {
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::size_t replicas = 0, aborted = 0;

  bool assertions_passed() const;
  double abort_rate() const { return replicas ? double(aborted) / double(replicas) : 0.0; }
};

/// Runs one subcommand. Progress lines go to `log` when given.
ExperimentResult run_experiment(const RunConfig& config, std::ostream* log = nullptr);

/// Long format `row,variable,value` of a CSV table: one output row per
/// input cell, `row` numbering the input data rows from 0. Input already in
/// that format is returned unchanged. Throws std::invalid_argument for
/// malformed input (ragged rows, unterminated quotes, empty header).
std::string emit_plot_data(const std::string& csv);

/// Parses CSV text into header and rows.
Table parse_csv(const std::string& text);

}  // namespace scalefield
