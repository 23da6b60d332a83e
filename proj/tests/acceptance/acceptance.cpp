// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [N ...]   run only the listed criteria (1..11)
//
// Exit status is 0 iff every non-diagnostic criterion that ran passed.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "scalefield/experiments.hpp"

using namespace scalefield;
namespace fs = std::filesystem;

namespace {

struct Line {
  std::string id, title;
  bool passed = false, diagnostic = false;
  std::string detail;
};

struct Timed {
  ExperimentResult result;
  double seconds = 0.0;
};

Timed run(const std::string& experiment, const std::vector<std::string>& overrides) {
  Config c = Config::defaults(experiment);
  for (const auto& s : overrides) c.set(s);
  const RunConfig rc(c);
  const auto start = std::chrono::steady_clock::now();
  Timed t;
  t.result = run_experiment(rc);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

const Check* find(const ExperimentResult& r, const std::string& prefix) {
  for (const Check& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

// all checks whose name starts with one of the prefixes must pass
Line gather(std::string id, std::string title, const ExperimentResult& r, const std::vector<std::string>& prefixes,
            double seconds, double limit = 0.0) {
  Line l{std::move(id), std::move(title), true, false, ""};
  for (const auto& p : prefixes) {
    const Check* c = find(r, p);
    if (!c) {
      l.passed = false;
      l.detail += "[missing check '" + p + "'] ";
      continue;
    }
    l.passed = l.passed && c->passed;
    l.detail += c->detail + " ";
  }
  char buf[96];
  if (limit > 0.0) {
    std::snprintf(buf, sizeof buf, "(%.1f s, limit %.0f s)", seconds, limit);
    l.passed = l.passed && seconds < limit;
  } else {
    std::snprintf(buf, sizeof buf, "(%.1f s)", seconds);
  }
  l.detail += buf;
  if (r.abort_rate() > 0.05) {
    l.passed = false;
    l.detail += " abort rate " + std::to_string(r.abort_rate());
  }
  return l;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Line reproducibility() {
  Line l{"11", "Reproducibility: identical config and seed give byte-identical CSVs", false, false, ""};
#ifndef SCALEFIELD_CLI
  l.detail = "command-line driver not built";
  return l;
#else
  const fs::path base = fs::temp_directory_path() / ("scalefield_repro_" + std::to_string(::getpid()));
  fs::remove_all(base);
  const std::string args =
      " drift-run --seed 7 --set mc.replicas=300 --set drift.girsanov_replicas=300 --set drift.remainder_bank=2";
  // the second run uses a different worker count; it is not part of the config
  const std::string a = std::string("SCALEFIELD_WORKERS=1 ") + SCALEFIELD_CLI + args + " --out " +
                        (base / "a").string() + " > /dev/null 2>&1";
  const std::string b = std::string("SCALEFIELD_WORKERS=3 ") + SCALEFIELD_CLI + args + " --out " +
                        (base / "b").string() + " > /dev/null 2>&1";
  const int ra = std::system(a.c_str()), rb = std::system(b.c_str());
  if (ra != 0 || rb != 0) {
    l.detail = "driver exit status " + std::to_string(ra) + " / " + std::to_string(rb);
    fs::remove_all(base);
    return l;
  }
  std::size_t files = 0, same = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = base / "b" / e.path().filename();
    same += fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  l.passed = files > 0 && same == files;
  l.detail = std::to_string(same) + "/" + std::to_string(files) + " CSV files identical (workers 1 vs 3)";
  fs::remove_all(base);
  return l;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&only](std::initializer_list<int> ids) {
    if (only.empty()) return true;
    for (int i : ids)
      if (only.count(i)) return true;
    return false;
  };

  std::vector<Line> lines;
  auto emit = [&lines](Line l) {
    const char* tag = l.passed ? "PASS" : l.diagnostic ? "FAIL (diagnostic)" : "FAIL";
    std::cout << "[" << tag << "] " << l.id << ". " << l.title << ": " << l.detail << std::endl;
    lines.push_back(std::move(l));
  };
  auto guarded = [&emit](const std::string& id, const std::string& title, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      emit(Line{id, title, false, false, std::string("error: ") + e.what()});
    }
  };

  if (wanted({1}))
    guarded("1", "Covariance exactness", [&] {
      const Timed t = run("check-covariance", {"grid.n_max=8", "schedule.T=4", "mc.replicas=10000"});
      emit(gather("1", "Covariance exactness (N_max 8, T 4, 1e4 replicas, >= 95% of modes within 3 se)", t.result,
                  {"per-mode variance"}, t.seconds, 120.0));
    });
  if (wanted({2}))
    guarded("2", "Paraproduct trichotomy", [&] {
      const Timed t = run("paraproduct-test", {"para.pairs=100"});
      emit(gather("2", "Paraproduct trichotomy (100 pairs, error < 1e-10; partition residual < 1e-12)", t.result,
                  {"fg = ", "partition of unity"}, t.seconds));
    });
  if (wanted({3}))
    guarded("3", "Wick centering", [&] {
      const Timed t = run("check-wick", {"mc.replicas=10000", "wick.lags=0,1,3"});
      emit(gather("3", "Wick centering and covariance identity (1e4 replicas, 3 lags, 3 sigma)", t.result,
                  {"Wick powers are centered", "E[[W^2]]"}, t.seconds, 120.0));
    });
  if (wanted({4}))
    guarded("4", "Girsanov", [&] {
      const Timed t = run("drift-run", {"mc.replicas=2", "drift.girsanov_replicas=10000", "drift.remainder_bank=0"});
      emit(gather("4", "Girsanov martingale and mean shift (1e4 replicas, 3 sigma)", t.result,
                  {"Girsanov weight has mean one", "reweighted mean"}, t.seconds));
    });
  if (wanted({5}))
    guarded("5", "Shift decomposition", [&] {
      const Timed t = run("drift-run", {"grid.n_max=2", "mc.replicas=2", "drift.girsanov_replicas=0",
                                        "drift.remainder_bank=20"});
      emit(gather("5", "Shift decomposition identity (20 shifts, N_max 2, residual < 1e-8)", t.result,
                  {"shift decomposition identity"}, t.seconds));
    });
  if (wanted({6, 7}))
    guarded("6", "Density consistency", [&] {
      const Timed t = run("weights", {"grid.n_max=2", "physics.lambda=0.3", "mc.replicas=10000", "weights.Ts=2,4,8",
                                      "weights.density_T=4", "weights.direct_replicas=10000"});
      if (wanted({6}))
        emit(gather("6", "Density consistency E_Q[D_T] vs E_P[exp(-V_T)] (N_max 2, T 4, lambda 0.3, 1e4, 3 sigma)",
                    t.result, {"E_Q[D_T] equals"}, t.seconds));
      if (wanted({7})) {
        Line l = gather("7", "Uniform-integrability proxy (1.01-th moment on the bounded-norm event, x2 across T)",
                        t.result, {"p-th moment of D_T"}, t.seconds);
        l.diagnostic = true;
        emit(std::move(l));
      }
    });
  if (wanted({8, 9}))
    guarded("8", "Variational duality", [&] {
      const Timed q = run("bd-optimize", {"bd.functional=quadratic", "bd.mass=1", "bd.gradcheck=0"});
      const Timed r = run("bd-optimize", {"bd.functional=quartic", "grid.n_max=2", "physics.lambda=0.3",
                                          "bd.gradcheck=20"});
      if (wanted({8})) {
        Line a = gather("8", "", q.result, {"quadratic value matches"}, q.seconds);
        Line b = gather("8", "", r.result, {"optimizer value >= direct", "optimizer value <= direct"}, r.seconds);
        const double total = q.seconds + r.seconds;
        emit(Line{"8", "Variational duality (quadratic within 2%; quartic in [direct - 3 sigma, direct + 10%]; < 10 min)",
                  a.passed && b.passed && total < 600.0, false,
                  "quadratic: " + a.detail + "; quartic: " + b.detail});
      }
      if (wanted({9}))
        emit(gather("9", "Gradient check (20 coordinates, relative error <= 1e-4)", r.result,
                    {"pathwise gradient matches"}, r.seconds));
    });
  if (wanted({10}))
    guarded("10", "Singularity scaling", [&] {
      const Timed t = run("singularity-scan", {"scan.Ts=2,4,8,16"});
      const bool in_time = t.seconds < 1800.0;
      char buf[64];
      std::snprintf(buf, sizeof buf, " (scan %.0f s, limit 1800 s)", t.seconds);
      Line a = gather("10a", "Quartic second moment slope <= 1.3 over T in {2,4,8,16}", t.result,
                      {"slope of log E[Q_T^2]"}, 0.0);
      Line b = gather("10b", "Cross-term mean slope >= 0.7", t.result, {"slope of log E[cross] >="}, 0.0);
      Line c = gather("10c", "Divergence statistic decreasing in T under the drift measure (rank test, 5%)", t.result,
                      {"divergence statistic decreases in T (divergence)"}, 0.0);
      for (Line* l : {&a, &b, &c}) {
        l->passed = l->passed && in_time;
        l->detail = l->detail.substr(0, l->detail.rfind(" (")) + buf;
        emit(std::move(*l));
      }
    });
  if (wanted({11})) guarded("11", "Reproducibility", [&] { emit(reproducibility()); });

  std::size_t failed = 0, diag = 0;
  for (const Line& l : lines) {
    if (!l.passed && l.diagnostic) ++diag;
    if (!l.passed && !l.diagnostic) ++failed;
  }
  std::cout << lines.size() - failed - diag << " passed, " << failed << " failed, " << diag
            << " diagnostic failures" << std::endl;
  return failed == 0 ? 0 : 1;
}
