// lropf: solve, trace, bench and certify power-flow cases from the command line.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lropf/case_io.hpp"
#include "lropf/certify.hpp"
#include "lropf/engine.hpp"
#include "report_json.hpp"

namespace fs = std::filesystem;
using namespace lropf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitLimit = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  double mu = 1e-4;
  double nu = 0.0;
  int rank_max = 2;
  double tol = 1e-5;
  double tol_stat = 1e-4;
  int max_iter = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string mu_schedule = "fixed";
  std::string restart;
  bool fresh_rank2 = false;

  void add_to(CLI::App* app) {
    app->add_option("--mu", mu, "initial mu (inverse penalty weight)")->capture_default_str();
    app->add_option("--nu", nu, "regulariser weight (diagnostic only)")->capture_default_str();
    app->add_option("--rank-max", rank_max, "largest rank in the schedule 1..r")
        ->capture_default_str();
    app->add_option("--tol", tol, "infeasibility threshold on T")->capture_default_str();
    app->add_option("--tol-stat", tol_stat, "relative stationarity threshold, 0 disables")
        ->capture_default_str();
    app->add_option("--max-iter", max_iter, "iteration limit per rank")->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--threads", threads, "worker threads, 1 = deterministic")
        ->capture_default_str();
    app->add_option("--mu-schedule", mu_schedule,
                    "fixed | geometric:<f> | adaptive:<theta>:<beta>")
        ->capture_default_str();
    app->add_option("--restart", restart, "start from a saved state snapshot");
    app->add_flag("--fresh-rank2", fresh_rank2,
                  "start higher ranks from a fresh random factor");
  }

  SolveConfig config() const {
    SolveConfig c;
    c.mu0 = mu;
    c.nu = nu;
    if (rank_max < 1) throw InputError("--rank-max must be >= 1");
    c.rank_schedule.clear();
    for (int r = 1; r <= rank_max; ++r) c.rank_schedule.push_back(r);
    c.tol_T = tol;
    c.tol_stat = tol_stat;
    c.max_inner = max_iter;
    c.seed = seed;
    c.threads = threads;
    c.warm_start = !fresh_rank2;
    c.mu_schedule = parse_schedule(mu_schedule);
    if (!restart.empty()) {
      std::ifstream in(restart);
      if (!in) throw InputError("cannot open restart file '" + restart + "'");
      try {
        c.initial_state = read_state(in);
      } catch (const std::exception& e) {
        throw InputError(restart + ": " + e.what());
      }
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    return c;
  }

  static MuSchedule parse_schedule(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    auto num = [&](std::size_t i) {
      try {
        return std::stod(parts.at(i));
      } catch (const std::exception&) {
        throw InputError("bad --mu-schedule '" + s + "'");
      }
    };
    if (parts.empty()) throw InputError("empty --mu-schedule");
    if (parts[0] == "fixed" && parts.size() == 1) return MuSchedule::fixed();
    if (parts[0] == "geometric" && parts.size() == 2) return MuSchedule::geometric(num(1));
    if (parts[0] == "adaptive" && parts.size() == 1) return MuSchedule::adaptive();
    if (parts[0] == "adaptive" && parts.size() == 3) return MuSchedule::adaptive(num(1), num(2));
    throw InputError("bad --mu-schedule '" + s + "'");
  }
};

Network load_case(const std::string& path) {
  Network net;
  try {
    net = read_case_file(path);
  } catch (const CaseError& e) {
    throw InputError(path + ": " + e.what());
  }
  bool bad = false;
  for (const auto& d : validate(net)) {
    std::cerr << path << ": " << d << '\n';
    bad = bad || d.severity == Severity::Error;
  }
  if (bad) throw InputError(path + ": invalid network");
  return net;
}

int exit_code(SolveStatus s) {
  return s == SolveStatus::iteration_limit ? kExitLimit : kExitOk;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << "iter,objective,T,mu,accepted\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.iter << ',' << r.objective << ',' << r.T << ',' << r.mu << ','
       << (r.accepted ? 1 : 0) << '\n';
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

int run_solve(const std::string& path, const SolverOptions& opts, const std::string& trace_path,
              const std::string& save_state, bool certify) {
  const Network net = load_case(path);
  SolveConfig cfg = opts.config();
  cfg.record_trace = !trace_path.empty();
  const InstanceMatrices mats = build_instance(net, cfg.instance);
  const SolveReport rep = solve(net, mats, cfg);
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) throw InputError("cannot write trace file '" + trace_path + "'");
    write_trace_csv(out, rep.trace);
  }
  if (!save_state.empty()) {
    std::ofstream out(save_state);
    if (!out) throw InputError("cannot write state file '" + save_state + "'");
    write_state(out, rep.state);
  }
  Certificate cert;
  if (certify) cert = dual_certificate(rep.state, mats);
  std::cout << cli::to_json(rep, net, certify ? &cert : nullptr).dump(2) << '\n';
  return exit_code(rep.status);
}

int run_trace(const std::string& path, const SolverOptions& opts, const std::string& out_path) {
  const Network net = load_case(path);
  SolveConfig cfg = opts.config();
  cfg.record_trace = true;
  const SolveReport rep = solve(net, cfg);
  if (out_path.empty() || out_path == "-") {
    write_trace_csv(std::cout, rep.trace);
  } else {
    std::ofstream out(out_path);
    if (!out) throw InputError("cannot write '" + out_path + "'");
    write_trace_csv(out, rep.trace);
  }
  return exit_code(rep.status);
}

/// Manifest: {"cases": [{"file": "case14.m", "mu": 1e-4, ...}, ...]}. Keys other
/// than "file" override the command-line solver options for that case.
struct BenchCase {
  std::string file;
  SolverOptions opts;
};

std::vector<BenchCase> bench_cases(const fs::path& dir, const std::string& manifest,
                                   const SolverOptions& base) {
  std::vector<BenchCase> out;
  fs::path mpath = manifest.empty() ? dir / "manifest.json" : fs::path(manifest);
  if (!manifest.empty() || fs::exists(mpath)) {
    std::ifstream in(mpath);
    if (!in) throw InputError("cannot open manifest '" + mpath.string() + "'");
    nlohmann::json j;
    try {
      in >> j;
      for (const auto& c : j.at("cases")) {
        BenchCase bc{c.at("file").get<std::string>(), base};
        if (c.contains("mu")) bc.opts.mu = c["mu"].get<double>();
        if (c.contains("tol")) bc.opts.tol = c["tol"].get<double>();
        if (c.contains("tol_stat")) bc.opts.tol_stat = c["tol_stat"].get<double>();
        if (c.contains("max_iter")) bc.opts.max_iter = c["max_iter"].get<int>();
        if (c.contains("rank_max")) bc.opts.rank_max = c["rank_max"].get<int>();
        if (c.contains("seed")) bc.opts.seed = c["seed"].get<std::uint64_t>();
        if (c.contains("mu_schedule")) bc.opts.mu_schedule = c["mu_schedule"].get<std::string>();
        out.push_back(std::move(bc));
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError("manifest '" + mpath.string() + "': " + e.what());
    }
    return out;
  }
  if (!fs::is_directory(dir)) throw InputError("not a directory: '" + dir.string() + "'");
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".m")
      out.push_back({entry.path().filename().string(), base});
  std::sort(out.begin(), out.end(),
            [](const BenchCase& a, const BenchCase& b) { return a.file < b.file; });
  return out;
}

int run_bench(const std::string& dir, const std::string& manifest, const SolverOptions& base,
              const std::string& out_path) {
  const auto cases = bench_cases(dir, manifest, base);
  std::ofstream file;
  if (!out_path.empty() && out_path != "-") {
    file.open(out_path);
    if (!file) throw InputError("cannot write '" + out_path + "'");
  }
  std::ostream& os = file.is_open() ? file : std::cout;
  os << "case,objective,infeasibility,iterations,time_s,status\n";
  for (const auto& c : cases) {
    const std::string name = fs::path(c.file).stem().string();
    try {
      const fs::path p = fs::path(c.file).is_absolute() ? fs::path(c.file) : fs::path(dir) / c.file;
      const Network net = load_case(p.string());
      const SolveReport rep = solve(net, c.opts.config());
      os << name << ',' << fmt(rep.objective) << ',' << fmt(rep.T_final) << ','
         << rep.iterations << ',' << fmt(rep.wall_time) << ',' << to_string(rep.status) << '\n';
    } catch (const std::exception& e) {
      std::cerr << name << ": " << e.what() << '\n';
      os << name << ",,,,,error\n";
    }
    os.flush();
  }
  return kExitOk;
}

int run_certify(const std::string& path, const std::string& state_path) {
  const Network net = load_case(path);
  const InstanceMatrices mats = build_instance(net);
  std::ifstream in(state_path);
  if (!in) throw InputError("cannot open state file '" + state_path + "'");
  AugLagState s;
  try {
    s = read_state(in);
    check_dims(s, mats);
  } catch (const std::exception& e) {
    throw InputError(state_path + ": " + e.what());
  }
  const Certificate cert = dual_certificate(s, mats);
  nlohmann::ordered_json j = cli::to_json(cert);
  j["infeasibility"] = infeasibility_T(s, mats);
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank coordinate descent for AC optimal power flow"};
  app.require_subcommand(1);

  SolverOptions solve_opts, trace_opts, bench_opts;
  std::string solve_case, trace_path, save_state;
  bool no_certify = false;
  auto* solve_cmd = app.add_subcommand("solve", "solve one case and print a JSON report");
  solve_cmd->add_option("case", solve_case, "case file")->required();
  solve_opts.add_to(solve_cmd);
  solve_cmd->add_option("--trace", trace_path, "also write the per-iteration CSV here");
  solve_cmd->add_option("--save-state", save_state, "write the final state snapshot here");
  solve_cmd->add_flag("--no-certify", no_certify, "skip the dual certificate");

  std::string trace_case, trace_out;
  auto* trace_cmd = app.add_subcommand("trace", "per-iteration CSV of one solve");
  trace_cmd->add_option("case", trace_case, "case file")->required();
  trace_opts.add_to(trace_cmd);
  trace_cmd->add_option("-o,--output", trace_out, "output file (default stdout)");

  std::string bench_dir, bench_manifest, bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "solve every case of a directory, CSV out");
  bench_cmd->add_option("dir", bench_dir, "directory of case files")->required();
  bench_cmd->add_option("--manifest", bench_manifest,
                        "JSON manifest (default: <dir>/manifest.json when present)");
  bench_opts.add_to(bench_cmd);
  bench_cmd->add_option("-o,--output", bench_out, "output file (default stdout)");

  std::string cert_case, cert_state;
  auto* cert_cmd = app.add_subcommand("certify", "dual certificate for a saved state");
  cert_cmd->add_option("case", cert_case, "case file")->required();
  cert_cmd->add_option("--state", cert_state, "state snapshot")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*solve_cmd) return run_solve(solve_case, solve_opts, trace_path, save_state, !no_certify);
    if (*trace_cmd) return run_trace(trace_case, trace_opts, trace_out);
    if (*bench_cmd) return run_bench(bench_dir, bench_manifest, bench_opts, bench_out);
    if (*cert_cmd) return run_certify(cert_case, cert_state);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
