// Command-line front end for the simulation stack.
//
//   dmpc run <preset|file.json> [options]       decentralized closed loop
//   dmpc baseline <preset|file.json> [options]  centralized closed loop
//   dmpc selftest [--criterion N]... [--config] end-to-end self-checks
//   dmpc presets                                list built-in scenarios
//   dmpc show <preset|file.json>                print the resolved scenario
//
// Exit codes: 0 success, 1 bad configuration or usage, 2 runtime failure.
// DMPC_LOG picks the stderr chatter level: 0 silent, 1 progress, 2 verbose.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmpc/harness.hpp"
#include "dmpc/selftest.hpp"

namespace {

int log_level() {
  const char* env = std::getenv("DMPC_LOG");
  if (!env) return 1;
  try {
    return std::clamp(std::stoi(env), 0, 2);
  } catch (const std::exception&) {
    return 1;
  }
}

void usage(std::ostream& out) {
  out << "usage: dmpc <command> [options]\n"
         "\n"
         "commands:\n"
         "  run <preset|file.json>       decentralized closed-loop run\n"
         "  baseline <preset|file.json>  centralized run with the same logs\n"
         "  selftest [--criterion N]...  end-to-end self-checks (all when bare)\n"
         "  selftest --config            fast audit of the built-in scenarios\n"
         "  presets                      list built-in scenario names\n"
         "  show <preset|file.json>      print the resolved scenario JSON\n"
         "\n"
         "run / baseline options:\n"
         "  --out DIR        write scenario.json, run_log.csv, summary.json,\n"
         "                   bus_events.csv and wall_times.csv under DIR\n"
         "  --seed N         override the scenario seed\n"
         "  --l-max N        inner consensus iterations per outer pass\n"
         "  --k-max N        outer passes per control step\n"
         "  --rho X          consensus penalty weight\n"
         "  --profile NAME   network profile: perfect | offboard | onboard\n"
         "  --duration X     runtime in simulated seconds\n"
         "  --wall-clock     one thread per agent, paced in real time (run only)\n"
         "\n"
         "environment:\n"
         "  DMPC_LOG         0 silent, 1 progress (default), 2 verbose\n";
}

dmpc::ScenarioSpec resolve_scenario(const std::string& what) {
  if (std::filesystem::exists(what)) return dmpc::load_scenario(what);
  for (const auto& name : dmpc::preset_names())
    if (name == what) return dmpc::make_preset(what);
  throw dmpc::ConfigError("no scenario file or preset named '" + what + "'");
}

struct RunArgs {
  std::string scenario;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> l_max, k_max;
  std::optional<double> rho, duration;
  std::optional<std::string> profile;
  bool wall_clock = false;
};

RunArgs parse_run_args(const std::vector<std::string>& args, bool allow_wall_clock) {
  RunArgs r;
  std::size_t a = 0;
  auto value = [&](const std::string& flag) -> std::string {
    if (a + 1 >= args.size()) throw dmpc::ConfigError(flag + " needs a value");
    return args[++a];
  };
  auto number = [&](const std::string& flag, auto parse) {
    const std::string v = value(flag);
    try {
      return parse(v);
    } catch (const std::exception&) {
      throw dmpc::ConfigError("bad value for " + flag + ": '" + v + "'");
    }
  };
  auto as_int = [](const std::string& v) { return std::stoi(v); };
  auto as_u64 = [](const std::string& v) { return std::stoull(v); };
  auto as_dbl = [](const std::string& v) { return std::stod(v); };

  for (; a < args.size(); ++a) {
    const std::string& arg = args[a];
    if (arg == "--out") r.out_dir = value(arg);
    else if (arg == "--seed") r.seed = number(arg, as_u64);
    else if (arg == "--l-max") r.l_max = number(arg, as_int);
    else if (arg == "--k-max") r.k_max = number(arg, as_int);
    else if (arg == "--rho") r.rho = number(arg, as_dbl);
    else if (arg == "--duration") r.duration = number(arg, as_dbl);
    else if (arg == "--profile") r.profile = value(arg);
    else if (arg == "--wall-clock" && allow_wall_clock) r.wall_clock = true;
    else if (!arg.empty() && arg[0] == '-')
      throw dmpc::ConfigError("unknown option '" + arg + "'");
    else if (r.scenario.empty()) r.scenario = arg;
    else throw dmpc::ConfigError("unexpected extra argument '" + arg + "'");
  }
  if (r.scenario.empty()) throw dmpc::ConfigError("missing scenario file or preset name");
  return r;
}

dmpc::ScenarioSpec configure(const RunArgs& r) {
  auto spec = resolve_scenario(r.scenario);
  if (r.seed) spec.seed = *r.seed;
  if (r.l_max) spec.l_max = *r.l_max;
  if (r.k_max) spec.k_max = *r.k_max;
  if (r.rho) spec.rho = *r.rho;
  if (r.duration) spec.duration_s = *r.duration;
  if (r.profile) {
    spec.network = dmpc::NetworkSpec{};
    spec.network.profile = *r.profile;
  }
  spec.validate();
  return spec;
}

int cmd_run(const std::vector<std::string>& args, bool baseline) {
  const auto r = parse_run_args(args, !baseline);
  const auto spec = configure(r);
  const int verbosity = log_level();

  if (verbosity >= 1)
    std::cerr << (baseline ? "baseline " : "run ") << spec.name << ": " << spec.agents
              << " agents, " << spec.steps() << " steps of " << spec.dt << " s\n";
  if (verbosity >= 2) std::cerr << dmpc::scenario_to_json(spec).dump(2) << "\n";

  const auto res = baseline
                       ? dmpc::run_baseline(spec, r.out_dir)
                       : dmpc::run_scenario(spec, r.out_dir,
                                            r.wall_clock ? dmpc::DriveMode::WallClock
                                                         : dmpc::DriveMode::Virtual);

  std::cout << dmpc::summary_json(spec, res.metrics).dump(2) << std::endl;
  if (verbosity >= 1 && !r.out_dir.empty())
    std::cerr << "logs written to " << r.out_dir << "\n";
  return 0;
}

int cmd_selftest(const std::vector<std::string>& args) {
  std::vector<int> ids;
  bool config_only = false;
  for (std::size_t a = 0; a < args.size(); ++a) {
    if (args[a] == "--criterion" && a + 1 < args.size()) {
      try {
        ids.push_back(std::stoi(args[++a]));
      } catch (const std::exception&) {
        throw dmpc::ConfigError("not a criterion number: " + args[a]);
      }
    } else if (args[a] == "--config") {
      config_only = true;
    } else {
      throw dmpc::ConfigError("unknown selftest argument '" + args[a] + "'");
    }
  }

  if (config_only) {
    const auto problems = dmpc::config_selftest();
    for (const auto& p : problems) std::cout << "FAIL " << p << "\n";
    if (problems.empty()) std::cout << "PASS built-in scenario catalog\n";
    return problems.empty() ? 0 : 2;
  }
  return dmpc::run_selftest(ids, std::cout) == 0 ? 0 : 2;
}

int cmd_show(const std::vector<std::string>& args) {
  if (args.size() != 1)
    throw dmpc::ConfigError("show expects exactly one scenario file or preset name");
  std::cout << dmpc::scenario_to_json(resolve_scenario(args[0])).dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    usage(args.empty() ? std::cerr : std::cout);
    return args.empty() ? 1 : 0;
  }

  const std::string cmd = args[0];
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (cmd == "run") return cmd_run(rest, false);
    if (cmd == "baseline") return cmd_run(rest, true);
    if (cmd == "selftest") return cmd_selftest(rest);
    if (cmd == "show") return cmd_show(rest);
    if (cmd == "presets") {
      for (const auto& name : dmpc::preset_names()) std::cout << name << "\n";
      return 0;
    }
    usage(std::cerr);
    return 1;
  } catch (const dmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
