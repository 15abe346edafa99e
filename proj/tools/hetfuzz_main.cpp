// hetfuzz: coverage-guided fuzzing for host+device programs on the
// deterministic HDVM runtime. Subcommands: fuzz, replay, showmap, bench,
// compare-kernel, targets-list.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hetfuzz/engine.hpp"
#include "hetfuzz/targets.hpp"

namespace fs = std::filesystem;
using namespace hetfuzz;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw TargetError("cannot read file: " + p.string());
  return {std::istreambuf_iterator<char>(f), {}};
}

// Regular files in a directory, sorted by name for reproducibility.
std::vector<fs::path> dir_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw TargetError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

const TargetInfo& need_target(const std::string& name) {
  const TargetInfo* info = find_target(name);
  if (!info)
    throw TargetError("unknown target: " + name +
                      " (see `hetfuzz targets-list`)");
  return *info;
}

Strategy parse_strategy(const std::string& name) {
  if (auto s = strategy_from_name(name)) return *s;
  throw CLI::ValidationError(
      "--strategy", "expected one of all-trace, unique-trace, simple-trace, "
                    "coverage-increase");
}

int cmd_fuzz(const std::string& target, const std::string& in_dir,
             const std::string& out_dir, const std::string& strategy_name,
             bool no_device_coverage, bool no_sanitizers, bool persistent,
             std::uint64_t persistent_loop, std::uint64_t budget,
             const std::string& budget_kind, std::uint64_t rng_seed,
             bool sequential, int workers, std::uint64_t stats_every) {
  CampaignConfig cfg;
  cfg.target = need_target(target).program.name;
  for (const auto& p : dir_files(in_dir)) cfg.seeds.push_back(read_file(p));
  if (cfg.seeds.empty()) throw TargetError("no seed files in: " + in_dir);
  cfg.strategy = parse_strategy(strategy_name);
  cfg.device_coverage = !no_device_coverage;
  cfg.sanitizers = !no_sanitizers;
  cfg.persistent = persistent;
  cfg.persistent_loop = persistent_loop;
  cfg.budget = budget;
  if (budget_kind == "execs") {
    cfg.budget_kind = BudgetKind::Execs;
  } else if (budget_kind == "vtime") {
    cfg.budget_kind = BudgetKind::VirtualTime;
  } else {
    throw CLI::ValidationError("--budget-kind", "expected execs or vtime");
  }
  cfg.rng_seed = rng_seed;
  cfg.sequential_queue = sequential;
  cfg.workers = workers;
  cfg.stats_every = stats_every;
  cfg.out_dir = out_dir;

  // a rerun must leave exactly the tree this campaign produces
  std::error_code ec;
  fs::remove_all(fs::path(out_dir) / "queue", ec);
  fs::remove_all(fs::path(out_dir) / "crashes", ec);
  fs::remove(fs::path(out_dir) / "plot_data.csv", ec);
  fs::remove(fs::path(out_dir) / "campaign.json", ec);

  CampaignResult res = run_campaign(cfg);

  std::cout << "target:           " << cfg.target << '\n';
  std::cout << "executions:       " << res.execs << '\n';
  std::cout << "virtual time:     " << res.virtual_time << '\n';
  std::cout << "queue entries:    " << res.queue.size() << '\n';
  std::cout << "host edges:       " << res.virgin.host_edges() << '\n';
  std::cout << "device edges:     " << res.virgin.device_edges() << '\n';
  std::cout << "sanitizer execs:  " << res.sanitizer_execs << '\n';
  std::cout << "distinct crashes: " << res.crashes.size() << '\n';
  for (const auto& [key, rec] : res.crashes)
    std::cout << "  " << crash_key_hex(key) << "  "
              << to_string(rec.finding.tool) << " " << to_string(rec.finding.kind)
              << (rec.false_positive ? "  [invariant-violating launch]" : "")
              << '\n';
  std::cout << "results:          " << out_dir << '\n';
  return 0;
}

int cmd_replay(const std::string& target, const std::vector<std::string>& files,
               bool no_device_coverage, bool persistent,
               std::uint64_t persistent_loop, bool print_map) {
  const TargetInfo& info = need_target(target);
  std::vector<std::vector<std::uint8_t>> inputs;
  for (const auto& f : files) inputs.push_back(read_file(f));

  ReplayResult replay = replay_sequence(info.program, inputs, persistent,
                                        persistent_loop, !no_device_coverage);
  hdvm::ExecOptions shadow;
  shadow.host_coverage = false;
  shadow.device_coverage = false;
  shadow.shadow = true;

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto rep = hdvm::execute(info.program, inputs[i], shadow);
    std::cout << files[i] << ": ";
    switch (rep.exit.kind) {
      case hdvm::ExitKind::Clean:
        std::cout << "clean exit " << rep.exit.code;
        break;
      case hdvm::ExitKind::HostAbort:
        std::cout << "host abort";
        break;
      case hdvm::ExitKind::HardFault:
        std::cout << "hard fault (" << rep.exit.description << ")";
        break;
    }
    std::uint64_t host_slots = 0, device_slots = 0;
    for (std::uint32_t idx : replay.traces[i].nonzero)
      (idx < kHostSlots ? host_slots : device_slots) += 1;
    std::cout << ", host slots " << host_slots << ", device slots "
              << device_slots;
    auto sweep = run_all_tools(rep);
    for (const auto& f : sweep.findings)
      std::cout << ", " << to_string(f.tool) << ":" << to_string(f.kind)
                << " key " << crash_key_hex(dedup_key(f));
    std::cout << '\n';
    if (print_map) std::cout << classed_map_text(replay.traces[i]);
  }
  std::cout << "total virtual cost: " << replay.total_cost << " over "
            << replay.processes << " process(es)\n";
  return 0;
}

int cmd_showmap(const std::string& target, const std::string& queue_dir,
                const std::string& out_dir) {
  const TargetInfo& info = need_target(target);
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> entries;
  std::uint64_t fallback_id = 0;
  for (const auto& p : dir_files(queue_dir)) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(p);
    } catch (const TargetError& e) {
      std::cerr << "warning: skipping unreadable entry: " << p.string()
                << '\n';
      continue;
    }
    // queue files are id_NNNNNN.bin; anything else gets a running index
    std::uint64_t id = fallback_id;
    std::string stem = p.stem().string();
    auto digits = stem.find_first_of("0123456789");
    if (stem.rfind("id_", 0) == 0 && digits != std::string::npos)
      id = std::stoull(stem.substr(digits));
    fallback_id = id + 1;
    entries.emplace_back(id, std::move(bytes));
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  ShowmapResult res = showmap(info.program, entries);
  std::cout << showmap_csv(res);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    {
      std::ofstream f(fs::path(out_dir) / "showmap.csv");
      f << showmap_csv(res);
    }
    for (const auto& [id, trace] : res.traces) {
      char name[32];
      std::snprintf(name, sizeof name, "map_%06llu.txt",
                    static_cast<unsigned long long>(id));
      std::ofstream f(fs::path(out_dir) / name);
      f << classed_map_text(trace);
    }
  }
  return 0;
}

int cmd_bench(const std::string& target, const std::string& in_dir,
              const std::string& configs) {
  const TargetInfo& info = need_target(target);
  std::vector<std::vector<std::uint8_t>> inputs;
  for (const auto& p : dir_files(in_dir)) inputs.push_back(read_file(p));
  if (inputs.empty()) throw TargetError("no input files in: " + in_dir);

  BenchResult res = bench(info.program, inputs);
  if (!configs.empty()) {
    std::set<std::string> keep;
    std::stringstream ss(configs);
    std::string one;
    while (std::getline(ss, one, ',')) keep.insert(one);
    std::vector<BenchConfigResult> filtered;
    for (const auto& c : res.configs)
      if (keep.count(c.name)) filtered.push_back(c);
    res.configs = std::move(filtered);
  }
  std::cout << bench_csv(res);
  std::cerr << res.inputs << " input(s), " << res.device_inputs
            << " device-triggering\n";
  return 0;
}

int cmd_compare_kernel(const std::string& target, const std::string& kernel,
                       std::uint64_t budget, std::uint64_t rng_seed) {
  const TargetInfo& info = need_target(target);
  CompareKernelResult res = compare_kernel(info, kernel, budget, rng_seed);
  std::cout << compare_kernel_text(res);
  return 0;
}

int cmd_targets_list() {
  for (const auto& info : registry()) {
    std::cout << info.program.name << '\n';
    std::cout << "  " << info.summary << '\n';
    std::cout << "  input: " << info.program.input_format << '\n';
    std::cout << "  kernels:";
    for (const auto& k : info.program.kernels)
      std::cout << ' ' << k.name << (k.schema.empty() ? "" : "*");
    std::cout << "  (* = fuzzable with compare-kernel)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hetfuzz: coverage-guided fuzzing across a host/device "
               "boundary on a deterministic simulated runtime"};
  app.require_subcommand(1);

  // fuzz
  auto* fuzz = app.add_subcommand("fuzz", "run a fuzzing campaign");
  std::string f_target, f_in, f_out, f_strategy = "simple-trace";
  std::string f_budget_kind = "execs";
  bool f_no_devcov = false, f_no_san = false, f_sequential = false;
  std::uint64_t f_persistent_loop = 1000, f_budget = 10000, f_seed = 1;
  std::uint64_t f_stats_every = 100;
  int f_workers = 1;
  fuzz->add_option("-t,--target", f_target, "target program name")->required();
  fuzz->add_option("-i,--input", f_in, "directory of seed inputs")->required();
  fuzz->add_option("-o,--output", f_out, "output directory")->required();
  auto* f_strategy_opt = fuzz->add_option(
      "--strategy", f_strategy,
      "sanitizer dispatch policy: all-trace, unique-trace, simple-trace, "
      "coverage-increase (default simple-trace)");
  fuzz->add_flag("--no-device-coverage", f_no_devcov,
                 "collect host edges only");
  auto* f_no_san_opt = fuzz->add_flag("--no-sanitizers", f_no_san,
                                      "never run sanitizer analysis");
  auto* f_persistent_opt =
      fuzz->add_option("--persistent", f_persistent_loop,
                       "reuse one process, recycling after N runs (N=1000)")
          ->expected(0, 1);
  fuzz->add_option("--budget", f_budget, "campaign budget (default 10000)");
  fuzz->add_option("--budget-kind", f_budget_kind,
                   "what --budget counts: execs or vtime (default execs)");
  fuzz->add_option("--seed", f_seed, "rng seed; fixes the whole campaign");
  fuzz->add_flag("--sequential", f_sequential,
                 "cycle the queue in strict id order");
  fuzz->add_option("--workers", f_workers,
                   "max concurrent sanitizer jobs (default 1)")
      ->check(CLI::PositiveNumber);
  fuzz->add_option("--stats-every", f_stats_every,
                   "executions between plot rows (default 100)")
      ->check(CLI::PositiveNumber);
  // dispatch policies choose sanitizer work, so the two cannot combine
  f_no_san_opt->excludes(f_strategy_opt);

  // replay
  auto* replay = app.add_subcommand("replay", "run recorded inputs once each");
  std::string r_target;
  std::vector<std::string> r_files;
  bool r_no_devcov = false, r_map = false;
  std::uint64_t r_persistent_loop = 1000;
  replay->add_option("-t,--target", r_target, "target program name")
      ->required();
  replay->add_option("files", r_files, "input files, replayed in order")
      ->required();
  replay->add_flag("--no-device-coverage", r_no_devcov,
                   "collect host edges only");
  auto* r_persistent_opt =
      replay->add_option("--persistent", r_persistent_loop,
                         "reuse one process, recycling after N runs (N=1000)")
          ->expected(0, 1);
  replay->add_flag("--map", r_map, "print each classed map as idx:class lines");

  // showmap
  auto* showmap_cmd =
      app.add_subcommand("showmap", "replay a queue and tabulate new edges");
  std::string s_target, s_queue, s_out;
  showmap_cmd->add_option("-t,--target", s_target, "target program name")
      ->required();
  showmap_cmd->add_option("-q,--queue", s_queue, "queue directory to replay")
      ->required();
  showmap_cmd->add_option("-o,--output", s_out,
                          "also write showmap.csv and per-entry map files");

  // bench
  auto* bench_cmd = app.add_subcommand(
      "bench", "median virtual cost per instrumentation configuration");
  std::string b_target, b_in, b_configs;
  bench_cmd->add_option("-t,--target", b_target, "target program name")
      ->required();
  bench_cmd->add_option("-i,--input", b_in, "directory of inputs")->required();
  bench_cmd->add_option("--configs", b_configs,
                        "comma-separated subset of configuration rows");

  // compare-kernel
  auto* cmp = app.add_subcommand(
      "compare-kernel",
      "whole-program vs single-kernel campaign on the same budget");
  std::string c_target, c_kernel;
  std::uint64_t c_budget = 20000, c_seed = 1;
  cmp->add_option("-t,--target", c_target, "target program name")->required();
  cmp->add_option("-k,--kernel", c_kernel, "kernel to fuzz in isolation")
      ->required();
  cmp->add_option("--budget", c_budget,
                  "execution budget per campaign (default 20000)");
  cmp->add_option("--seed", c_seed, "rng seed for both campaigns");

  // targets-list
  app.add_subcommand("targets-list", "describe the built-in targets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  }

  // a bare --persistent parses as 0; both spellings mean the default loop
  if (f_persistent_loop == 0) f_persistent_loop = 1000;
  if (r_persistent_loop == 0) r_persistent_loop = 1000;

  try {
    if (app.got_subcommand("fuzz"))
      return cmd_fuzz(f_target, f_in, f_out, f_strategy, f_no_devcov, f_no_san,
                      f_persistent_opt->count() > 0, f_persistent_loop,
                      f_budget, f_budget_kind, f_seed, f_sequential, f_workers,
                      f_stats_every);
    if (app.got_subcommand("replay"))
      return cmd_replay(r_target, r_files, r_no_devcov,
                        r_persistent_opt->count() > 0, r_persistent_loop,
                        r_map);
    if (app.got_subcommand("showmap"))
      return cmd_showmap(s_target, s_queue, s_out);
    if (app.got_subcommand("bench")) return cmd_bench(b_target, b_in, b_configs);
    if (app.got_subcommand("compare-kernel"))
      return cmd_compare_kernel(c_target, c_kernel, c_budget, c_seed);
    if (app.got_subcommand("targets-list")) return cmd_targets_list();
    std::cerr << "usage error: no command\n";
    return 1;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const TargetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
