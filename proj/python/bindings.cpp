// Python bindings for the fuzzing engine: target registry, campaigns,
// single-input replay, mutation operators, bench and the whole-vs-kernel
// comparison. Byte payloads cross the boundary as `bytes`.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetfuzz/coverage.hpp"
#include "hetfuzz/engine.hpp"
#include "hetfuzz/hdvm.hpp"
#include "hetfuzz/rng.hpp"
#include "hetfuzz/sanitizers.hpp"
#include "hetfuzz/targets.hpp"

namespace py = pybind11;
using namespace hetfuzz;

namespace {

std::vector<std::uint8_t> to_vec(const py::bytes& b) {
  std::string s = b;
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

const TargetInfo& need_target(const std::string& name) {
  const TargetInfo* info = find_target(name);
  if (!info) throw TargetError("unknown target: " + name);
  return *info;
}

const char* exit_name(hdvm::ExitKind k) {
  switch (k) {
    case hdvm::ExitKind::Clean:
      return "clean";
    case hdvm::ExitKind::HostAbort:
      return "host-abort";
    default:
      return "hard-fault";
  }
}

py::dict finding_dict(const Finding& f) {
  py::dict d;
  d["tool"] = to_string(f.tool);
  d["kind"] = to_string(f.kind);
  d["site"] = f.site;
  d["detail"] = f.detail;
  d["key"] = crash_key_hex(dedup_key(f));
  return d;
}

py::list list_targets() {
  py::list out;
  for (const auto& info : registry()) {
    py::dict d;
    d["name"] = info.program.name;
    d["summary"] = info.summary;
    d["input_format"] = info.program.input_format;
    py::list kernels;
    for (const auto& k : info.program.kernels) {
      py::dict kd;
      kd["name"] = k.name;
      kd["fuzzable"] = !k.schema.empty();
      kernels.append(kd);
    }
    d["kernels"] = kernels;
    d["has_bug"] = info.bug.has_value();
    py::list seeds;
    for (const auto& s : info.seeds) seeds.append(to_bytes(s));
    d["seeds"] = seeds;
    d["witness"] = to_bytes(info.witness);
    out.append(d);
  }
  return out;
}

py::object seeded_key_hex(const std::string& target) {
  const TargetInfo& info = need_target(target);
  if (!info.bug) return py::none();
  return py::str(crash_key_hex(seeded_key(info)));
}

py::dict campaign_dict(const CampaignResult& res) {
  py::dict d;
  d["execs"] = res.execs;
  d["virtual_time"] = res.virtual_time;
  d["sanitizer_execs"] = res.sanitizer_execs;
  d["partition_violations"] = res.partition_violations;
  d["persistent_processes"] = res.persistent_processes;
  d["host_edges"] = res.virgin.host_edges();
  d["device_edges"] = res.virgin.device_edges();
  py::list queue;
  for (const auto& q : res.queue) {
    py::dict e;
    e["id"] = q.id;
    e["input"] = to_bytes(q.input);
    e["reason"] = to_string(q.admit_reason);
    e["parent"] = q.parent ? py::object(py::int_(*q.parent)) : py::none();
    e["discovered_at"] = q.discovered_at;
    e["full_sig"] = q.full_sig;
    e["simple_sig"] = q.simple_sig;
    queue.append(e);
  }
  d["queue"] = queue;
  py::dict crashes;
  for (const auto& [key, rec] : res.crashes) {
    py::dict c = finding_dict(rec.finding);
    c["hits"] = rec.hits;
    c["first_exposed"] = rec.first_exposed;
    c["false_positive"] = rec.false_positive;
    c["input"] = to_bytes(rec.input);
    crashes[py::str(crash_key_hex(key))] = c;
  }
  d["crashes"] = crashes;
  py::list stats;
  for (const auto& row : res.stats) {
    py::dict r;
    r["virtual_time"] = row.virtual_time;
    r["execs"] = row.execs;
    r["host_edges"] = row.host_edges;
    r["device_edges"] = row.device_edges;
    r["unique_inputs"] = row.unique_inputs;
    r["crashes"] = row.crashes;
    r["sanitizer_execs"] = row.sanitizer_execs;
    stats.append(r);
  }
  d["stats"] = stats;
  return d;
}

py::dict py_run_campaign(const std::string& target, py::object seeds,
                         std::uint64_t budget, const std::string& budget_kind,
                         std::uint64_t rng_seed, const std::string& strategy,
                         bool sanitizers, bool device_coverage,
                         bool persistent, std::uint64_t persistent_loop,
                         bool sequential, int workers,
                         const std::string& out_dir,
                         std::uint64_t stats_every, const std::string& mode,
                         const std::string& kernel) {
  const TargetInfo& info = need_target(target);
  CampaignConfig cfg;
  cfg.target = target;
  if (seeds.is_none()) {
    cfg.seeds = info.seeds;
  } else {
    for (const auto& s : seeds.cast<std::vector<py::bytes>>())
      cfg.seeds.push_back(to_vec(s));
  }
  cfg.budget = budget;
  if (budget_kind == "execs")
    cfg.budget_kind = BudgetKind::Execs;
  else if (budget_kind == "vtime")
    cfg.budget_kind = BudgetKind::VirtualTime;
  else
    throw TargetError("unknown budget kind: " + budget_kind);
  cfg.rng_seed = rng_seed;
  auto st = strategy_from_name(strategy);
  if (!st) throw TargetError("unknown strategy: " + strategy);
  cfg.strategy = *st;
  cfg.sanitizers = sanitizers;
  cfg.device_coverage = device_coverage;
  cfg.persistent = persistent;
  cfg.persistent_loop = persistent_loop;
  cfg.sequential_queue = sequential;
  cfg.workers = workers;
  cfg.out_dir = out_dir;
  cfg.stats_every = stats_every;
  if (mode == "whole-program") {
    cfg.mode = Mode::WholeProgram;
  } else if (mode == "kernel-level") {
    cfg.mode = Mode::KernelLevel;
    cfg.kernel = kernel;
  } else {
    throw TargetError("unknown mode: " + mode);
  }
  return campaign_dict(run_campaign(cfg));
}

py::dict py_run_input(const std::string& target, const py::bytes& data,
                      bool shadow) {
  const TargetInfo& info = need_target(target);
  hdvm::ExecOptions opts;
  opts.shadow = shadow;
  auto rep = hdvm::execute(info.program, to_vec(data), opts);
  py::dict d;
  d["exit_kind"] = exit_name(rep.exit.kind);
  d["exit_code"] = rep.exit.code;
  d["device_triggered"] = rep.device_triggered;
  d["virtual_cost"] = rep.virtual_cost;
  ClassedTrace trace = classify_trace(rep.raw_map);
  d["nonzero_slots"] = trace.nonzero.size();
  d["full_sig"] = trace_signature(trace, SignatureMode::Full);
  d["simple_sig"] = trace_signature(trace, SignatureMode::Simple);
  py::list findings;
  if (shadow) {
    auto sweep = run_all_tools(rep);
    for (const auto& f : sweep.findings) findings.append(finding_dict(f));
    d["records_examined"] = sweep.records_examined;
  }
  d["findings"] = findings;
  return d;
}

py::list py_deterministic_mutants(const py::bytes& data) {
  py::list out;
  for (const auto& m : deterministic_mutants(to_vec(data)))
    out.append(to_bytes(m));
  return out;
}

py::bytes py_havoc(const py::bytes& data, std::uint64_t seed) {
  Rng rng(seed);
  return to_bytes(havoc_mutant(to_vec(data), rng));
}

py::bytes py_splice(const py::bytes& a, const py::bytes& b,
                    std::uint64_t seed) {
  Rng rng(seed);
  return to_bytes(splice_mutant(to_vec(a), to_vec(b), rng));
}

py::dict py_bench(const std::string& target,
                  const std::vector<py::bytes>& inputs) {
  const TargetInfo& info = need_target(target);
  std::vector<std::vector<std::uint8_t>> ins;
  for (const auto& b : inputs) ins.push_back(to_vec(b));
  auto res = bench(info.program, ins);
  py::dict d;
  d["inputs"] = res.inputs;
  d["device_inputs"] = res.device_inputs;
  py::list configs;
  for (const auto& c : res.configs) {
    py::dict e;
    e["name"] = c.name;
    e["median_all"] = c.median_all;
    e["median_device"] = c.median_device;
    configs.append(e);
  }
  d["configs"] = configs;
  return d;
}

py::dict py_compare_kernel(const std::string& target,
                           const std::string& kernel, std::uint64_t budget,
                           std::uint64_t rng_seed) {
  auto r = compare_kernel(need_target(target), kernel, budget, rng_seed);
  py::dict d;
  d["target"] = r.target;
  d["kernel"] = r.kernel;
  d["kernel_level_verdict"] = r.kernel_level_verdict;
  d["whole_program_verdict"] = r.whole_program_verdict;
  d["kernel_level_fps"] = r.kernel_level_fps;
  d["whole_program_fps"] = r.whole_program_fps;
  d["kernel_level_crashes"] = r.kernel_level_crashes;
  d["whole_program_crashes"] = r.whole_program_crashes;
  return d;
}

py::dict py_replay(const std::string& target,
                   const std::vector<py::bytes>& inputs, bool persistent,
                   std::uint64_t loop_n) {
  const TargetInfo& info = need_target(target);
  std::vector<std::vector<std::uint8_t>> ins;
  for (const auto& b : inputs) ins.push_back(to_vec(b));
  auto res = replay_sequence(info.program, ins, persistent, loop_n);
  py::dict d;
  d["total_cost"] = res.total_cost;
  d["processes"] = res.processes;
  py::list full, simple;
  for (const auto& t : res.traces) {
    full.append(trace_signature(t, SignatureMode::Full));
    simple.append(trace_signature(t, SignatureMode::Simple));
  }
  d["full_sigs"] = full;
  d["simple_sigs"] = simple;
  return d;
}

py::list py_showmap(const std::string& target,
                    const std::vector<py::bytes>& inputs) {
  const TargetInfo& info = need_target(target);
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> entries;
  std::uint64_t id = 0;
  for (const auto& b : inputs) entries.emplace_back(id++, to_vec(b));
  auto res = showmap(info.program, entries);
  py::list out;
  for (const auto& row : res.rows) {
    py::dict d;
    d["entry_id"] = row.entry_id;
    d["new_host"] = row.new_host;
    d["new_device"] = row.new_device;
    d["cum_host"] = row.cum_host;
    d["cum_device"] = row.cum_device;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "coverage-guided fuzzing engine for a simulated host-device "
            "runtime";

  py::register_exception<TargetError>(m, "TargetError", PyExc_ValueError);

  m.attr("MAP_SIZE") = kMapSize;
  m.attr("HOST_SLOTS") = kHostSlots;

  m.def("targets", &list_targets, "describe the built-in target programs");
  m.def("seeded_key_hex", &seeded_key_hex, py::arg("target"),
        "dedup key of the target's seeded bug, None for clean targets");
  m.def("run_campaign", &py_run_campaign, py::arg("target"),
        py::arg("seeds") = py::none(), py::arg("budget") = 10000,
        py::arg("budget_kind") = "execs", py::arg("rng_seed") = 1,
        py::arg("strategy") = "simple-trace", py::arg("sanitizers") = true,
        py::arg("device_coverage") = true, py::arg("persistent") = false,
        py::arg("persistent_loop") = 1000, py::arg("sequential") = false,
        py::arg("workers") = 1, py::arg("out_dir") = "",
        py::arg("stats_every") = 100, py::arg("mode") = "whole-program",
        py::arg("kernel") = "", "run one fuzzing campaign");
  m.def("run_input", &py_run_input, py::arg("target"), py::arg("data"),
        py::arg("shadow") = true,
        "execute one input; with shadow, run all sanitizer tools");
  m.def("deterministic_mutants", &py_deterministic_mutants, py::arg("data"),
        "the full deterministic mutation stage for an input");
  m.def("havoc_mutant", &py_havoc, py::arg("data"), py::arg("seed"),
        "one stacked-havoc variant drawn from a seeded rng");
  m.def("splice_mutant", &py_splice, py::arg("a"), py::arg("b"),
        py::arg("seed"), "random-cut splice of two parents");
  m.def("bench", &py_bench, py::arg("target"), py::arg("inputs"),
        "per-configuration virtual-cost medians over an input set");
  m.def("compare_kernel", &py_compare_kernel, py::arg("target"),
        py::arg("kernel"), py::arg("budget") = 20000, py::arg("rng_seed") = 1,
        "whole-program vs kernel-level campaigns on one target");
  m.def("replay_sequence", &py_replay, py::arg("target"), py::arg("inputs"),
        py::arg("persistent") = false, py::arg("loop_n") = 1000,
        "replay inputs in order, fresh-process or persistent");
  m.def("showmap", &py_showmap, py::arg("target"), py::arg("inputs"),
        "per-input new-edge counts and cumulative totals");
}
