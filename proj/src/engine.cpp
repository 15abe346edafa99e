#include "hetfuzz/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace hetfuzz {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kDetOffsetCap = 32;

constexpr std::int8_t kInteresting8[] = {-128, -1, 0, 1, 16, 32, 64, 100, 127};
constexpr std::int16_t kInteresting16[] = {-32768, -129, 128,  255,  256,
                                           512,    1000, 1024, 4096, 32767};
constexpr std::int32_t kInteresting32[] = {
    std::numeric_limits<std::int32_t>::min(),
    -100663046,
    -32769,
    32768,
    65535,
    65536,
    100663045,
    std::numeric_limits<std::int32_t>::max()};

std::uint64_t read_le(const std::uint8_t* p, unsigned width) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

void write_le(std::uint8_t* p, unsigned width, std::uint64_t v) {
  for (unsigned i = 0; i < width; ++i)
    p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Streams the deterministic stage in a fixed order; fn returns false to
// stop early (budget exhaustion).
void for_each_deterministic(
    const std::vector<std::uint8_t>& input,
    const std::function<bool(const std::vector<std::uint8_t>&)>& fn) {
  std::vector<std::uint8_t> m = input;
  const std::size_t cap = std::min(input.size(), kDetOffsetCap);

  // single-bit flips, most significant bit of each byte first
  for (std::size_t i = 0; i < cap; ++i) {
    for (int b = 7; b >= 0; --b) {
      m[i] = static_cast<std::uint8_t>(input[i] ^ (1u << b));
      if (!fn(m)) return;
      m[i] = input[i];
    }
  }

  // +/- 1..35 at 8/16/32-bit little-endian granularity
  for (unsigned width : {1u, 2u, 4u}) {
    if (input.size() < width) continue;
    std::size_t end = std::min(cap, input.size() - width + 1);
    for (std::size_t i = 0; i < end; ++i) {
      std::uint64_t orig = read_le(&input[i], width);
      std::uint64_t mask = width == 8 ? ~0ull : ((1ull << (8 * width)) - 1);
      for (std::uint64_t d = 1; d <= 35; ++d) {
        write_le(&m[i], width, (orig + d) & mask);
        if (!fn(m)) return;
        write_le(&m[i], width, (orig - d) & mask);
        if (!fn(m)) return;
      }
      write_le(&m[i], width, orig);
    }
  }

  // interesting constants at the same widths, skipping no-op overwrites
  auto interesting_pass = [&](unsigned width, auto const& values) -> bool {
    if (input.size() < width) return true;
    std::size_t end = std::min(cap, input.size() - width + 1);
    for (std::size_t i = 0; i < end; ++i) {
      std::uint64_t orig = read_le(&input[i], width);
      std::uint64_t mask = ((width == 8) ? ~0ull : ((1ull << (8 * width)) - 1));
      for (auto vv : values) {
        std::uint64_t v = static_cast<std::uint64_t>(vv) & mask;
        if (v == orig) continue;
        write_le(&m[i], width, v);
        if (!fn(m)) return false;
      }
      write_le(&m[i], width, orig);
    }
    return true;
  };
  if (!interesting_pass(1, kInteresting8)) return;
  if (!interesting_pass(2, kInteresting16)) return;
  if (!interesting_pass(4, kInteresting32)) return;
}

}  // namespace

std::vector<std::vector<std::uint8_t>> deterministic_mutants(
    const std::vector<std::uint8_t>& input) {
  std::vector<std::vector<std::uint8_t>> out;
  for_each_deterministic(input, [&](const std::vector<std::uint8_t>& m) {
    out.push_back(m);
    return true;
  });
  return out;
}

std::vector<std::uint8_t> havoc_mutant(const std::vector<std::uint8_t>& input,
                                       Rng& rng) {
  std::vector<std::uint8_t> v = input;
  std::uint64_t ops = 1 + rng.below(64);
  for (std::uint64_t op = 0; op < ops; ++op) {
    if (v.empty()) {
      std::size_t n = 1 + rng.below(8);
      for (std::size_t i = 0; i < n; ++i)
        v.push_back(static_cast<std::uint8_t>(rng.below(256)));
      continue;
    }
    switch (rng.below(9)) {
      case 0: {  // flip one bit
        std::uint64_t pos = rng.below(v.size() * 8);
        v[pos / 8] ^= static_cast<std::uint8_t>(0x80u >> (pos % 8));
        break;
      }
      case 1:  // random byte value
        v[rng.below(v.size())] = static_cast<std::uint8_t>(rng.below(256));
        break;
      case 2: {  // byte +/- delta
        std::uint8_t d = static_cast<std::uint8_t>(rng.between(1, 35));
        std::uint8_t& b = v[rng.below(v.size())];
        b = static_cast<std::uint8_t>(rng.chance(1, 2) ? b + d : b - d);
        break;
      }
      case 3: {  // interesting 16-bit overwrite
        if (v.size() < 2) break;
        std::size_t off = rng.below(v.size() - 1);
        auto val = kInteresting16[rng.below(std::size(kInteresting16))];
        write_le(&v[off], 2, static_cast<std::uint16_t>(val));
        break;
      }
      case 4: {  // interesting 32-bit overwrite
        if (v.size() < 4) break;
        std::size_t off = rng.below(v.size() - 3);
        auto val = kInteresting32[rng.below(std::size(kInteresting32))];
        write_le(&v[off], 4, static_cast<std::uint32_t>(val));
        break;
      }
      case 5: {  // delete a block
        if (v.size() < 2) break;
        std::size_t off = rng.below(v.size());
        std::size_t max_n =
            std::min(v.size() - off, std::max<std::size_t>(1, v.size() / 4));
        std::size_t n = 1 + rng.below(max_n);
        v.erase(v.begin() + off, v.begin() + off + n);
        break;
      }
      case 6: {  // duplicate a block elsewhere
        std::size_t src = rng.below(v.size());
        std::size_t n = 1 + rng.below(std::min<std::size_t>(v.size() - src, 16));
        std::size_t dst = rng.below(v.size() + 1);
        std::vector<std::uint8_t> block(v.begin() + src, v.begin() + src + n);
        v.insert(v.begin() + dst, block.begin(), block.end());
        break;
      }
      case 7: {  // constant fill
        std::size_t off = rng.below(v.size());
        std::size_t n = 1 + rng.below(std::min<std::size_t>(v.size() - off, 16));
        std::uint8_t b = static_cast<std::uint8_t>(rng.below(256));
        std::fill(v.begin() + off, v.begin() + off + n, b);
        break;
      }
      case 8: {  // swap two bytes
        std::size_t i = rng.below(v.size());
        std::size_t j = rng.below(v.size());
        std::swap(v[i], v[j]);
        break;
      }
    }
    if (v.size() > kMaxInputBytes) v.resize(kMaxInputBytes);
  }
  return v;
}

std::vector<std::uint8_t> splice_mutant(const std::vector<std::uint8_t>& a,
                                        const std::vector<std::uint8_t>& b,
                                        Rng& rng) {
  std::size_t ca = rng.below(a.size() + 1);
  std::size_t cb = rng.below(b.size() + 1);
  std::vector<std::uint8_t> v(a.begin(), a.begin() + ca);
  v.insert(v.end(), b.begin() + cb, b.end());
  if (v.size() > kMaxInputBytes) v.resize(kMaxInputBytes);
  return v;
}

const char* to_string(AdmitReason r) {
  switch (r) {
    case AdmitReason::Seed:
      return "seed";
    case AdmitReason::NewEdges:
      return "new-edges";
    case AdmitReason::NewCounts:
      return "new-counts";
  }
  return "?";
}

// --- kernel-level harness ----------------------------------------------------

hdvm::TargetProgram kernel_harness(const TargetInfo& info,
                                   const std::string& kernel) {
  const hdvm::KernelDescriptor* kd = info.program.find_kernel(kernel);
  if (!kd)
    throw TargetError("unknown kernel: " + kernel);
  if (kd->schema.empty())
    throw TargetError("kernel has no parameter schema: " + kernel);

  hdvm::TargetProgram t;
  t.name = info.program.name;  // findings stay comparable across modes
  t.kernels = {*kd};
  t.invariants = info.program.invariants;
  std::string names;
  for (const auto& p : kd->schema)
    names += (names.empty() ? "" : ", ") + p.name;
  t.input_format = "u32le per parameter: " + names;

  hdvm::KernelDescriptor k = *kd;
  t.host_proc = [k](hdvm::HostCtx& h) {
    using Bind = hdvm::ParamSpec::Bind;
    h.routine("kernelHarness");
    h.edge(1);
    hdvm::LaunchConfig cfg{{1, 1, 1}, {1, 1, 1}};
    std::vector<std::uint64_t> scalars(k.arg_count, 0);
    std::vector<std::uint64_t> buffer_bytes(k.arg_count, 0);
    std::vector<bool> is_buffer(k.arg_count, false);
    for (std::size_t i = 0; i < k.schema.size(); ++i) {
      const auto& p = k.schema[i];
      std::uint32_t v = 0;
      if (!h.input_u32(i * 4, &v)) {
        h.edge(2);
        h.exit(1);
      }
      if (v < p.lo || v > p.hi) {
        h.edge(3);
        h.exit(1);
      }
      switch (p.bind) {
        case Bind::GridX: cfg.grid.x = v; break;
        case Bind::GridY: cfg.grid.y = v; break;
        case Bind::GridZ: cfg.grid.z = v; break;
        case Bind::BlockX: cfg.block.x = v; break;
        case Bind::BlockY: cfg.block.y = v; break;
        case Bind::BlockZ: cfg.block.z = v; break;
        case Bind::Scalar:
          scalars[p.arg_index] = v;
          break;
        case Bind::BufferLen:
          buffer_bytes[p.arg_index] = std::uint64_t{v} * p.elem_width;
          is_buffer[p.arg_index] = true;
          break;
      }
    }
    h.edge(4);
    std::vector<hdvm::KernelArg> args;
    for (std::uint32_t a = 0; a < k.arg_count; ++a) {
      if (is_buffer[a]) {
        hdvm::Handle buf = h.device_alloc(buffer_bytes[a]);
        h.device_memset(buf, 0, buffer_bytes[a]);  // fully initialized
        args.push_back(hdvm::KernelArg::make_buffer(buf));
      } else {
        args.push_back(hdvm::KernelArg::make_scalar(scalars[a]));
      }
    }
    h.launch(k.name, cfg, std::move(args));
    h.exit(0);
  };
  t.persistent_proc = hdvm::wrap_persistent(t.host_proc);
  return t;
}

std::vector<std::uint8_t> kernel_seed_input(const TargetInfo& info,
                                            const std::string& kernel) {
  const hdvm::KernelDescriptor* kd = info.program.find_kernel(kernel);
  if (!kd || kd->schema.empty())
    throw TargetError("kernel has no parameter schema: " + kernel);
  std::vector<std::uint8_t> v;
  for (const auto& p : kd->schema) {
    v.resize(v.size() + 4);
    write_le(&v[v.size() - 4], 4, p.seed_value);
  }
  return v;
}

// --- campaign ----------------------------------------------------------------

namespace {

struct SanJob {
  std::vector<std::uint8_t> input;
  std::uint64_t dispatch_vtime = 0;
};

struct Campaign {
  const CampaignConfig& cfg;
  hdvm::TargetProgram program;
  std::vector<hdvm::HostInvariant> invariants;  // for the fuzzed kernel
  Rng rng;
  CampaignResult res;
  std::set<std::uint64_t> full_sigs, simple_sigs;
  std::vector<bool> det_done;
  std::deque<std::size_t> fresh;
  std::size_t cursor = 0;
  std::unique_ptr<hdvm::PersistentSession> session;
  hdvm::ExecOptions exec_opts;
  std::vector<SanJob> pending;
  std::uint64_t next_stats;
  bool stop = false;
  // favored-entry thresholds
  std::uint64_t len_median = 0, cost_median = 0;
  bool have_medians = false;
  std::uint64_t medians_at_execs = 0;
  std::size_t medians_at_queue = 0;

  explicit Campaign(const CampaignConfig& c)
      : cfg(c), rng(c.rng_seed), next_stats(c.stats_every) {
    const TargetInfo* info = find_target(c.target);
    if (!info) throw TargetError("unknown target: " + c.target);
    if (c.mode == Mode::KernelLevel) {
      program = kernel_harness(*info, c.kernel);
      for (const auto& inv : program.invariants)
        if (inv.kernel == c.kernel) invariants.push_back(inv);
    } else {
      program = info->program;
    }
    exec_opts.host_coverage = true;
    exec_opts.device_coverage = c.device_coverage;
    exec_opts.shadow = false;
    if (c.persistent)
      session = std::make_unique<hdvm::PersistentSession>(program, exec_opts,
                                                          c.persistent_loop);
  }

  bool budget_spent() const {
    return cfg.budget_kind == BudgetKind::Execs
               ? res.execs >= cfg.budget
               : res.virtual_time >= cfg.budget;
  }

  bool launch_violates_invariants(const hdvm::ExecutionReport& rep) const {
    if (cfg.mode != Mode::KernelLevel) return false;
    for (const auto& launch : rep.launch_log)
      for (const auto& inv : invariants)
        if (!inv.holds(launch.cfg, launch.args_view)) return true;
    return false;
  }

  void record_finding(Finding f, const std::vector<std::uint8_t>& input,
                      std::uint64_t vtime, bool false_positive) {
    f.input_ref = hash_input(input);
    f.vtime = vtime;
    std::uint64_t key = dedup_key(f);
    auto it = res.crashes.find(key);
    if (it == res.crashes.end()) {
      CrashRecord rec;
      rec.finding = std::move(f);
      rec.input = input;
      rec.first_exposed = vtime;
      rec.false_positive = false_positive;
      res.crashes.emplace(key, std::move(rec));
    } else {
      ++it->second.hits;
      // a legitimate exposure upgrades a false-positive-only record
      if (!false_positive) it->second.false_positive = false;
    }
  }

  void drain_sanitizers() {
    if (pending.empty()) return;
    struct JobOut {
      hdvm::ExecutionReport rep;
      SanitizerSweep sweep;
    };
    std::vector<JobOut> done(pending.size());
    hdvm::ExecOptions shadow_opts;
    shadow_opts.host_coverage = false;
    shadow_opts.device_coverage = false;
    shadow_opts.shadow = true;
    auto run_job = [&](std::size_t i) {
      done[i].rep = hdvm::execute(program, pending[i].input, shadow_opts);
      done[i].sweep = run_all_tools(done[i].rep);
    };
    std::size_t k = std::max(1, cfg.workers);
    if (k <= 1) {
      for (std::size_t i = 0; i < pending.size(); ++i) run_job(i);
    } else {
      for (std::size_t base = 0; base < pending.size(); base += k) {
        std::vector<std::thread> pool;
        for (std::size_t i = base; i < std::min(base + k, pending.size()); ++i)
          pool.emplace_back(run_job, i);
        for (auto& th : pool) th.join();
      }
    }
    // results land in dispatch order regardless of worker count
    for (std::size_t i = 0; i < pending.size(); ++i) {
      ++res.sanitizer_execs;
      res.virtual_time +=
          done[i].rep.virtual_cost + done[i].sweep.records_examined;
      bool fp = launch_violates_invariants(done[i].rep);
      for (auto& f : done[i].sweep.findings)
        record_finding(std::move(f), pending[i].input,
                       pending[i].dispatch_vtime, fp);
    }
    pending.clear();
  }

  void emit_stats() {
    drain_sanitizers();
    StatsRow row;
    row.virtual_time = res.virtual_time;
    row.execs = res.execs;
    row.host_edges = res.virgin.host_edges();
    row.device_edges = res.virgin.device_edges();
    row.unique_inputs = res.queue.size();
    row.crashes = res.crashes.size();
    row.sanitizer_execs = res.sanitizer_execs;
    res.stats.push_back(row);
  }

  void admit(const std::vector<std::uint8_t>& input, std::uint64_t full,
             std::uint64_t simple, AdmitReason reason,
             std::optional<std::uint64_t> parent, std::uint64_t cost) {
    QueueEntry e;
    e.id = res.queue.size();
    e.input = input;
    e.full_sig = full;
    e.simple_sig = simple;
    e.admit_reason = reason;
    e.discovered_at = res.virtual_time;
    e.parent = parent;
    e.exec_cost = cost;
    res.queue.push_back(std::move(e));
    det_done.push_back(false);
    fresh.push_back(res.queue.size() - 1);
  }

  // Runs one input through the pipeline. Returns false once the budget is
  // exhausted.
  bool run_one(const std::vector<std::uint8_t>& input,
               std::optional<std::uint64_t> parent, bool force_admit) {
    if (stop || budget_spent()) {
      stop = true;
      return false;
    }
    hdvm::ExecutionReport rep =
        session ? session->run(input) : hdvm::execute(program, input, exec_opts);
    ++res.execs;
    res.virtual_time += rep.virtual_cost;
    res.partition_violations += rep.raw_map.host_partition_violations() +
                                rep.raw_map.device_partition_violations();

    ClassedTrace trace = classify_trace(rep.raw_map);
    std::uint64_t full = trace_signature(trace, SignatureMode::Full);
    std::uint64_t simple = trace_signature(trace, SignatureMode::Simple);
    bool full_seen = full_sigs.count(full) > 0;
    bool simple_seen = simple_sigs.count(simple) > 0;
    Admit adm = has_new_bits(trace, res.virgin);
    full_sigs.insert(full);
    simple_sigs.insert(simple);

    if (force_admit) {
      admit(input, full, simple, AdmitReason::Seed, parent, rep.virtual_cost);
    } else if (adm == Admit::NewEdges) {
      admit(input, full, simple, AdmitReason::NewEdges, parent,
            rep.virtual_cost);
    } else if (adm == Admit::NewCounts) {
      admit(input, full, simple, AdmitReason::NewCounts, parent,
            rep.virtual_cost);
    }

    if (rep.exit.kind != hdvm::ExitKind::Clean) {
      if (auto crash = derive_crash_finding(rep))
        record_finding(std::move(*crash), input, res.virtual_time,
                       launch_violates_invariants(rep));
    }

    if (cfg.sanitizers &&
        should_sanitize(cfg.strategy, adm, full_seen, simple_seen)) {
      pending.push_back({input, res.virtual_time});
      if (pending.size() >= static_cast<std::size_t>(std::max(1, cfg.workers)))
        drain_sanitizers();
    }

    if (res.execs >= next_stats) {
      emit_stats();
      next_stats += cfg.stats_every;
    }
    return !budget_spent();
  }

  void refresh_medians() {
    if (have_medians && res.execs - medians_at_execs < 4096 &&
        res.queue.size() - medians_at_queue < 64)
      return;
    std::vector<std::uint64_t> lens, costs;
    lens.reserve(res.queue.size());
    costs.reserve(res.queue.size());
    for (const auto& e : res.queue) {
      lens.push_back(e.input.size());
      costs.push_back(e.exec_cost);
    }
    std::sort(lens.begin(), lens.end());
    std::sort(costs.begin(), costs.end());
    len_median = lens[(lens.size() - 1) / 2];
    cost_median = costs[(costs.size() - 1) / 2];
    have_medians = true;
    medians_at_execs = res.execs;
    medians_at_queue = res.queue.size();
  }

  bool favored(std::size_t idx) {
    refresh_medians();
    return res.queue[idx].input.size() <= len_median &&
           res.queue[idx].exec_cost <= cost_median;
  }

  std::size_t pick_entry() {
    if (!cfg.sequential_queue && !fresh.empty()) {
      std::size_t idx = fresh.front();
      fresh.pop_front();
      return idx;
    }
    std::size_t idx = cursor % res.queue.size();
    ++cursor;
    return idx;
  }

  void fuzz_entry(std::size_t idx) {
    // the queue grows while mutants run; keep stable copies
    const std::vector<std::uint8_t> input = res.queue[idx].input;
    const std::uint64_t id = res.queue[idx].id;

    if (!det_done[idx]) {
      det_done[idx] = true;
      for_each_deterministic(input, [&](const std::vector<std::uint8_t>& m) {
        return run_one(m, id, false);
      });
      if (stop) return;
    }

    int mult = favored(idx) ? 2 : 1;
    for (int i = 0; i < 48 * mult && !stop; ++i)
      run_one(havoc_mutant(input, rng), id, false);
    for (int i = 0; i < 16 * mult && !stop; ++i) {
      const auto& other = res.queue[rng.below(res.queue.size())];
      run_one(splice_mutant(input, other.input, rng), id, false);
    }
  }

  CampaignResult run() {
    // seeds are force-admitted; identical duplicates collapse to one entry
    std::set<std::uint64_t> seed_hashes;
    for (const auto& s : cfg.seeds) {
      if (!seed_hashes.insert(hash_input(s)).second) continue;
      if (!run_one(s, std::nullopt, true)) break;
    }
    while (!stop && !res.queue.empty()) fuzz_entry(pick_entry());
    drain_sanitizers();
    emit_stats();
    if (session) res.persistent_processes = session->processes_started();
    return std::move(res);
  }
};

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg) {
  if (cfg.seeds.empty() || cfg.seeds.size() > 5)
    throw TargetError("campaign needs 1 to 5 seeds");
  Campaign c(cfg);
  CampaignResult res = c.run();
  if (!cfg.out_dir.empty()) write_out_dir(cfg.out_dir, cfg, res);
  return res;
}

// --- replay ------------------------------------------------------------------

ReplayResult replay_sequence(const hdvm::TargetProgram& target,
                             const std::vector<std::vector<std::uint8_t>>& ins,
                             bool persistent, std::uint64_t loop_n,
                             bool device_coverage) {
  hdvm::ExecOptions opts;
  opts.host_coverage = true;
  opts.device_coverage = device_coverage;
  ReplayResult out;
  if (persistent) {
    hdvm::PersistentSession session(target, opts, loop_n);
    for (const auto& in : ins) {
      auto rep = session.run(in);
      out.total_cost += rep.virtual_cost;
      out.traces.push_back(classify_trace(rep.raw_map));
    }
    out.processes = session.processes_started();
  } else {
    for (const auto& in : ins) {
      auto rep = hdvm::execute(target, in, opts);
      out.total_cost += rep.virtual_cost;
      out.traces.push_back(classify_trace(rep.raw_map));
      ++out.processes;
    }
  }
  return out;
}

// --- reporting ---------------------------------------------------------------

std::string crash_key_hex(std::uint64_t key) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(key));
  return buf;
}

std::string plot_data_csv(const std::vector<StatsRow>& rows) {
  std::ostringstream os;
  os << "virtual_time,execs,host_edges,device_edges,unique_inputs,crashes,"
        "sanitizer_execs\n";
  for (const auto& r : rows)
    os << r.virtual_time << ',' << r.execs << ',' << r.host_edges << ','
       << r.device_edges << ',' << r.unique_inputs << ',' << r.crashes << ','
       << r.sanitizer_execs << '\n';
  return os.str();
}

std::string crash_report_text(const CrashRecord& rec) {
  std::ostringstream os;
  os << "tool: " << to_string(rec.finding.tool) << '\n';
  os << "kind: " << to_string(rec.finding.kind) << '\n';
  os << "site:";
  for (const auto& frame : rec.finding.site) os << ' ' << frame;
  os << '\n';
  os << "detail: " << rec.finding.detail << '\n';
  os << "input_ref: " << crash_key_hex(rec.finding.input_ref) << '\n';
  os << "virtual_time: " << rec.first_exposed << '\n';
  os << "hits: " << rec.hits << '\n';
  os << "false_positive: " << (rec.false_positive ? "yes" : "no") << '\n';
  return os.str();
}

std::string campaign_json(const CampaignConfig& cfg,
                          const CampaignResult& res) {
  json j;
  j["target"] = cfg.target;
  j["mode"] = cfg.mode == Mode::KernelLevel ? "kernel-level" : "whole-program";
  if (cfg.mode == Mode::KernelLevel) j["kernel"] = cfg.kernel;
  j["strategy"] = to_string(cfg.strategy);
  j["rng_seed"] = cfg.rng_seed;
  j["budget"] = {{"kind", cfg.budget_kind == BudgetKind::Execs ? "execs"
                                                               : "virtual-time"},
                 {"value", cfg.budget}};
  j["sanitizers"] = cfg.sanitizers;
  j["device_coverage"] = cfg.device_coverage;
  j["persistent"] =
      json{{"enabled", cfg.persistent}, {"loop", cfg.persistent_loop}};
  j["sequential_queue"] = cfg.sequential_queue;
  j["workers"] = cfg.workers;

  json totals;
  totals["execs"] = res.execs;
  totals["virtual_time"] = res.virtual_time;
  totals["sanitizer_execs"] = res.sanitizer_execs;
  totals["unique_inputs"] = res.queue.size();
  totals["host_edges"] = res.virgin.host_edges();
  totals["device_edges"] = res.virgin.device_edges();
  totals["partition_violations"] = res.partition_violations;
  totals["persistent_processes"] = res.persistent_processes;
  j["totals"] = totals;

  std::map<std::string, std::uint64_t> per_tool;
  json crashes = json::array();
  for (const auto& [key, rec] : res.crashes) {
    ++per_tool[to_string(rec.finding.tool)];
    crashes.push_back({{"key", crash_key_hex(key)},
                       {"tool", to_string(rec.finding.tool)},
                       {"kind", to_string(rec.finding.kind)},
                       {"site", rec.finding.site},
                       {"first_exposed", rec.first_exposed},
                       {"hits", rec.hits},
                       {"false_positive", rec.false_positive}});
  }
  j["crashes"] = crashes;
  j["findings_per_tool"] = per_tool;
  return j.dump(2) + "\n";
}

void write_out_dir(const std::string& dir, const CampaignConfig& cfg,
                   const CampaignResult& res) {
  fs::create_directories(fs::path(dir) / "queue");
  fs::create_directories(fs::path(dir) / "crashes");

  for (const auto& e : res.queue) {
    char name[32];
    std::snprintf(name, sizeof name, "id_%06llu.bin",
                  static_cast<unsigned long long>(e.id));
    std::ofstream f(fs::path(dir) / "queue" / name, std::ios::binary);
    f.write(reinterpret_cast<const char*>(e.input.data()),
            static_cast<std::streamsize>(e.input.size()));
  }

  for (const auto& [key, rec] : res.crashes) {
    fs::path cdir = fs::path(dir) / "crashes" / crash_key_hex(key);
    fs::create_directories(cdir);
    {
      std::ofstream f(cdir / "input.bin", std::ios::binary);
      f.write(reinterpret_cast<const char*>(rec.input.data()),
              static_cast<std::streamsize>(rec.input.size()));
    }
    std::ofstream f(cdir / "report.txt");
    f << crash_report_text(rec);
  }

  {
    std::ofstream f(fs::path(dir) / "plot_data.csv");
    f << plot_data_csv(res.stats);
  }
  std::ofstream f(fs::path(dir) / "campaign.json");
  f << campaign_json(cfg, res);
}

// --- showmap -----------------------------------------------------------------

ShowmapResult showmap(
    const hdvm::TargetProgram& target,
    const std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>>&
        entries) {
  ShowmapResult out;
  std::vector<bool> seen(kMapSize, false);
  std::uint64_t cum_host = 0, cum_device = 0;
  for (const auto& [id, input] : entries) {
    auto rep = hdvm::execute(target, input);
    ClassedTrace trace = classify_trace(rep.raw_map);
    ShowmapRow row;
    row.entry_id = id;
    for (std::uint32_t idx : trace.nonzero) {
      if (seen[idx]) continue;
      seen[idx] = true;
      if (idx < kHostSlots) {
        ++row.new_host;
        ++cum_host;
      } else {
        ++row.new_device;
        ++cum_device;
      }
    }
    row.cum_host = cum_host;
    row.cum_device = cum_device;
    out.rows.push_back(row);
    out.traces.emplace_back(id, std::move(trace));
  }
  return out;
}

std::string showmap_csv(const ShowmapResult& res) {
  std::ostringstream os;
  os << "entry_id,new_host,new_device,cum_host,cum_device\n";
  for (const auto& r : res.rows)
    os << r.entry_id << ',' << r.new_host << ',' << r.new_device << ','
       << r.cum_host << ',' << r.cum_device << '\n';
  return os.str();
}

std::string classed_map_text(const ClassedTrace& trace) {
  std::ostringstream os;
  for (std::uint32_t idx : trace.nonzero) {
    char line[32];
    std::snprintf(line, sizeof line, "%06u:%u\n", idx,
                  unsigned{trace.classed[idx]});
    os << line;
  }
  return os.str();
}

// --- bench -------------------------------------------------------------------

namespace {

std::uint64_t median_of(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace

BenchResult bench(const hdvm::TargetProgram& target,
                  const std::vector<std::vector<std::uint8_t>>& inputs) {
  BenchResult out;
  out.inputs = inputs.size();

  struct Sample {
    bool device = false;
    std::uint64_t vanilla = 0, host_cov = 0, host_device_cov = 0;
    std::uint64_t tool[4] = {0, 0, 0, 0};
  };
  std::vector<Sample> samples;

  for (const auto& in : inputs) {
    Sample s;
    hdvm::ExecOptions o;
    o.host_coverage = false;
    o.device_coverage = false;
    auto base = hdvm::execute(target, in, o);
    s.vanilla = base.virtual_cost;
    s.device = base.device_triggered;

    o.host_coverage = true;
    s.host_cov = hdvm::execute(target, in, o).virtual_cost;

    o.device_coverage = true;
    s.host_device_cov = hdvm::execute(target, in, o).virtual_cost;

    hdvm::ExecOptions sh;
    sh.host_coverage = false;
    sh.device_coverage = false;
    sh.shadow = true;
    auto shadow = hdvm::execute(target, in, sh);
    std::uint64_t shadow_cost = shadow.virtual_cost;
    std::uint64_t records[4] = {
        shadow.host_access_log.size(), shadow.device_access_log.size(),
        shadow.device_access_log.size(), 0};
    for (const auto& blk : shadow.shared_logs) records[3] += blk.records.size();
    for (int t = 0; t < 4; ++t) s.tool[t] = shadow_cost + records[t];
    samples.push_back(s);
  }

  auto push_config = [&](const std::string& name, auto getter) {
    std::vector<std::uint64_t> all, dev;
    for (const auto& s : samples) {
      all.push_back(getter(s));
      if (s.device) dev.push_back(getter(s));
    }
    out.configs.push_back({name, median_of(all), median_of(dev)});
  };
  push_config("vanilla", [](const Sample& s) { return s.vanilla; });
  push_config("host-cov", [](const Sample& s) { return s.host_cov; });
  push_config("host-device-cov",
              [](const Sample& s) { return s.host_device_cov; });
  push_config("hostcheck", [](const Sample& s) { return s.tool[0]; });
  push_config("memcheck", [](const Sample& s) { return s.tool[1]; });
  push_config("initcheck", [](const Sample& s) { return s.tool[2]; });
  push_config("racecheck", [](const Sample& s) { return s.tool[3]; });

  for (const auto& s : samples)
    if (s.device) ++out.device_inputs;
  return out;
}

std::string bench_csv(const BenchResult& res) {
  // throughput derives from the median: executions per million cost units
  auto per_munit = [](std::uint64_t median) {
    return median ? 1000000 / median : 0;
  };
  std::ostringstream os;
  os << "config,median_all,execs_per_munit_all,median_device,"
        "execs_per_munit_device\n";
  for (const auto& c : res.configs)
    os << c.name << ',' << c.median_all << ',' << per_munit(c.median_all)
       << ',' << c.median_device << ',' << per_munit(c.median_device) << '\n';
  return os.str();
}

// --- compare-kernel ----------------------------------------------------------

namespace {

bool matches_bug(const Finding& f, const SeededBug& bug) {
  return f.tool == bug.tool && f.kind == bug.kind && f.site.size() >= 2 &&
         f.site[1] == bug.where;
}

}  // namespace

CompareKernelResult compare_kernel(const TargetInfo& info,
                                   const std::string& kernel,
                                   std::uint64_t budget,
                                   std::uint64_t rng_seed) {
  CompareKernelResult out;
  out.target = info.program.name;
  out.kernel = kernel;

  CampaignConfig kcfg;
  kcfg.target = info.program.name;
  kcfg.mode = Mode::KernelLevel;
  kcfg.kernel = kernel;
  kcfg.seeds = {kernel_seed_input(info, kernel)};
  kcfg.budget = budget;
  kcfg.rng_seed = rng_seed;
  auto kres = run_campaign(kcfg);

  CampaignConfig wcfg;
  wcfg.target = info.program.name;
  wcfg.seeds = info.seeds;
  wcfg.budget = budget;
  wcfg.rng_seed = rng_seed;
  auto wres = run_campaign(wcfg);

  auto verdict = [&](const CampaignResult& res) -> std::string {
    if (!info.bug) return "n-a";
    for (const auto& [key, rec] : res.crashes)
      if (!rec.false_positive && matches_bug(rec.finding, *info.bug))
        return "found";
    return "missed";
  };
  auto fp_count = [](const CampaignResult& res) {
    std::uint64_t n = 0;
    for (const auto& [key, rec] : res.crashes)
      if (rec.false_positive) ++n;
    return n;
  };

  out.kernel_level_verdict = verdict(kres);
  out.whole_program_verdict = verdict(wres);
  out.kernel_level_fps = fp_count(kres);
  out.whole_program_fps = fp_count(wres);
  out.kernel_level_crashes = kres.crashes.size();
  out.whole_program_crashes = wres.crashes.size();
  return out;
}

std::string compare_kernel_text(const CompareKernelResult& r) {
  std::ostringstream os;
  os << "target: " << r.target << "  kernel: " << r.kernel << '\n';
  os << "seeded defect: kernel-level " << r.kernel_level_verdict
     << ", whole-program " << r.whole_program_verdict << '\n';
  os << "false positives: kernel-level " << r.kernel_level_fps
     << ", whole-program " << r.whole_program_fps << '\n';
  os << "distinct findings: kernel-level " << r.kernel_level_crashes
     << ", whole-program " << r.whole_program_crashes << '\n';
  return os.str();
}

}  // namespace hetfuzz
