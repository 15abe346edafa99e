#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetfuzz/coverage.hpp"
#include "hetfuzz/hdvm.hpp"
#include "hetfuzz/rng.hpp"
#include "hetfuzz/sanitizers.hpp"
#include "hetfuzz/targets.hpp"

namespace hetfuzz {

inline constexpr std::size_t kMaxInputBytes = 1 << 20;

// --- mutation ---------------------------------------------------------------

// Deterministic per-entry stage: every single-bit flip (most significant
// bit of byte 0 first), then +/-1..35 arithmetic and interesting-value
// overwrites at 8/16/32-bit little-endian granularity. Offsets are capped
// to the first 32 bytes, where every built-in target keeps its header.
std::vector<std::vector<std::uint8_t>> deterministic_mutants(
    const std::vector<std::uint8_t>& input);

// One stacked-havoc variant: 1..64 random edits drawn from the op table.
std::vector<std::uint8_t> havoc_mutant(const std::vector<std::uint8_t>& input,
                                       Rng& rng);

// Random-cut splice of two parents (head of a, tail of b).
std::vector<std::uint8_t> splice_mutant(const std::vector<std::uint8_t>& a,
                                        const std::vector<std::uint8_t>& b,
                                        Rng& rng);

// --- campaign ---------------------------------------------------------------

enum class Mode : std::uint8_t { WholeProgram, KernelLevel };
enum class BudgetKind : std::uint8_t { Execs, VirtualTime };

enum class AdmitReason : std::uint8_t { Seed, NewEdges, NewCounts };
const char* to_string(AdmitReason r);

struct CampaignConfig {
  std::string target;
  std::vector<std::vector<std::uint8_t>> seeds;  // 1..5 inputs
  std::uint64_t rng_seed = 1;
  Strategy strategy = Strategy::SimpleTrace;
  Mode mode = Mode::WholeProgram;
  std::string kernel;  // KernelLevel: the one kernel under test
  bool sanitizers = true;
  bool device_coverage = true;
  bool persistent = false;
  std::uint64_t persistent_loop = 1000;
  BudgetKind budget_kind = BudgetKind::Execs;
  std::uint64_t budget = 10000;
  bool sequential_queue = false;  // strict id order instead of round-robin
  int workers = 1;                // concurrent sanitizer jobs
  std::string out_dir;            // empty: keep results in memory only
  std::uint64_t stats_every = 100;  // execs between plot rows
};

struct QueueEntry {
  std::uint64_t id = 0;  // monotone admission index
  std::vector<std::uint8_t> input;
  std::uint64_t full_sig = 0;
  std::uint64_t simple_sig = 0;
  AdmitReason admit_reason = AdmitReason::Seed;
  std::uint64_t discovered_at = 0;  // virtual time
  std::optional<std::uint64_t> parent;
  std::uint64_t exec_cost = 0;  // virtual cost of the discovering run
};

struct CrashRecord {
  Finding finding;  // first exposure; vtime/input_ref filled in
  std::vector<std::uint8_t> input;
  std::uint64_t first_exposed = 0;  // virtual time
  std::uint64_t hits = 1;
  bool false_positive = false;  // KernelLevel: invariants violated at exposure
};

struct StatsRow {
  std::uint64_t virtual_time = 0;
  std::uint64_t execs = 0;
  std::uint64_t host_edges = 0;
  std::uint64_t device_edges = 0;
  std::uint64_t unique_inputs = 0;
  std::uint64_t crashes = 0;
  std::uint64_t sanitizer_execs = 0;
};

struct CampaignResult {
  std::vector<QueueEntry> queue;
  std::map<std::uint64_t, CrashRecord> crashes;  // dedup key -> record
  std::vector<StatsRow> stats;
  VirginMap virgin;
  std::uint64_t execs = 0;
  std::uint64_t virtual_time = 0;
  std::uint64_t sanitizer_execs = 0;
  std::uint64_t partition_violations = 0;
  std::uint64_t persistent_processes = 0;  // persistent mode only
};

CampaignResult run_campaign(const CampaignConfig& cfg);

// Synthetic single-kernel harness: decodes one u32le per schema parameter,
// rejects out-of-range values without launching, allocates fully
// initialized buffers and launches the kernel once. The returned program
// keeps the original target name so finding identities line up across
// modes; the original invariants ride along for false-positive marking.
hdvm::TargetProgram kernel_harness(const TargetInfo& info,
                                   const std::string& kernel);
// The schema-derived seed input for that harness.
std::vector<std::uint8_t> kernel_seed_input(const TargetInfo& info,
                                            const std::string& kernel);

// --- replay helpers ---------------------------------------------------------

struct ReplayResult {
  std::vector<ClassedTrace> traces;  // one per input, in order
  std::uint64_t total_cost = 0;
  std::uint64_t processes = 0;  // 1 per input fresh, fewer persistent
};

// Runs a fixed input sequence with both coverages on, either one fresh
// process per input or one persistent session over the whole sequence.
ReplayResult replay_sequence(const hdvm::TargetProgram& target,
                             const std::vector<std::vector<std::uint8_t>>& ins,
                             bool persistent, std::uint64_t loop_n = 1000,
                             bool device_coverage = true);

// --- reporting --------------------------------------------------------------

std::string crash_key_hex(std::uint64_t key);
std::string plot_data_csv(const std::vector<StatsRow>& rows);
std::string crash_report_text(const CrashRecord& rec);
std::string campaign_json(const CampaignConfig& cfg,
                          const CampaignResult& res);

// Writes queue/, crashes/, plot_data.csv and campaign.json under dir.
void write_out_dir(const std::string& dir, const CampaignConfig& cfg,
                   const CampaignResult& res);

// --- showmap ----------------------------------------------------------------

struct ShowmapRow {
  std::uint64_t entry_id = 0;
  std::uint64_t new_host = 0;
  std::uint64_t new_device = 0;
  std::uint64_t cum_host = 0;
  std::uint64_t cum_device = 0;
};

struct ShowmapResult {
  std::vector<ShowmapRow> rows;
  std::vector<std::pair<std::uint64_t, ClassedTrace>> traces;  // id, trace
};

ShowmapResult showmap(const hdvm::TargetProgram& target,
                      const std::vector<std::pair<std::uint64_t,
                                                  std::vector<std::uint8_t>>>&
                          entries);
std::string showmap_csv(const ShowmapResult& res);
std::string classed_map_text(const ClassedTrace& trace);

// --- bench ------------------------------------------------------------------

struct BenchConfigResult {
  std::string name;
  std::uint64_t median_all = 0;
  std::uint64_t median_device = 0;  // device-triggering inputs only
};

struct BenchResult {
  std::vector<BenchConfigResult> configs;
  std::size_t inputs = 0;
  std::size_t device_inputs = 0;
};

// Per-configuration virtual-cost medians over a fixed input set: coverage
// off, host coverage, host+device coverage, then one sanitizer tool each
// (shadow re-execution plus that tool's analysis walk).
BenchResult bench(const hdvm::TargetProgram& target,
                  const std::vector<std::vector<std::uint8_t>>& inputs);
std::string bench_csv(const BenchResult& res);

// --- compare-kernel ---------------------------------------------------------

struct CompareKernelResult {
  std::string target;
  std::string kernel;
  // seeded-defect verdicts: "found" / "missed" / "n-a"
  std::string kernel_level_verdict;
  std::string whole_program_verdict;
  std::uint64_t kernel_level_fps = 0;
  std::uint64_t whole_program_fps = 0;
  std::uint64_t kernel_level_crashes = 0;
  std::uint64_t whole_program_crashes = 0;
};

CompareKernelResult compare_kernel(const TargetInfo& info,
                                   const std::string& kernel,
                                   std::uint64_t budget,
                                   std::uint64_t rng_seed);
std::string compare_kernel_text(const CompareKernelResult& r);

}  // namespace hetfuzz
