#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "hetfuzz/coverage.hpp"
#include "hetfuzz/hdvm.hpp"

namespace hetfuzz {

// The four analysis tools. Each consumes one slice of a shadow-logged
// execution report: HostCheck the host access log, MemCheck the device
// access log, InitCheck the uninit marks, RaceCheck the shared-memory logs.
enum class Tool : std::uint8_t { HostCheck, MemCheck, InitCheck, RaceCheck };

inline constexpr Tool kAllTools[] = {Tool::HostCheck, Tool::MemCheck,
                                     Tool::InitCheck, Tool::RaceCheck};

enum class FindingKind : std::uint8_t {
  HeapOverflowHost,
  StackOverflowHost,
  OobDeviceRead,
  OobDeviceWrite,
  UninitDeviceRead,
  SharedRace,
  ApiFailureCascade,
};

const char* to_string(Tool tool);
const char* to_string(FindingKind kind);

struct Finding {
  Tool tool;
  FindingKind kind;
  // Location frames, outermost first: target name, kernel or host routine,
  // edge-site id.
  std::vector<std::string> site;
  std::string detail;
  std::uint64_t input_ref = 0;  // content hash of the triggering input
  std::uint64_t vtime = 0;      // dispatching execution's virtual time
};

// Stable 64-bit identity of a finding: tool, kind and the top two site
// frames. Deliberately blind to detail, input_ref and the site id so reruns
// and different triggering inputs bucket together.
std::uint64_t dedup_key(const Finding& f);

// Run one tool over a shadow-logged report. Pure; returns one finding per
// distinct violation site, empty for clean reports.
std::vector<Finding> analyze(const hdvm::ExecutionReport& report, Tool tool);

// All four tools plus the bookkeeping the engine charges for: the number of
// records examined (one cost unit each).
struct SanitizerSweep {
  std::vector<Finding> findings;
  std::uint64_t records_examined = 0;
};
SanitizerSweep run_all_tools(const hdvm::ExecutionReport& report);

// Crash synthesis: the finding a fatal (non-shadow) exit corresponds to,
// derived from the report's last fault record with the same classification
// rules analyze uses, so crash keys agree between sanitized and unsanitized
// campaigns. Empty for clean exits or aborts that left no fault record.
std::optional<Finding> derive_crash_finding(const hdvm::ExecutionReport& rep);

// Input-selection strategies for sanitizer dispatch.
enum class Strategy : std::uint8_t {
  AllTrace,          // every input
  UniqueTrace,       // first time this full signature is seen
  SimpleTrace,       // first time this simple signature is seen (default)
  CoverageIncrease,  // inputs admitted to the queue
};

const char* to_string(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);

// Dispatch decision. The seen-flags must reflect the signature sets BEFORE
// the current trace was inserted.
bool should_sanitize(Strategy strategy, Admit admit, bool full_sig_seen,
                     bool simple_sig_seen);

std::uint64_t hash_input(const std::vector<std::uint8_t>& input);

}  // namespace hetfuzz
