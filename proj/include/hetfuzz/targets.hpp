#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetfuzz/hdvm.hpp"
#include "hetfuzz/sanitizers.hpp"

namespace hetfuzz {

// The one canonical defect a buggy built-in target carries, named by the
// tool that exposes it and the routine it fires in. Its dedup key is the
// ground truth the acceptance checks compare discovered crashes against.
struct SeededBug {
  Tool tool;
  FindingKind kind;
  std::string where;  // kernel or host routine frame of the finding
};

struct TargetInfo {
  hdvm::TargetProgram program;
  // Canonical seed corpus, 1 to 5 inputs. For buggy targets the seeds are
  // chosen so the defect is reachable from them under mutation (some
  // trigger immediately, some need guided mutations).
  std::vector<std::vector<std::uint8_t>> seeds;
  std::optional<SeededBug> bug;
  // An input known to drive the interesting behaviour: the seeded defect
  // for buggy targets, the deepest device-only branch for clean ones.
  std::vector<std::uint8_t> witness;
  std::string summary;  // one line for the target listing
};

const std::vector<TargetInfo>& registry();
const TargetInfo* find_target(const std::string& name);

// Dedup key of the target's seeded defect.
std::uint64_t seeded_key(const TargetInfo& info);

}  // namespace hetfuzz
