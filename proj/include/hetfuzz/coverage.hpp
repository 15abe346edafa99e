#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace hetfuzz {

// One 64 KiB logical edge map, split down the middle:
//   indices [0, 32768)      host edges, 8-bit never-zero hit counters
//   indices [32768, 65536)  device edges, 32-bit warp counters
inline constexpr std::uint32_t kMapSize = 65536;
inline constexpr std::uint32_t kHostSlots = kMapSize / 2;
inline constexpr std::uint32_t kDeviceIndexBase = kHostSlots;

class CoverageMap {
 public:
  CoverageMap()
      : host_(kHostSlots, 0), device_(kMapSize - kHostSlots, 0) {}

  // Bump a host slot; a counter that wraps to 0 is pinned back to 1 so a
  // visited edge can never look unvisited.
  void host_increment(std::uint32_t idx) {
    if (idx >= kHostSlots) {
      ++host_partition_violations_;
      idx &= (kHostSlots - 1);
    }
    std::uint8_t v = host_[idx];
    ++v;
    host_[idx] = v ? v : 1;
  }

  // Store a device warp counter at a logical index in [32768, 65536).
  void device_store(std::uint32_t logical_idx, std::uint32_t count) {
    if (logical_idx < kDeviceIndexBase || logical_idx >= kMapSize) {
      ++device_partition_violations_;
      logical_idx = kDeviceIndexBase + (logical_idx % (kMapSize - kHostSlots));
    }
    device_[logical_idx - kDeviceIndexBase] = count;
  }

  std::uint8_t host_at(std::uint32_t idx) const { return host_[idx]; }
  std::uint32_t device_at(std::uint32_t logical_idx) const {
    return device_[logical_idx - kDeviceIndexBase];
  }

  // Count of a slot by logical index, either half.
  std::uint64_t count_at(std::uint32_t logical_idx) const {
    return logical_idx < kHostSlots ? host_[logical_idx]
                                    : device_[logical_idx - kDeviceIndexBase];
  }

  const std::vector<std::uint8_t>& host_half() const { return host_; }
  const std::vector<std::uint32_t>& device_half() const { return device_; }

  // Audit counters: writes that would have crossed the partition. Stay zero
  // for every well-formed producer; checked by tests.
  std::uint64_t host_partition_violations() const {
    return host_partition_violations_;
  }
  std::uint64_t device_partition_violations() const {
    return device_partition_violations_;
  }

 private:
  std::vector<std::uint8_t> host_;
  std::vector<std::uint32_t> device_;
  std::uint64_t host_partition_violations_ = 0;
  std::uint64_t device_partition_violations_ = 0;
};

// Rolling host edge state, one per host execution context.
struct HostEdgeState {
  std::uint16_t prev_loc = 0;
};

// Record one host edge: hash current site against the shifted previous site.
inline void host_edge_update(HostEdgeState& st, std::uint16_t cur_loc,
                             CoverageMap& map) {
  std::uint32_t idx = static_cast<std::uint32_t>(st.prev_loc ^ cur_loc);
  map.host_increment(idx);
  st.prev_loc = static_cast<std::uint16_t>(cur_loc >> 1);
}

// Device edge slot for a (previous, current) site pair. Site ids are
// arbitrary 32-bit values; the xor is folded into the device half.
inline std::uint32_t device_edge_index(std::uint32_t prev_loc,
                                       std::uint32_t cur_loc) {
  return kDeviceIndexBase + ((prev_loc ^ cur_loc) % kHostSlots);
}

// Per-thread previous-location store for device edges, keyed by the
// flattened 64-bit global thread id. Entries appear lazily and are dropped
// wholesale when the device map is reset.
class DeviceEdgeState {
 public:
  std::uint32_t get(std::uint64_t tid) const {
    auto it = prev_.find(tid);
    return it == prev_.end() ? 0 : it->second;
  }
  void set(std::uint64_t tid, std::uint32_t v) { prev_[tid] = v; }
  void clear() { prev_.clear(); }
  std::size_t size() const { return prev_.size(); }

 private:
  std::unordered_map<std::uint64_t, std::uint32_t> prev_;
};

// Hit-count bucketing. Each ladder rung maps an interval of raw counts to a
// one-bit class byte (1 << rung), so rung b owns bit b of a virgin mask byte
// and the host's 8 rungs / device's 7 rungs both fit in one byte.
class BucketLadder {
 public:
  struct Rung {
    std::uint64_t lower;   // inclusive lower bound of the interval
    std::uint8_t klass;    // one-hot class byte
  };

  explicit BucketLadder(std::vector<Rung> rungs) : rungs_(std::move(rungs)) {}

  std::uint8_t classify(std::uint64_t count) const {
    if (count == 0) return 0;
    std::uint8_t k = rungs_.front().klass;
    for (const Rung& r : rungs_) {
      if (count < r.lower) break;
      k = r.klass;
    }
    return k;
  }

  const std::vector<Rung>& rungs() const { return rungs_; }

  // Host counters bucket as {1},{2},{3},{4-7},{8-15},{16-31},{32-127},{128+}.
  static const BucketLadder& host();
  // Device warp counters bucket as {1},{2},{3-511},{512-4095},{4096-16383},
  // {16384-65535},{65536+}.
  static const BucketLadder& device();

 private:
  std::vector<Rung> rungs_;
};

// A raw map reduced to class bytes plus the sorted list of nonzero slots.
struct ClassedTrace {
  std::vector<std::uint8_t> classed;     // kMapSize class bytes
  std::vector<std::uint32_t> nonzero;    // ascending logical indices

  ClassedTrace() : classed(kMapSize, 0) {}
};

ClassedTrace classify_trace(const CoverageMap& map);

// Global novelty store: per slot, the set of class bits ever observed.
class VirginMap {
 public:
  VirginMap() : bits_(kMapSize, 0) {}

  std::uint8_t at(std::uint32_t idx) const { return bits_[idx]; }
  bool edge_known(std::uint32_t idx) const { return bits_[idx] != 0; }

  // Distinct slots seen so far, split by half.
  std::uint64_t host_edges() const { return host_edges_; }
  std::uint64_t device_edges() const { return device_edges_; }

  void observe(std::uint32_t idx, std::uint8_t klass) {
    if (bits_[idx] == 0) {
      if (idx < kHostSlots)
        ++host_edges_;
      else
        ++device_edges_;
    }
    bits_[idx] = static_cast<std::uint8_t>(bits_[idx] | klass);
  }

 private:
  std::vector<std::uint8_t> bits_;
  std::uint64_t host_edges_ = 0;
  std::uint64_t device_edges_ = 0;
};

enum class Admit : std::uint8_t {
  None = 0,       // nothing new
  NewCounts = 1,  // a known slot reached an unseen bucket class
  NewEdges = 2,   // a never-seen slot became nonzero
};

// Compare a classed trace against the virgin map and fold the trace in.
// Returns the strongest kind of novelty found; afterwards every class bit of
// the trace is present in the virgin map.
Admit has_new_bits(const ClassedTrace& trace, VirginMap& virgin);

enum class SignatureMode : std::uint8_t {
  Full,    // ordered (index, class) pairs
  Simple,  // ordered nonzero indices only
};

// 64-bit FNV-1a over the canonical byte encoding of the trace.
std::uint64_t trace_signature(const ClassedTrace& trace, SignatureMode mode);

// Copy device warp counters into the device half of a map. Copy, not add:
// a second merge within one execution context overwrites with the current
// counter snapshot. Counters saturate at the 32-bit maximum.
void merge_device_into_map(const std::vector<std::uint32_t>& counters,
                           CoverageMap& map);

// FNV-1a helpers shared by signatures and dedup keys.
inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a_step(std::uint64_t h, std::uint8_t byte) {
  return (h ^ byte) * kFnvPrime;
}

inline std::uint64_t fnv1a_bytes(std::uint64_t h, const void* data,
                                 std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i) h = fnv1a_step(h, p[i]);
  return h;
}

}  // namespace hetfuzz
