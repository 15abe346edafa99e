#include "hetfuzz/coverage.hpp"

#include <cstring>

namespace hetfuzz {

const BucketLadder& BucketLadder::host() {
  static const BucketLadder ladder({
      {1, 1},    // {1}
      {2, 2},    // {2}
      {3, 4},    // {3}
      {4, 8},    // {4-7}
      {8, 16},   // {8-15}
      {16, 32},  // {16-31}
      {32, 64},  // {32-127}
      {128, 128},
  });
  return ladder;
}

const BucketLadder& BucketLadder::device() {
  static const BucketLadder ladder({
      {1, 1},        // {1}
      {2, 2},        // {2}
      {3, 4},        // {3-511}
      {512, 8},      // {512-4095}
      {4096, 16},    // {4096-16383}
      {16384, 32},   // {16384-65535}
      {65536, 64},
  });
  return ladder;
}

namespace {

// Walk a byte array in word-size strides, invoking fn(slot) only for nonzero
// bytes. Maps are sparse; skipping zero words keeps classification cheap.
template <typename T, typename Fn>
void for_nonzero(const std::vector<T>& arr, Fn&& fn) {
  constexpr std::size_t kStride = sizeof(std::uint64_t) / sizeof(T) > 0
                                      ? sizeof(std::uint64_t) / sizeof(T)
                                      : 1;
  const std::size_t n = arr.size();
  std::size_t i = 0;
  for (; i + kStride <= n; i += kStride) {
    std::uint64_t word;
    std::memcpy(&word, arr.data() + i, sizeof(word));
    if (word == 0) continue;
    for (std::size_t j = i; j < i + kStride; ++j)
      if (arr[j] != 0) fn(j);
  }
  for (; i < n; ++i)
    if (arr[i] != 0) fn(i);
}

}  // namespace

ClassedTrace classify_trace(const CoverageMap& map) {
  ClassedTrace out;
  const BucketLadder& host = BucketLadder::host();
  const BucketLadder& dev = BucketLadder::device();
  for_nonzero(map.host_half(), [&](std::size_t i) {
    out.classed[i] = host.classify(map.host_half()[i]);
    out.nonzero.push_back(static_cast<std::uint32_t>(i));
  });
  for_nonzero(map.device_half(), [&](std::size_t i) {
    std::uint32_t idx = kDeviceIndexBase + static_cast<std::uint32_t>(i);
    out.classed[idx] = dev.classify(map.device_half()[i]);
    out.nonzero.push_back(idx);
  });
  return out;
}

Admit has_new_bits(const ClassedTrace& trace, VirginMap& virgin) {
  Admit result = Admit::None;
  for (std::uint32_t idx : trace.nonzero) {
    std::uint8_t klass = trace.classed[idx];
    std::uint8_t known = virgin.at(idx);
    if (known == 0) {
      result = Admit::NewEdges;
    } else if ((klass & ~known) != 0 && result != Admit::NewEdges) {
      result = Admit::NewCounts;
    }
    virgin.observe(idx, klass);
  }
  return result;
}

std::uint64_t trace_signature(const ClassedTrace& trace, SignatureMode mode) {
  std::uint64_t h = kFnvOffset;
  for (std::uint32_t idx : trace.nonzero) {
    h = fnv1a_step(h, static_cast<std::uint8_t>(idx & 0xff));
    h = fnv1a_step(h, static_cast<std::uint8_t>((idx >> 8) & 0xff));
    if (mode == SignatureMode::Full) h = fnv1a_step(h, trace.classed[idx]);
  }
  return h;
}

void merge_device_into_map(const std::vector<std::uint32_t>& counters,
                           CoverageMap& map) {
  for_nonzero(counters, [&](std::size_t i) {
    map.device_store(kDeviceIndexBase + static_cast<std::uint32_t>(i),
                     counters[i]);
  });
}

}  // namespace hetfuzz
