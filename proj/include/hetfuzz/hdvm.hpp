#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetfuzz/coverage.hpp"

namespace hetfuzz {

// Raised for conditions that indicate a bug in this codebase rather than in
// a fuzz target (mapped to exit code 3 by the CLI).
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised for unusable user input: unknown target, unreadable file, bad dir.
struct TargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace hdvm {

struct Dim3 {
  std::uint32_t x = 1, y = 1, z = 1;
};

struct LaunchConfig {
  Dim3 grid;
  Dim3 block;

  std::uint64_t blocks() const {
    return std::uint64_t(grid.x) * grid.y * grid.z;
  }
  std::uint64_t threads_per_block() const {
    return std::uint64_t(block.x) * block.y * block.z;
  }
  std::uint64_t total_threads() const {
    return blocks() * threads_per_block();
  }
};

// Opaque allocation handle. id 0 is the null handle (failed allocation).
struct Handle {
  std::uint32_t id = 0;
  bool null() const { return id == 0; }
};

enum class ApiStatus : std::uint8_t {
  Ok = 0,
  OutOfMemory,
  InvalidValue,
  InvalidConfiguration,
};

const char* to_string(ApiStatus st);

struct ApiFailure {
  std::string call;
  ApiStatus status;
  std::uint64_t seq;  // position in the run's event order
};

enum class AccessKind : std::uint8_t { Read, Write };

struct AccessRecord {
  std::uint64_t seq = 0;
  std::uint32_t handle = 0;  // 0 = null/wild access
  std::uint64_t offset = 0;
  std::uint64_t width = 0;
  AccessKind kind = AccessKind::Read;
  bool fault = false;    // touched bytes outside the live allocation
  bool wild = false;     // no live allocation behind the handle at all
  bool uninit = false;   // read touched never-written bytes
  std::uint64_t fault_distance = 0;  // bytes from the first OOB byte to the
                                     // end of the allocation (1 == the byte
                                     // right past the end), or the address
                                     // distance to the nearest live
                                     // allocation for wild accesses
  std::string where;     // kernel name or host routine
  std::uint32_t site = 0;            // dominating edge site
  std::uint64_t thread = 0;          // flattened global tid, 0 on host
};

struct SharedAccess {
  std::uint32_t thread_in_block = 0;
  std::uint32_t addr = 0;
  std::uint32_t width = 0;
  AccessKind kind = AccessKind::Read;
  std::uint32_t epoch = 0;  // barriers passed by the thread at access time
  std::uint32_t site = 0;
};

// Shared-memory access log for one block of one launch. Cleared per launch;
// records are ordered by epoch (ties keep execution order).
struct SharedBlockLog {
  std::string kernel;
  std::uint64_t launch_seq = 0;
  std::uint64_t block = 0;
  std::vector<SharedAccess> records;
};

// Scalar-or-buffer kernel argument.
struct KernelArg {
  enum class Kind : std::uint8_t { Scalar, Buffer };
  Kind kind = Kind::Scalar;
  std::uint64_t scalar = 0;
  Handle buffer;

  static KernelArg make_scalar(std::uint64_t v) {
    KernelArg a;
    a.kind = Kind::Scalar;
    a.scalar = v;
    return a;
  }
  static KernelArg make_buffer(Handle h) {
    KernelArg a;
    a.kind = Kind::Buffer;
    a.buffer = h;
    return a;
  }
};

struct LaunchRecord {
  std::string kernel;
  LaunchConfig cfg;
  // Per argument: the scalar value, or the allocation size in bytes for a
  // buffer argument (0 for a null handle). Lets invariants relate launch
  // geometry to data sizes.
  std::vector<std::uint64_t> args_view;
  std::uint64_t seq = 0;
};

enum class ExitKind : std::uint8_t { Clean, HostAbort, HardFault };

struct Exit {
  ExitKind kind = ExitKind::Clean;
  int code = 0;              // meaningful for Clean
  std::string description;   // meaningful for HardFault
};

struct ExecutionReport {
  std::string target;  // producing target's name, for finding attribution
  Exit exit;
  CoverageMap raw_map;
  bool device_triggered = false;   // >= 1 kernel launch succeeded
  std::vector<AccessRecord> host_access_log;
  std::vector<AccessRecord> device_access_log;
  std::vector<SharedBlockLog> shared_logs;
  std::vector<ApiFailure> api_failures;
  std::vector<LaunchRecord> launch_log;
  std::uint64_t virtual_cost = 0;
  bool marker_violation = false;   // persistent protocol broken this iteration

  // Raw tallies, useful for stats and cost audits.
  std::uint64_t host_edges_recorded = 0;
  std::uint64_t warp_edge_events = 0;
};

inline constexpr std::uint64_t kDefaultDeviceCapacity = 64ull << 20;
inline constexpr std::uint64_t kDefaultHostCapacity = 256ull << 20;
inline constexpr std::uint64_t kGuardBytes = 4096;
inline constexpr std::uint64_t kDefaultStartupCost = 1000;
inline constexpr std::uint32_t kMaxBlockThreads = 1024;
inline constexpr std::uint64_t kMaxLaunchThreads = 1ull << 22;
inline constexpr std::uint32_t kSharedBytesPerBlock = 48u << 10;

// Persistent-mode notification magics, delivered via a denominated
// single-thread marker from the harness.
inline constexpr std::uint32_t kMagicStart = 0x4D2;   // 1234
inline constexpr std::uint32_t kMagicEnd = 0x162E;    // 5678

struct ExecOptions {
  bool host_coverage = true;
  bool device_coverage = true;
  // Shadow logging: keep every access record, uninit marks, silent fault
  // records and shared-memory logs. Off by default: plain runs only record
  // the access that hard-faults, like real hardware.
  bool shadow = false;
  std::uint64_t device_capacity = kDefaultDeviceCapacity;
  std::uint64_t host_capacity = kDefaultHostCapacity;
  std::uint64_t startup_cost = kDefaultStartupCost;
};

class DeviceThreadCtx;
class HostCtx;

using KernelFn = std::function<void(DeviceThreadCtx&)>;
using HostFn = std::function<void(HostCtx&)>;

// One decodable kernel parameter for kernel-level fuzzing. Parameters are
// decoded from the input as consecutive little-endian u32 values in schema
// order; a value outside [lo, hi] rejects the input.
struct ParamSpec {
  enum class Bind : std::uint8_t {
    GridX, GridY, GridZ, BlockX, BlockY, BlockZ,
    Scalar,      // becomes the scalar argument at arg_index
    BufferLen,   // element count of the buffer argument at arg_index
  };
  std::string name;
  Bind bind;
  std::uint32_t arg_index = 0;   // for Scalar / BufferLen
  std::uint32_t elem_width = 4;  // for BufferLen
  std::uint64_t lo = 1;
  std::uint64_t hi = 0xffffffffull;
  // Encoded into the synthetic seed input for kernel-level fuzzing; must
  // satisfy the target's declared invariants.
  std::uint32_t seed_value = 1;
};

struct KernelDescriptor {
  std::string name;
  KernelFn body;
  std::uint32_t arg_count = 0;
  // Empty schema: kernel is not individually fuzzable (helper kernels).
  std::vector<ParamSpec> schema;
};

// A host-declared constraint on how a kernel is legitimately launched.
// Evaluated against a launch's config and args_view.
struct HostInvariant {
  std::string kernel;
  std::string label;
  std::function<bool(const LaunchConfig&, const std::vector<std::uint64_t>&)>
      holds;
};

struct TargetProgram {
  std::string name;
  HostFn host_proc;
  // Persistent-mode body for one iteration; emits the start/end markers
  // around its work. Defaults to wrap_persistent(host_proc).
  HostFn persistent_proc;
  std::vector<KernelDescriptor> kernels;
  std::vector<HostInvariant> invariants;
  std::string input_format;  // one-line format description
  bool persistent_resettable = true;

  const KernelDescriptor* find_kernel(const std::string& kname) const {
    for (const auto& k : kernels)
      if (k.name == kname) return &k;
    return nullptr;
  }
};

// Standard persistent body: start marker, regular harness, end marker.
HostFn wrap_persistent(HostFn inner);

class Runtime;  // internal

// Host-side harness API. Target host procedures receive one of these and
// drive the run through it; everything they do is logged and costed.
class HostCtx {
 public:
  const std::vector<std::uint8_t>& input() const;
  std::size_t input_size() const;

  // Little-endian u32 at byte offset; false if out of range.
  bool input_u32(std::size_t off, std::uint32_t* out) const;
  // Bytes [off, off+len) clamped to the input size.
  std::vector<std::uint8_t> input_slice(std::size_t off, std::size_t len) const;

  // Mark a host basic block. Sites must stay below 32768.
  void edge(std::uint16_t site);
  // Label the current host routine for access attribution.
  void routine(std::string name);

  Handle device_alloc(std::uint64_t bytes, ApiStatus* st = nullptr);
  ApiStatus device_free(Handle h);
  Handle host_alloc(std::uint64_t bytes, ApiStatus* st = nullptr);
  ApiStatus host_free(Handle h);

  // Ranged host-buffer accesses; logged as single records.
  void host_write(Handle h, std::uint64_t off, const std::uint8_t* src,
                  std::uint64_t len);
  void host_write(Handle h, std::uint64_t off,
                  const std::vector<std::uint8_t>& src);
  std::uint64_t host_read(Handle h, std::uint64_t off, std::uint32_t width);

  ApiStatus memcpy_h2d(Handle dev, Handle host, std::uint64_t len);
  ApiStatus memcpy_d2h(Handle host, Handle dev, std::uint64_t len);
  ApiStatus device_memset(Handle dev, std::uint8_t value, std::uint64_t len);

  ApiStatus launch(const std::string& kernel, LaunchConfig cfg,
                   std::vector<KernelArg> args);

  // Finish the run early with Clean(code).
  [[noreturn]] void exit(int code);
  // Declare an unrecoverable host error -> HostAbort.
  [[noreturn]] void abort(int code);

  // Persistent-mode notification (kMagicStart / kMagicEnd).
  void emit_marker(std::uint32_t magic);

  explicit HostCtx(Runtime& rt) : rt_(rt) {}
  HostCtx(const HostCtx&) = delete;

 private:
  Runtime& rt_;
};

// Device-side view for one simulated thread.
class DeviceThreadCtx {
 public:
  Dim3 thread_idx() const;
  Dim3 block_idx() const;
  Dim3 block_dim() const;
  Dim3 grid_dim() const;
  // Flattened global thread id (grid-row-major x, then y, then z).
  std::uint64_t global_tid() const;

  void edge(std::uint32_t site);

  // Little-endian loads/stores of width 1, 2, 4 or 8 bytes. Reads of bytes
  // never written return zero.
  std::uint64_t read(Handle h, std::uint64_t off, std::uint32_t width);
  void write(Handle h, std::uint64_t off, std::uint32_t width,
             std::uint64_t value);

  std::uint32_t shared_read(std::uint32_t addr, std::uint32_t width);
  void shared_write(std::uint32_t addr, std::uint32_t width,
                    std::uint32_t value);
  void barrier();

  std::uint64_t arg_scalar(std::size_t i) const;
  Handle arg_buffer(std::size_t i) const;
  std::size_t arg_count() const;

  struct Impl;
  explicit DeviceThreadCtx(Impl& impl) : impl_(impl) {}
  DeviceThreadCtx(const DeviceThreadCtx&) = delete;

 private:
  Impl& impl_;
};

// Run one input in a fresh process context.
ExecutionReport execute(const TargetProgram& target,
                        const std::vector<std::uint8_t>& input,
                        const ExecOptions& options = {});

// Persistent fuzzing session: one process context reused across iterations,
// recycled after loop_n iterations, on any non-clean exit, or on a marker
// protocol violation.
class PersistentSession {
 public:
  PersistentSession(const TargetProgram& target, ExecOptions options,
                    std::uint32_t loop_n);
  ~PersistentSession();

  ExecutionReport run(const std::vector<std::uint8_t>& input);

  std::uint64_t processes_started() const { return processes_started_; }

 private:
  const TargetProgram& target_;
  ExecOptions options_;
  std::uint32_t loop_n_;
  std::uint32_t iterations_in_process_ = 0;
  std::uint64_t processes_started_ = 0;
  std::unique_ptr<Runtime> rt_;
};

// Convenience: run a whole input sequence through one persistent session.
std::vector<ExecutionReport> persistent_run(
    const TargetProgram& target, const std::vector<std::vector<std::uint8_t>>& inputs,
    std::uint32_t loop_n, const ExecOptions& options = {});

}  // namespace hdvm
}  // namespace hetfuzz
