#include "hetfuzz/hdvm.hpp"

#include <algorithm>
#include <array>
#include <bitset>
#include <cstring>
#include <map>
#include <unordered_map>

namespace hetfuzz {
namespace hdvm {

const char* to_string(ApiStatus st) {
  switch (st) {
    case ApiStatus::Ok: return "ok";
    case ApiStatus::OutOfMemory: return "out_of_memory";
    case ApiStatus::InvalidValue: return "invalid_value";
    case ApiStatus::InvalidConfiguration: return "invalid_configuration";
  }
  return "?";
}

namespace {

// Control-flow signals for the three ways a run can stop early. These unwind
// through target code; harnesses must not swallow them.
struct HostExitEx {
  int code;
};
struct HostAbortEx {
  int code;
};
struct HardFaultEx {
  std::string what;
};

constexpr std::uint64_t kPage = 4096;

struct Allocation {
  std::uint64_t base_va = 0;
  std::uint64_t size = 0;
  bool live = false;
  bool fully_init = false;
  std::unordered_map<std::uint64_t, std::unique_ptr<std::array<std::uint8_t, kPage>>>
      pages;
  std::unordered_map<std::uint64_t, std::unique_ptr<std::bitset<kPage>>>
      init_pages;

  void write_bytes(std::uint64_t off, const std::uint8_t* src,
                   std::uint64_t len) {
    while (len > 0) {
      std::uint64_t page = off / kPage;
      std::uint64_t in_page = off % kPage;
      std::uint64_t chunk = std::min<std::uint64_t>(len, kPage - in_page);
      auto& p = pages[page];
      if (!p) {
        p = std::make_unique<std::array<std::uint8_t, kPage>>();
        p->fill(0);
      }
      std::memcpy(p->data() + in_page, src, chunk);
      off += chunk;
      src += chunk;
      len -= chunk;
    }
  }

  void read_bytes(std::uint64_t off, std::uint8_t* dst,
                  std::uint64_t len) const {
    while (len > 0) {
      std::uint64_t page = off / kPage;
      std::uint64_t in_page = off % kPage;
      std::uint64_t chunk = std::min<std::uint64_t>(len, kPage - in_page);
      auto it = pages.find(page);
      if (it == pages.end())
        std::memset(dst, 0, chunk);
      else
        std::memcpy(dst, it->second->data() + in_page, chunk);
      off += chunk;
      dst += chunk;
      len -= chunk;
    }
  }

  void mark_init(std::uint64_t off, std::uint64_t len) {
    if (fully_init) return;
    if (off == 0 && len >= size) {
      fully_init = true;
      init_pages.clear();
      return;
    }
    while (len > 0) {
      std::uint64_t page = off / kPage;
      std::uint64_t in_page = off % kPage;
      std::uint64_t chunk = std::min<std::uint64_t>(len, kPage - in_page);
      auto& p = init_pages[page];
      if (!p) p = std::make_unique<std::bitset<kPage>>();
      for (std::uint64_t i = 0; i < chunk; ++i) p->set(in_page + i);
      off += chunk;
      len -= chunk;
    }
  }

  bool any_uninit(std::uint64_t off, std::uint64_t len) const {
    if (fully_init) return false;
    while (len > 0) {
      std::uint64_t page = off / kPage;
      std::uint64_t in_page = off % kPage;
      std::uint64_t chunk = std::min<std::uint64_t>(len, kPage - in_page);
      auto it = init_pages.find(page);
      if (it == init_pages.end()) return true;
      for (std::uint64_t i = 0; i < chunk; ++i)
        if (!it->second->test(in_page + i)) return true;
      off += chunk;
      len -= chunk;
    }
    return false;
  }
};

// One address space (device or host heap) with a size budget. Base addresses
// are handed out deterministically with a gap between allocations.
class MemorySpace {
 public:
  MemorySpace(std::uint64_t capacity, std::uint64_t va_base)
      : capacity_(capacity), va_base_(va_base), next_va_(va_base) {}

  // Drop every allocation and restart ids and addresses from the process
  // startup values, so an iteration that begins after reset() sees exactly
  // the allocator state a fresh process would.
  void reset() {
    in_use_ = 0;
    next_va_ = va_base_;
    next_id_ = 1;
    allocs_.clear();
  }

  Handle alloc(std::uint64_t bytes, ApiStatus* st) {
    if (bytes == 0) {
      if (st) *st = ApiStatus::InvalidValue;
      return Handle{};
    }
    if (bytes > capacity_ - in_use_) {
      if (st) *st = ApiStatus::OutOfMemory;
      return Handle{};
    }
    Allocation a;
    a.base_va = next_va_;
    a.size = bytes;
    a.live = true;
    next_va_ += ((bytes + 255) & ~255ull) + (1ull << 20);
    in_use_ += bytes;
    std::uint32_t id = next_id_++;
    allocs_.emplace(id, std::move(a));
    if (st) *st = ApiStatus::Ok;
    return Handle{id};
  }

  ApiStatus free(Handle h) {
    auto it = allocs_.find(h.id);
    if (it == allocs_.end() || !it->second.live)
      return ApiStatus::InvalidValue;
    in_use_ -= it->second.size;
    it->second.live = false;
    it->second.pages.clear();
    it->second.init_pages.clear();
    return ApiStatus::Ok;
  }

  Allocation* find_any(Handle h) {
    auto it = allocs_.find(h.id);
    return it == allocs_.end() ? nullptr : &it->second;
  }

  Allocation* find_live(Handle h) {
    Allocation* a = find_any(h);
    return (a && a->live) ? a : nullptr;
  }

  std::uint64_t in_use() const { return in_use_; }

  // Address distance from va to the closest byte of any live allocation.
  std::uint64_t wild_distance(std::uint64_t va) const {
    std::uint64_t best = ~0ull;
    for (const auto& [id, a] : allocs_) {
      if (!a.live) continue;
      std::uint64_t d;
      if (va < a.base_va)
        d = a.base_va - va;
      else if (va >= a.base_va + a.size)
        d = va - (a.base_va + a.size) + 1;
      else
        d = 0;
      best = std::min(best, d);
    }
    return best;
  }

 private:
  std::uint64_t capacity_;
  std::uint64_t va_base_;
  std::uint64_t in_use_ = 0;
  std::uint64_t next_va_;
  std::uint32_t next_id_ = 1;
  std::map<std::uint32_t, Allocation> allocs_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Runtime: one simulated process. Device memory, per-thread edge state and
// warp counters live here and persist across persistent-mode iterations;
// everything else is per-input.

class Runtime {
 public:
  Runtime(const TargetProgram& target, const ExecOptions& opt)
      : target_(target),
        opt_(opt),
        dev_mem_(opt.device_capacity, 0x7f0000000000ull),
        host_mem_(opt.host_capacity, 0x555500000000ull),
        dev_counters_(kHostSlots, 0) {}

  ExecutionReport run_input(const std::vector<std::uint8_t>& input,
                            bool persistent_iter);

 private:
  friend class hetfuzz::hdvm::HostCtx;
  friend class hetfuzz::hdvm::DeviceThreadCtx;
  friend struct hetfuzz::hdvm::DeviceThreadCtx::Impl;

  void cost(std::uint64_t units) { rep_->virtual_cost += units; }

  void record_api_failure(const char* call, ApiStatus st) {
    rep_->api_failures.push_back({call, st, seq_++});
  }

  void host_edge(std::uint16_t site) {
    last_host_site_ = site;
    cost(1);  // the block itself
    if (opt_.host_coverage) {
      cost(1);  // instrumentation
      host_edge_update(host_state_, site, rep_->raw_map);
      ++rep_->host_edges_recorded;
    }
  }

  // Shared guard/window logic for host and device accesses. Returns the
  // number of in-bounds bytes usable for the physical transfer.
  std::uint64_t checked_access(MemorySpace& mem, bool device, Handle h,
                               std::uint64_t off, std::uint64_t width,
                               AccessKind kind, const std::string& where,
                               std::uint32_t site, std::uint64_t thread,
                               Allocation** out_alloc) {
    std::vector<AccessRecord>& log =
        device ? rep_->device_access_log : rep_->host_access_log;
    Allocation* a = mem.find_live(h);
    if (!a) {
      // Null handle, stale handle or freed allocation: a wild access. It
      // misses every live allocation, so it always hard-faults.
      Allocation* dead = mem.find_any(h);
      std::uint64_t va = (dead ? dead->base_va : 0) + off;
      AccessRecord rec;
      rec.seq = seq_++;
      rec.handle = h.id;
      rec.offset = off;
      rec.width = width;
      rec.kind = kind;
      rec.fault = true;
      rec.wild = true;
      rec.fault_distance = mem.wild_distance(va);
      rec.where = where;
      rec.site = site;
      rec.thread = thread;
      log.push_back(rec);
      std::string what = std::string("wild ") +
                         (device ? "device " : "host ") +
                         (kind == AccessKind::Read ? "read" : "write") +
                         " through " + (h.null() ? "null" : "dead") +
                         " handle in " + where;
      throw HardFaultEx{what};
    }
    *out_alloc = a;
    std::uint64_t end = off + width;
    if (end > a->size) {
      // Out of bounds. Within the guard window past the allocation the
      // access is logged and survives; past it the run hard-faults.
      std::uint64_t reach = end - a->size;
      bool hard = reach > kGuardBytes;
      if (opt_.shadow || hard) {
        AccessRecord rec;
        rec.seq = seq_++;
        rec.handle = h.id;
        rec.offset = off;
        rec.width = width;
        rec.kind = kind;
        rec.fault = true;
        rec.fault_distance = off >= a->size ? off - a->size + 1 : 1;
        rec.where = where;
        rec.site = site;
        rec.thread = thread;
        log.push_back(rec);
        if (opt_.shadow) cost(1);
      }
      if (hard) {
        std::string what = std::string(device ? "device " : "host ") +
                           (kind == AccessKind::Read ? "read" : "write") +
                           " overruns allocation by " +
                           std::to_string(reach) + " bytes in " + where;
        throw HardFaultEx{what};
      }
      return off < a->size ? a->size - off : 0;
    }
    if (opt_.shadow) {
      AccessRecord rec;
      rec.seq = seq_++;
      rec.handle = h.id;
      rec.offset = off;
      rec.width = width;
      rec.kind = kind;
      rec.where = where;
      rec.site = site;
      rec.thread = thread;
      if (kind == AccessKind::Read) rec.uninit = a->any_uninit(off, width);
      log.push_back(rec);
      cost(1);
    }
    return width;
  }

  void marker(std::uint32_t magic) {
    // Notification markers are intercepted by the runtime and cost nothing.
    if (magic == kMagicStart) {
      if (persistent_iter_) {
        if (marker_phase_ != 0) rep_->marker_violation = true;
        marker_phase_ = 1;
      }
      reset_device_coverage();
      // The loop harness reinitializes target state each iteration;
      // anything the previous iteration leaked is reclaimed here so
      // allocation ids, addresses and headroom match a fresh process.
      dev_mem_.reset();
      host_mem_.reset();
    } else if (magic == kMagicEnd) {
      if (persistent_iter_) {
        if (marker_phase_ == 1)
          marker_phase_ = 2;
        else
          rep_->marker_violation = true;
      }
      merge_device_into_map(dev_counters_, rep_->raw_map);
    } else if (persistent_iter_) {
      rep_->marker_violation = true;
    }
  }

  void reset_device_coverage() {
    for (std::uint32_t slot : dirty_counter_slots_) dev_counters_[slot] = 0;
    dirty_counter_slots_.clear();
    dev_edges_.clear();
  }

  void bump_counter(std::uint32_t slot) {
    std::uint32_t& c = dev_counters_[slot];
    if (c == 0) dirty_counter_slots_.push_back(slot);
    if (c != 0xffffffffu) ++c;
  }

  ApiStatus do_launch(const std::string& kernel, LaunchConfig cfg,
                      std::vector<KernelArg> args);

  const TargetProgram& target_;
  ExecOptions opt_;
  // Process-lifetime state.
  MemorySpace dev_mem_;
  MemorySpace host_mem_;
  DeviceEdgeState dev_edges_;
  std::vector<std::uint32_t> dev_counters_;
  std::vector<std::uint32_t> dirty_counter_slots_;
  bool startup_charged_ = false;
  // Per-input state.
  ExecutionReport* rep_ = nullptr;
  const std::vector<std::uint8_t>* input_ = nullptr;
  HostEdgeState host_state_;
  std::string routine_ = "main";
  std::uint16_t last_host_site_ = 0;
  std::uint64_t seq_ = 0;
  int marker_phase_ = 0;
  bool persistent_iter_ = false;
};

// ---------------------------------------------------------------------------
// Device thread execution

struct DeviceThreadCtx::Impl {
  Runtime& rt;
  const KernelDescriptor& kd;
  const LaunchConfig& cfg;
  const std::vector<KernelArg>& args;
  // Per-launch warp bookkeeping: highest per-thread visit count seen for a
  // (warp, site) pair. The first thread of a warp to reach visit number k
  // stands in for the whole warp at that dynamic occurrence.
  std::unordered_map<std::uint64_t, std::uint32_t>& warp_site_max;
  std::vector<std::uint8_t>& shared;
  std::vector<std::pair<std::uint32_t, std::uint32_t>>& shared_dirty;
  SharedBlockLog* block_log;

  Dim3 tid3, bid3;
  std::uint64_t gtid = 0;
  std::uint32_t linear_in_block = 0;
  std::uint64_t warp_global = 0;
  std::uint32_t epoch = 0;
  std::uint32_t last_site = 0;
  std::unordered_map<std::uint32_t, std::uint32_t> site_count;

  void edge(std::uint32_t site) {
    last_site = site;
    std::uint32_t k = ++site_count[site];
    std::uint64_t key = (warp_global << 32) | site;
    std::uint32_t& m = warp_site_max[key];
    if (k > m) {
      m = k;
      rt.cost(1);  // one warp executes this block once
      if (rt.opt_.device_coverage) {
        rt.cost(1);  // instrumentation
        ++rt.rep_->warp_edge_events;
        std::uint32_t prev = rt.dev_edges_.get(gtid);
        rt.bump_counter(device_edge_index(prev, site) - kDeviceIndexBase);
      }
    }
    if (rt.opt_.device_coverage) rt.dev_edges_.set(gtid, site >> 1);
  }

  std::uint64_t read(Handle h, std::uint64_t off, std::uint32_t width) {
    Allocation* a = nullptr;
    std::uint64_t usable = rt.checked_access(rt.dev_mem_, true, h, off, width,
                                             AccessKind::Read, kd.name,
                                             last_site, gtid, &a);
    std::uint8_t buf[8] = {0};
    if (a && usable > 0) a->read_bytes(off, buf, std::min<std::uint64_t>(usable, 8));
    std::uint64_t v = 0;
    std::memcpy(&v, buf, 8);
    return v;
  }

  void write(Handle h, std::uint64_t off, std::uint32_t width,
             std::uint64_t value) {
    Allocation* a = nullptr;
    std::uint64_t usable = rt.checked_access(rt.dev_mem_, true, h, off, width,
                                             AccessKind::Write, kd.name,
                                             last_site, gtid, &a);
    if (a && usable > 0) {
      std::uint8_t buf[8];
      std::memcpy(buf, &value, 8);
      a->write_bytes(off, buf, std::min<std::uint64_t>(usable, 8));
      if (rt.opt_.shadow) a->mark_init(off, std::min<std::uint64_t>(usable, 8));
    }
  }

  std::uint32_t shared_read(std::uint32_t addr, std::uint32_t width) {
    check_shared(addr, width);
    log_shared(addr, width, AccessKind::Read);
    std::uint32_t v = 0;
    std::memcpy(&v, shared.data() + addr, std::min<std::uint32_t>(width, 4));
    return v;
  }

  void shared_write(std::uint32_t addr, std::uint32_t width,
                    std::uint32_t value) {
    check_shared(addr, width);
    log_shared(addr, width, AccessKind::Write);
    std::memcpy(shared.data() + addr, &value, std::min<std::uint32_t>(width, 4));
    shared_dirty.push_back({addr, width});
  }

  void check_shared(std::uint32_t addr, std::uint32_t width) {
    if (width == 0 || width > 4 ||
        std::uint64_t(addr) + width > kSharedBytesPerBlock)
      throw InternalError("kernel " + kd.name +
                          ": shared access outside the block region");
  }

  void log_shared(std::uint32_t addr, std::uint32_t width, AccessKind kind) {
    if (!rt.opt_.shadow || !block_log) return;
    block_log->records.push_back(
        {linear_in_block, addr, width, kind, epoch, last_site});
    rt.cost(1);
  }
};

Dim3 DeviceThreadCtx::thread_idx() const { return impl_.tid3; }
Dim3 DeviceThreadCtx::block_idx() const { return impl_.bid3; }
Dim3 DeviceThreadCtx::block_dim() const { return impl_.cfg.block; }
Dim3 DeviceThreadCtx::grid_dim() const { return impl_.cfg.grid; }
std::uint64_t DeviceThreadCtx::global_tid() const { return impl_.gtid; }
void DeviceThreadCtx::edge(std::uint32_t site) { impl_.edge(site); }
std::uint64_t DeviceThreadCtx::read(Handle h, std::uint64_t off,
                                    std::uint32_t width) {
  return impl_.read(h, off, width);
}
void DeviceThreadCtx::write(Handle h, std::uint64_t off, std::uint32_t width,
                            std::uint64_t value) {
  impl_.write(h, off, width, value);
}
std::uint32_t DeviceThreadCtx::shared_read(std::uint32_t addr,
                                           std::uint32_t width) {
  return impl_.shared_read(addr, width);
}
void DeviceThreadCtx::shared_write(std::uint32_t addr, std::uint32_t width,
                                   std::uint32_t value) {
  impl_.shared_write(addr, width, value);
}
void DeviceThreadCtx::barrier() { ++impl_.epoch; }
std::uint64_t DeviceThreadCtx::arg_scalar(std::size_t i) const {
  if (i >= impl_.args.size() || impl_.args[i].kind != KernelArg::Kind::Scalar)
    throw InternalError("kernel " + impl_.kd.name + ": bad scalar arg index");
  return impl_.args[i].scalar;
}
Handle DeviceThreadCtx::arg_buffer(std::size_t i) const {
  if (i >= impl_.args.size() || impl_.args[i].kind != KernelArg::Kind::Buffer)
    throw InternalError("kernel " + impl_.kd.name + ": bad buffer arg index");
  return impl_.args[i].buffer;
}
std::size_t DeviceThreadCtx::arg_count() const { return impl_.args.size(); }

ApiStatus Runtime::do_launch(const std::string& kernel, LaunchConfig cfg,
                             std::vector<KernelArg> args) {
  cost(1);
  const KernelDescriptor* kd = target_.find_kernel(kernel);
  if (!kd || args.size() != kd->arg_count) {
    record_api_failure("launch", ApiStatus::InvalidValue);
    return ApiStatus::InvalidValue;
  }
  if (cfg.grid.x == 0 || cfg.grid.y == 0 || cfg.grid.z == 0 ||
      cfg.block.x == 0 || cfg.block.y == 0 || cfg.block.z == 0 ||
      cfg.threads_per_block() > kMaxBlockThreads ||
      cfg.total_threads() > kMaxLaunchThreads) {
    record_api_failure("launch", ApiStatus::InvalidConfiguration);
    return ApiStatus::InvalidConfiguration;
  }

  LaunchRecord lr;
  lr.kernel = kernel;
  lr.cfg = cfg;
  lr.seq = seq_++;
  for (const KernelArg& a : args) {
    if (a.kind == KernelArg::Kind::Scalar) {
      lr.args_view.push_back(a.scalar);
    } else {
      Allocation* al = dev_mem_.find_live(a.buffer);
      lr.args_view.push_back(al ? al->size : 0);
    }
  }
  rep_->launch_log.push_back(std::move(lr));
  rep_->device_triggered = true;

  std::unordered_map<std::uint64_t, std::uint32_t> warp_site_max;
  std::vector<std::uint8_t> shared(kSharedBytesPerBlock, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shared_dirty;
  const std::uint64_t tpb = cfg.threads_per_block();
  const std::uint64_t warps_per_block = (tpb + 31) / 32;

  for (std::uint64_t bl = 0; bl < cfg.blocks(); ++bl) {
    Dim3 bid;
    bid.x = static_cast<std::uint32_t>(bl % cfg.grid.x);
    bid.y = static_cast<std::uint32_t>((bl / cfg.grid.x) % cfg.grid.y);
    bid.z = static_cast<std::uint32_t>(bl / (std::uint64_t(cfg.grid.x) * cfg.grid.y));
    for (auto& [addr, width] : shared_dirty)
      std::memset(shared.data() + addr, 0, std::min<std::uint32_t>(width, 4));
    shared_dirty.clear();
    SharedBlockLog blog;
    blog.kernel = kd->name;
    blog.launch_seq = rep_->launch_log.back().seq;
    blog.block = bl;
    auto flush_blog = [&]() {
      if (!opt_.shadow || blog.records.empty()) return;
      std::stable_sort(blog.records.begin(), blog.records.end(),
                       [](const SharedAccess& a, const SharedAccess& b) {
                         return a.epoch < b.epoch;
                       });
      rep_->shared_logs.push_back(std::move(blog));
    };

    for (std::uint64_t tl = 0; tl < tpb; ++tl) {
      Dim3 tid;
      tid.x = static_cast<std::uint32_t>(tl % cfg.block.x);
      tid.y = static_cast<std::uint32_t>((tl / cfg.block.x) % cfg.block.y);
      tid.z = static_cast<std::uint32_t>(tl / (std::uint64_t(cfg.block.x) * cfg.block.y));

      DeviceThreadCtx::Impl impl{*this,      *kd,      cfg,
                                 args,       warp_site_max, shared,
                                 shared_dirty, opt_.shadow ? &blog : nullptr,
                                 tid,        bid,      0, 0, 0, 0, 0, {}};
      // Flattened global tid: x dimension varies fastest across the grid,
      // then y, then z.
      const std::uint64_t bdx = cfg.block.x, bdy = cfg.block.y, bdz = cfg.block.z;
      const std::uint64_t gx = cfg.grid.x, gy = cfg.grid.y;
      impl.gtid = tid.x + std::uint64_t(bid.x) * bdx + tid.y * (bdx * gx) +
                  std::uint64_t(bid.y) * (bdx * bdy * gx) +
                  tid.z * (bdx * bdy * gx * gy) +
                  std::uint64_t(bid.z) * (bdx * bdy * bdz * gx * gy);
      impl.linear_in_block = static_cast<std::uint32_t>(tl);
      impl.warp_global = bl * warps_per_block + tl / 32;

      DeviceThreadCtx ctx(impl);
      try {
        kd->body(ctx);
      } catch (HardFaultEx&) {
        flush_blog();
        throw;
      }
    }
    flush_blog();
  }
  return ApiStatus::Ok;
}

ExecutionReport Runtime::run_input(const std::vector<std::uint8_t>& input,
                                   bool persistent_iter) {
  ExecutionReport report;
  report.target = target_.name;
  rep_ = &report;
  input_ = &input;
  host_state_ = HostEdgeState{};
  routine_ = "main";
  last_host_site_ = 0;
  seq_ = 0;
  marker_phase_ = 0;
  persistent_iter_ = persistent_iter;

  if (!startup_charged_) {
    report.virtual_cost += opt_.startup_cost;
    startup_charged_ = true;
  }

  try {
    HostCtx ctx(*this);
    if (persistent_iter)
      target_.persistent_proc(ctx);
    else
      target_.host_proc(ctx);
    report.exit = Exit{ExitKind::Clean, 0, {}};
  } catch (HostExitEx& e) {
    report.exit = Exit{ExitKind::Clean, e.code, {}};
  } catch (HostAbortEx& e) {
    report.exit = Exit{ExitKind::HostAbort, e.code, {}};
  } catch (HardFaultEx& e) {
    report.exit = Exit{ExitKind::HardFault, 0, e.what};
  }

  if (persistent_iter_ && report.exit.kind == ExitKind::Clean &&
      marker_phase_ != 2)
    report.marker_violation = true;

  // Final device counter snapshot; in persistent mode this repeats the end
  // marker's merge and is a no-op overwrite.
  merge_device_into_map(dev_counters_, report.raw_map);

  rep_ = nullptr;
  input_ = nullptr;
  return report;
}

// ---------------------------------------------------------------------------
// HostCtx

const std::vector<std::uint8_t>& HostCtx::input() const { return *rt_.input_; }
std::size_t HostCtx::input_size() const { return rt_.input_->size(); }

bool HostCtx::input_u32(std::size_t off, std::uint32_t* out) const {
  const auto& in = *rt_.input_;
  if (off + 4 > in.size()) return false;
  std::uint32_t v = 0;
  std::memcpy(&v, in.data() + off, 4);
  *out = v;
  return true;
}

std::vector<std::uint8_t> HostCtx::input_slice(std::size_t off,
                                               std::size_t len) const {
  const auto& in = *rt_.input_;
  if (off >= in.size()) return {};
  len = std::min(len, in.size() - off);
  return std::vector<std::uint8_t>(in.begin() + off, in.begin() + off + len);
}

void HostCtx::edge(std::uint16_t site) { rt_.host_edge(site); }
void HostCtx::routine(std::string name) { rt_.routine_ = std::move(name); }

Handle HostCtx::device_alloc(std::uint64_t bytes, ApiStatus* st) {
  rt_.cost(1);
  ApiStatus s;
  Handle h = rt_.dev_mem_.alloc(bytes, &s);
  if (s != ApiStatus::Ok) rt_.record_api_failure("device_alloc", s);
  if (st) *st = s;
  return h;
}

ApiStatus HostCtx::device_free(Handle h) {
  rt_.cost(1);
  ApiStatus s = rt_.dev_mem_.free(h);
  if (s != ApiStatus::Ok) rt_.record_api_failure("device_free", s);
  return s;
}

Handle HostCtx::host_alloc(std::uint64_t bytes, ApiStatus* st) {
  rt_.cost(1);
  ApiStatus s;
  Handle h = rt_.host_mem_.alloc(bytes, &s);
  if (s != ApiStatus::Ok) rt_.record_api_failure("host_alloc", s);
  if (st) *st = s;
  return h;
}

ApiStatus HostCtx::host_free(Handle h) {
  rt_.cost(1);
  ApiStatus s = rt_.host_mem_.free(h);
  if (s != ApiStatus::Ok) rt_.record_api_failure("host_free", s);
  return s;
}

void HostCtx::host_write(Handle h, std::uint64_t off, const std::uint8_t* src,
                         std::uint64_t len) {
  rt_.cost(1);
  if (len == 0) return;
  Allocation* a = nullptr;
  std::uint64_t usable =
      rt_.checked_access(rt_.host_mem_, false, h, off, len, AccessKind::Write,
                         rt_.routine_, rt_.last_host_site_, 0, &a);
  if (a && usable > 0) {
    a->write_bytes(off, src, usable);
    if (rt_.opt_.shadow) a->mark_init(off, usable);
  }
}

void HostCtx::host_write(Handle h, std::uint64_t off,
                         const std::vector<std::uint8_t>& src) {
  host_write(h, off, src.data(), src.size());
}

std::uint64_t HostCtx::host_read(Handle h, std::uint64_t off,
                                 std::uint32_t width) {
  rt_.cost(1);
  Allocation* a = nullptr;
  std::uint64_t usable =
      rt_.checked_access(rt_.host_mem_, false, h, off, width, AccessKind::Read,
                         rt_.routine_, rt_.last_host_site_, 0, &a);
  std::uint8_t buf[8] = {0};
  if (a && usable > 0) a->read_bytes(off, buf, std::min<std::uint64_t>(usable, 8));
  std::uint64_t v = 0;
  std::memcpy(&v, buf, 8);
  return v;
}

ApiStatus HostCtx::memcpy_h2d(Handle dev, Handle host, std::uint64_t len) {
  rt_.cost(1);
  Allocation* d = rt_.dev_mem_.find_live(dev);
  Allocation* h = rt_.host_mem_.find_live(host);
  if (!d || !h || len > d->size || len > h->size) {
    rt_.record_api_failure("memcpy_h2d", ApiStatus::InvalidValue);
    return ApiStatus::InvalidValue;
  }
  std::vector<std::uint8_t> tmp(len);
  h->read_bytes(0, tmp.data(), len);
  d->write_bytes(0, tmp.data(), len);
  if (rt_.opt_.shadow) d->mark_init(0, len);
  return ApiStatus::Ok;
}

ApiStatus HostCtx::memcpy_d2h(Handle host, Handle dev, std::uint64_t len) {
  rt_.cost(1);
  Allocation* d = rt_.dev_mem_.find_live(dev);
  Allocation* h = rt_.host_mem_.find_live(host);
  if (!d || !h || len > d->size || len > h->size) {
    rt_.record_api_failure("memcpy_d2h", ApiStatus::InvalidValue);
    return ApiStatus::InvalidValue;
  }
  std::vector<std::uint8_t> tmp(len);
  d->read_bytes(0, tmp.data(), len);
  h->write_bytes(0, tmp.data(), len);
  if (rt_.opt_.shadow) h->mark_init(0, len);
  return ApiStatus::Ok;
}

ApiStatus HostCtx::device_memset(Handle dev, std::uint8_t value,
                                 std::uint64_t len) {
  rt_.cost(1);
  Allocation* d = rt_.dev_mem_.find_live(dev);
  if (!d || len > d->size) {
    rt_.record_api_failure("device_memset", ApiStatus::InvalidValue);
    return ApiStatus::InvalidValue;
  }
  if (value != 0) {
    std::vector<std::uint8_t> tmp(len, value);
    d->write_bytes(0, tmp.data(), len);
  }
  // Pages default to zero, so a zero memset only needs the init marking.
  if (rt_.opt_.shadow) d->mark_init(0, len);
  return ApiStatus::Ok;
}

ApiStatus HostCtx::launch(const std::string& kernel, LaunchConfig cfg,
                          std::vector<KernelArg> args) {
  return rt_.do_launch(kernel, cfg, std::move(args));
}

void HostCtx::exit(int code) { throw HostExitEx{code}; }
void HostCtx::abort(int code) { throw HostAbortEx{code}; }
void HostCtx::emit_marker(std::uint32_t magic) { rt_.marker(magic); }

HostFn wrap_persistent(HostFn inner) {
  return [inner = std::move(inner)](HostCtx& ctx) {
    ctx.emit_marker(kMagicStart);
    try {
      inner(ctx);
    } catch (HostExitEx&) {
      // An early clean return still completes the loop iteration.
      ctx.emit_marker(kMagicEnd);
      throw;
    }
    ctx.emit_marker(kMagicEnd);
  };
}

ExecutionReport execute(const TargetProgram& target,
                        const std::vector<std::uint8_t>& input,
                        const ExecOptions& options) {
  Runtime rt(target, options);
  return rt.run_input(input, false);
}

PersistentSession::PersistentSession(const TargetProgram& target,
                                     ExecOptions options, std::uint32_t loop_n)
    : target_(target), options_(options), loop_n_(loop_n ? loop_n : 1) {}

PersistentSession::~PersistentSession() = default;

ExecutionReport PersistentSession::run(const std::vector<std::uint8_t>& input) {
  if (!rt_ || iterations_in_process_ >= loop_n_) {
    rt_ = std::make_unique<Runtime>(target_, options_);
    iterations_in_process_ = 0;
    ++processes_started_;
  }
  ExecutionReport rep = rt_->run_input(input, true);
  ++iterations_in_process_;
  if (rep.exit.kind != ExitKind::Clean || rep.marker_violation) rt_.reset();
  return rep;
}

std::vector<ExecutionReport> persistent_run(
    const TargetProgram& target,
    const std::vector<std::vector<std::uint8_t>>& inputs, std::uint32_t loop_n,
    const ExecOptions& options) {
  PersistentSession session(target, options, loop_n);
  std::vector<ExecutionReport> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(session.run(in));
  return out;
}

}  // namespace hdvm
}  // namespace hetfuzz
