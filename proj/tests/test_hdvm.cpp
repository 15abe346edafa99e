// Runtime-simulator tests. Warp counting, thread flattening and memory
// fault semantics are each checked against independent oracles written as
// plain loops here, not against the runtime's own bookkeeping.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hetfuzz/hdvm.hpp"

using namespace hetfuzz;
using namespace hetfuzz::hdvm;

namespace {

TargetProgram mk_target(std::string name, HostFn host,
                        std::vector<KernelDescriptor> kernels) {
  TargetProgram t;
  t.name = std::move(name);
  t.host_proc = std::move(host);
  t.persistent_proc = wrap_persistent(t.host_proc);
  t.kernels = std::move(kernels);
  t.input_format = "raw bytes";
  return t;
}

ExecOptions shadow_on() {
  ExecOptions o;
  o.shadow = true;
  return o;
}

// Oracle: expected device counter table for a kernel in which every thread
// walks the same site chain once per launch. One counter bump per dynamic
// edge occurrence per warp; per-thread previous-site state carries across
// launches within a process.
std::map<std::uint32_t, std::uint64_t> warp_chain_oracle(
    std::uint64_t blocks, std::uint64_t threads_per_block,
    const std::vector<std::vector<std::uint32_t>>& launches) {
  std::uint64_t warps = blocks * ((threads_per_block + 31) / 32);
  std::map<std::uint32_t, std::uint64_t> counts;
  std::uint32_t prev = 0;
  for (const auto& sites : launches) {
    for (std::uint32_t s : sites) {
      std::uint32_t slot = 32768 + ((prev ^ s) % 32768);
      counts[slot] += warps;
      prev = s >> 1;
    }
  }
  return counts;
}

void check_device_half(const CoverageMap& map,
                       const std::map<std::uint32_t, std::uint64_t>& want) {
  for (std::uint32_t i = 32768; i < 65536; ++i) {
    auto it = want.find(i);
    std::uint64_t expect = it == want.end() ? 0 : it->second;
    REQUIRE(map.device_at(i) == expect);
  }
}

TargetProgram chain_target(LaunchConfig cfg,
                           std::vector<std::vector<std::uint32_t>> launches) {
  // One kernel per chain keeps bodies trivial.
  std::size_t launch_count = launches.size();
  std::vector<KernelDescriptor> kernels;
  for (std::size_t i = 0; i < launches.size(); ++i) {
    KernelDescriptor kd;
    kd.name = "chain" + std::to_string(i);
    kd.arg_count = 0;
    auto sites = launches[i];
    kd.body = [sites](DeviceThreadCtx& d) {
      for (std::uint32_t s : sites) d.edge(s);
    };
    kernels.push_back(kd);
  }
  return mk_target("chain", [cfg, launch_count](HostCtx& h) {
    for (std::size_t i = 0; i < launch_count; ++i)
      h.launch("chain" + std::to_string(i), cfg, {});
  }, kernels);
}

}  // namespace

TEST_CASE("warp-granular counting matches the oracle across thread counts") {
  std::vector<std::vector<std::uint32_t>> launches = {{11, 29, 11, 500}};
  for (std::uint32_t t : {1u, 31u, 32u, 33u, 64u, 100u, 1024u}) {
    LaunchConfig cfg;
    cfg.block.x = t;
    TargetProgram tp = chain_target(cfg, launches);
    ExecutionReport rep = execute(tp, {});
    REQUIRE(rep.exit.kind == ExitKind::Clean);
    check_device_half(rep.raw_map, warp_chain_oracle(1, t, launches));
  }
}

TEST_CASE("a 33-thread block counts every edge twice") {
  // Two warps: lanes 0-31 and the straggler lane 32.
  LaunchConfig cfg;
  cfg.block.x = 33;
  TargetProgram tp = chain_target(cfg, {{7}});
  ExecutionReport rep = execute(tp, {});
  REQUIRE(rep.raw_map.device_at(32768 + (7 % 32768)) == 2);
}

TEST_CASE("multi-block launches count one bump per warp per block") {
  LaunchConfig cfg;
  cfg.grid.x = 2;
  cfg.grid.y = 2;
  cfg.block.x = 40;  // 2 warps per block
  TargetProgram tp = chain_target(cfg, {{3, 9}});
  ExecutionReport rep = execute(tp, {});
  check_device_half(rep.raw_map, warp_chain_oracle(4, 40, {{3, 9}}));
}

TEST_CASE("device prev-site state carries across launches in one process") {
  LaunchConfig cfg;
  cfg.block.x = 8;
  std::vector<std::vector<std::uint32_t>> launches = {{5, 6}, {6, 5, 6}};
  TargetProgram tp = chain_target(cfg, launches);
  ExecutionReport rep = execute(tp, {});
  check_device_half(rep.raw_map, warp_chain_oracle(1, 8, launches));
}

TEST_CASE("a single divergent thread contributes exactly one bump") {
  KernelDescriptor kd;
  kd.name = "div";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) {
    if (d.global_tid() == 7) d.edge(99);
  };
  LaunchConfig cfg;
  cfg.block.x = 32;
  TargetProgram tp = mk_target("div", [cfg](HostCtx& h) {
    h.launch("div", cfg, {});
  }, {kd});
  ExecutionReport rep = execute(tp, {});
  // Only thread 7 executes the edge; its warp registers occurrence 1 once.
  REQUIRE(rep.raw_map.device_at(32768 + 99) == 1);
  std::uint64_t total = 0;
  for (std::uint32_t c : rep.raw_map.device_half()) total += c;
  REQUIRE(total == 1);
}

TEST_CASE("forked lanes each register their own edge once per warp") {
  KernelDescriptor kd;
  kd.name = "fork";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) {
    d.edge(d.global_tid() % 2 == 0 ? 50u : 60u);
  };
  LaunchConfig cfg;
  cfg.block.x = 32;
  TargetProgram tp = mk_target("fork", [cfg](HostCtx& h) {
    h.launch("fork", cfg, {});
  }, {kd});
  ExecutionReport rep = execute(tp, {});
  REQUIRE(rep.raw_map.device_at(32768 + 50) == 1);
  REQUIRE(rep.raw_map.device_at(32768 + 60) == 1);
}

TEST_CASE("per-warp loop count equals the maximum lane trip count") {
  KernelDescriptor kd;
  kd.name = "loop";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) {
    for (std::uint64_t i = 0; i < d.global_tid(); ++i) d.edge(77);
  };
  LaunchConfig cfg;
  cfg.block.x = 32;
  TargetProgram tp = mk_target("loop", [cfg](HostCtx& h) {
    h.launch("loop", cfg, {});
  }, {kd});
  ExecutionReport rep = execute(tp, {});
  // The warp re-executes the loop body as long as any lane is active: the
  // deepest lane loops 31 times. First iteration slot differs from the rest
  // because prev starts at 0 and then sticks at 77 >> 1.
  std::uint64_t total = 0;
  for (std::uint32_t c : rep.raw_map.device_half()) total += c;
  REQUIRE(total == 31);
  REQUIRE(rep.raw_map.device_at(32768 + 77) == 1);
  REQUIRE(rep.raw_map.device_at(32768 + (((77 >> 1) ^ 77) % 32768)) == 30);
}

TEST_CASE("global tid flattening matches the mixed-radix oracle") {
  LaunchConfig cfg;
  cfg.grid = {2, 3, 2};
  cfg.block = {4, 2, 3};
  const std::uint64_t tpb = cfg.threads_per_block();
  const std::uint64_t total = cfg.total_threads();

  KernelDescriptor kd;
  kd.name = "ids";
  kd.arg_count = 1;
  kd.body = [tpb](DeviceThreadCtx& d) {
    Dim3 t = d.thread_idx(), b = d.block_idx();
    Dim3 bd = d.block_dim(), g = d.grid_dim();
    std::uint64_t block_linear =
        b.x + std::uint64_t(b.y) * g.x + std::uint64_t(b.z) * g.x * g.y;
    std::uint64_t lin =
        t.x + std::uint64_t(t.y) * bd.x + std::uint64_t(t.z) * bd.x * bd.y;
    d.write(d.arg_buffer(0), (block_linear * tpb + lin) * 8, 8,
            d.global_tid());
  };

  std::vector<std::uint64_t> got_ids(total);
  TargetProgram tp = mk_target("ids", [&, cfg, total](HostCtx& h) {
    Handle dev = h.device_alloc(total * 8);
    Handle hb = h.host_alloc(total * 8);
    h.launch("ids", cfg, {KernelArg::make_buffer(dev)});
    h.memcpy_d2h(hb, dev, total * 8);
    for (std::uint64_t i = 0; i < total; ++i)
      got_ids[i] = h.host_read(hb, i * 8, 8);
  }, {kd});
  REQUIRE(execute(tp, {}).exit.kind == ExitKind::Clean);

  // Oracle: walk blocks then threads in x-fastest order and compute the
  // flattened id from scratch:
  //   tid = tx + bx*BDX + ty*BDX*GX + by*BDX*BDY*GX + tz*BDX*BDY*GX*GY
  //       + bz*BDX*BDY*BDZ*GX*GY
  std::set<std::uint64_t> seen;
  std::uint64_t slot = 0;
  for (std::uint32_t bz = 0; bz < 2; ++bz)
    for (std::uint32_t by = 0; by < 3; ++by)
      for (std::uint32_t bx = 0; bx < 2; ++bx)
        for (std::uint32_t tz = 0; tz < 3; ++tz)
          for (std::uint32_t ty = 0; ty < 2; ++ty)
            for (std::uint32_t tx = 0; tx < 4; ++tx) {
              std::uint64_t want = tx + bx * 4ull + ty * (4ull * 2) +
                                   by * (4ull * 2 * 2) +
                                   tz * (4ull * 2 * 2 * 3) +
                                   bz * (4ull * 2 * 3 * 2 * 3);
              REQUIRE(got_ids[slot] == want);
              seen.insert(want);
              ++slot;
            }
  REQUIRE(seen.size() == total);  // the flattening is a bijection
  REQUIRE(*seen.begin() == 0);
  REQUIRE(*seen.rbegin() == total - 1);
}

TEST_CASE("in-bounds reads of unwritten memory return zero") {
  KernelDescriptor kd;
  kd.name = "rd";
  kd.arg_count = 1;
  std::uint64_t seen = 1;
  kd.body = [&seen](DeviceThreadCtx& d) {
    seen = d.read(d.arg_buffer(0), 16, 4);
  };
  TargetProgram tp = mk_target("rd", [](HostCtx& h) {
    Handle dev = h.device_alloc(1024);
    h.launch("rd", {}, {KernelArg::make_buffer(dev)});
    h.device_free(dev);
  }, {kd});
  REQUIRE(execute(tp, {}).exit.kind == ExitKind::Clean);
  REQUIRE(seen == 0);
}

TEST_CASE("guard-window overruns survive and are recorded only under shadow") {
  // size 1024, read at offset 1024 width 4: first byte past the end.
  auto poke = [](std::uint64_t off, std::uint32_t width) {
    KernelDescriptor kd;
    kd.name = "poke";
    kd.arg_count = 1;
    kd.body = [off, width](DeviceThreadCtx& d) {
      d.edge(1);
      d.read(d.arg_buffer(0), off, width);
    };
    return mk_target("poke", [](HostCtx& h) {
      Handle dev = h.device_alloc(1024);
      h.launch("poke", {}, {KernelArg::make_buffer(dev)});
      h.device_free(dev);
    }, {kd});
  };

  // Silent overrun: clean exit, invisible without shadow.
  TargetProgram t1 = poke(1024, 4);
  ExecutionReport plain = execute(t1, {});
  REQUIRE(plain.exit.kind == ExitKind::Clean);
  REQUIRE(plain.device_access_log.empty());

  ExecutionReport shadowed = execute(t1, {}, shadow_on());
  REQUIRE(shadowed.exit.kind == ExitKind::Clean);
  REQUIRE(shadowed.device_access_log.size() == 1);
  const AccessRecord& rec = shadowed.device_access_log[0];
  REQUIRE(rec.fault);
  REQUIRE(rec.fault_distance == 1);  // first out-of-bounds byte
  REQUIRE(rec.kind == AccessKind::Read);
  REQUIRE(rec.where == "poke");
  REQUIRE(rec.site == 1);

  // Straddling access: starts in bounds, distance still 1.
  ExecutionReport straddle = execute(poke(1022, 4), {}, shadow_on());
  REQUIRE(straddle.exit.kind == ExitKind::Clean);
  REQUIRE(straddle.device_access_log[0].fault_distance == 1);

  // Last silent offset: reach exactly the guard size.
  REQUIRE(execute(poke(1024 + 4092, 4), {}).exit.kind == ExitKind::Clean);

  // One byte further: the access escapes the guard window and faults even
  // without shadow, and the faulting record is present and last.
  ExecutionReport hard = execute(poke(1024 + 4093, 4), {});
  REQUIRE(hard.exit.kind == ExitKind::HardFault);
  REQUIRE(!hard.device_access_log.empty());
  REQUIRE(hard.device_access_log.back().fault);
  REQUIRE(hard.device_access_log.back().fault_distance == 4094);
}

TEST_CASE("oob writes are clamped and never corrupt other allocations") {
  KernelDescriptor kd;
  kd.name = "wr";
  kd.arg_count = 2;
  kd.body = [](DeviceThreadCtx& d) {
    d.write(d.arg_buffer(0), 1020, 8, 0x1122334455667788ull);  // 4 bytes OOB
  };
  std::uint64_t neighbor = 1;
  TargetProgram tp = mk_target("wr", [&neighbor](HostCtx& h) {
    Handle a = h.device_alloc(1024);
    Handle b = h.device_alloc(1024);
    h.launch("wr", {}, {KernelArg::make_buffer(a), KernelArg::make_buffer(b)});
    Handle hb = h.host_alloc(1024);
    h.memcpy_d2h(hb, b, 1024);
    neighbor = h.host_read(hb, 0, 8);
  }, {kd});
  REQUIRE(execute(tp, {}, shadow_on()).exit.kind == ExitKind::Clean);
  REQUIRE(neighbor == 0);
}

TEST_CASE("wild accesses hard-fault regardless of shadow") {
  // Through a null handle from a failed allocation.
  KernelDescriptor kd;
  kd.name = "null";
  kd.arg_count = 1;
  kd.body = [](DeviceThreadCtx& d) { d.read(d.arg_buffer(0), 8, 4); };
  TargetProgram tp = mk_target("null", [](HostCtx& h) {
    Handle live = h.device_alloc(64);
    (void)live;
    ApiStatus st;
    Handle bad = h.device_alloc(1ull << 40, &st);  // over capacity
    h.launch("null", {}, {KernelArg::make_buffer(bad)});
  }, {kd});
  ExecutionReport rep = execute(tp, {});
  REQUIRE(rep.exit.kind == ExitKind::HardFault);
  REQUIRE(rep.api_failures.size() == 1);
  REQUIRE(rep.api_failures[0].call == "device_alloc");
  REQUIRE(rep.api_failures[0].status == ApiStatus::OutOfMemory);
  REQUIRE(rep.device_access_log.size() == 1);
  REQUIRE(rep.device_access_log[0].handle == 0);
  // Address 0+8 is nowhere near the live allocation.
  REQUIRE(rep.device_access_log[0].fault_distance > (1ull << 40));

  // Through a freed handle.
  KernelDescriptor kf;
  kf.name = "freed";
  kf.arg_count = 1;
  kf.body = [](DeviceThreadCtx& d) { d.write(d.arg_buffer(0), 0, 4, 1); };
  TargetProgram tf = mk_target("freed", [](HostCtx& h) {
    Handle dev = h.device_alloc(256);
    h.device_free(dev);
    h.launch("freed", {}, {KernelArg::make_buffer(dev)});
  }, {kf});
  ExecutionReport rf = execute(tf, {});
  REQUIRE(rf.exit.kind == ExitKind::HardFault);
  REQUIRE(rf.exit.description.find("dead handle") != std::string::npos);
}

TEST_CASE("uninitialized reads are flagged under shadow") {
  KernelDescriptor kd;
  kd.name = "uninit";
  kd.arg_count = 1;
  kd.body = [](DeviceThreadCtx& d) {
    d.read(d.arg_buffer(0), 0, 4);    // initialized via memcpy
    d.read(d.arg_buffer(0), 512, 4);  // never written
  };
  TargetProgram tp = mk_target("uninit", [](HostCtx& h) {
    Handle dev = h.device_alloc(1024);
    Handle hb = h.host_alloc(256);
    std::vector<std::uint8_t> bytes(256, 7);
    h.host_write(hb, 0, bytes);
    h.memcpy_h2d(dev, hb, 256);  // initializes the first quarter only
    h.launch("uninit", {}, {KernelArg::make_buffer(dev)});
  }, {kd});
  ExecutionReport rep = execute(tp, {}, shadow_on());
  REQUIRE(rep.exit.kind == ExitKind::Clean);
  REQUIRE(rep.device_access_log.size() == 2);
  REQUIRE(!rep.device_access_log[0].uninit);
  REQUIRE(rep.device_access_log[1].uninit);

  // device_memset marks memory as initialized.
  TargetProgram tz = mk_target("zeroed", [](HostCtx& h) {
    Handle dev = h.device_alloc(1024);
    h.device_memset(dev, 0, 1024);
    h.launch("uninit", {}, {KernelArg::make_buffer(dev)});
  }, {kd});
  ExecutionReport rz = execute(tz, {}, shadow_on());
  REQUIRE(!rz.device_access_log[0].uninit);
  REQUIRE(!rz.device_access_log[1].uninit);
}

TEST_CASE("launch validation rejects bad configs and unknown kernels") {
  TargetProgram tp = mk_target("bad", [](HostCtx& h) {
    LaunchConfig too_fat;
    too_fat.block.x = 1025;
    REQUIRE(h.launch("nope", {}, {}) == ApiStatus::InvalidValue);
    REQUIRE(h.launch("k", too_fat, {}) == ApiStatus::InvalidConfiguration);
    LaunchConfig zero_dim;
    zero_dim.grid.y = 0;
    REQUIRE(h.launch("k", zero_dim, {}) == ApiStatus::InvalidConfiguration);
    LaunchConfig huge;
    huge.grid.x = 1 << 20;
    huge.block.x = 1024;  // 2^30 threads total
    REQUIRE(h.launch("k", huge, {}) == ApiStatus::InvalidConfiguration);
    REQUIRE(h.launch("k", {}, {KernelArg::make_scalar(1)}) ==
            ApiStatus::InvalidValue);  // arg count mismatch
  }, {{"k", [](DeviceThreadCtx&) {}, 0, {}}});
  ExecutionReport rep = execute(tp, {});
  REQUIRE(rep.exit.kind == ExitKind::Clean);
  REQUIRE(rep.api_failures.size() == 5);
  REQUIRE(!rep.device_triggered);
  REQUIRE(rep.launch_log.empty());
}

TEST_CASE("launch log captures config and argument view") {
  KernelDescriptor kd{"k", [](DeviceThreadCtx&) {}, 3, {}};
  TargetProgram tp = mk_target("log", [](HostCtx& h) {
    Handle dev = h.device_alloc(4096);
    LaunchConfig cfg;
    cfg.grid.x = 3;
    cfg.block.x = 64;
    h.launch("k", cfg,
             {KernelArg::make_scalar(42), KernelArg::make_buffer(dev),
              KernelArg::make_buffer(Handle{})});
  }, {kd});
  ExecutionReport rep = execute(tp, {});
  REQUIRE(rep.launch_log.size() == 1);
  const LaunchRecord& lr = rep.launch_log[0];
  REQUIRE(lr.kernel == "k");
  REQUIRE(lr.cfg.grid.x == 3);
  REQUIRE(lr.cfg.block.x == 64);
  std::vector<std::uint64_t> want = {42, 4096, 0};
  REQUIRE(lr.args_view == want);
  REQUIRE(rep.device_triggered);
}

TEST_CASE("shared memory is visible within a block and reset between blocks") {
  KernelDescriptor kd;
  kd.name = "sh";
  kd.arg_count = 1;
  kd.body = [](DeviceThreadCtx& d) {
    Dim3 t = d.thread_idx();
    std::uint64_t block_linear = d.block_idx().x;
    if (t.x == 0) {
      // Reads whatever the previous block left behind; must be zero.
      std::uint32_t v = d.shared_read(100, 4);
      d.write(d.arg_buffer(0), block_linear * 4, 4, v);
      d.shared_write(0, 4, 7);
    } else if (t.x == 1) {
      // Sequential within a block: sees thread 0's write.
      std::uint32_t v = d.shared_read(0, 4);
      d.write(d.arg_buffer(0), 64 + block_linear * 4, 4, v);
      d.shared_write(100, 4, 42);  // pollute for the next block
    }
  };
  std::vector<std::uint64_t> leaked(4), passed(4);
  TargetProgram tp = mk_target("sh", [&](HostCtx& h) {
    Handle dev = h.device_alloc(256);
    LaunchConfig cfg;
    cfg.grid.x = 4;
    cfg.block.x = 2;
    h.launch("sh", cfg, {KernelArg::make_buffer(dev)});
    Handle hb = h.host_alloc(256);
    h.memcpy_d2h(hb, dev, 256);
    for (int b = 0; b < 4; ++b) {
      leaked[b] = h.host_read(hb, b * 4, 4);
      passed[b] = h.host_read(hb, 64 + b * 4, 4);
    }
  }, {kd});
  REQUIRE(execute(tp, {}).exit.kind == ExitKind::Clean);
  for (int b = 0; b < 4; ++b) {
    REQUIRE(leaked[b] == 0);   // no cross-block leakage
    REQUIRE(passed[b] == 7);   // intra-block visibility
  }
}

TEST_CASE("shared access logs are epoch-ordered with stable ties") {
  KernelDescriptor kd;
  kd.name = "ep";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) {
    std::uint32_t lane = d.thread_idx().x;
    d.shared_write(lane * 4, 4, lane);  // epoch 0
    d.barrier();
    d.shared_read(((lane + 1) % 4) * 4, 4);  // epoch 1
  };
  TargetProgram tp = mk_target("ep", [](HostCtx& h) {
    LaunchConfig cfg;
    cfg.block.x = 4;
    h.launch("ep", cfg, {});
  }, {kd});

  ExecutionReport plain = execute(tp, {});
  REQUIRE(plain.shared_logs.empty());  // shadow-only bookkeeping

  ExecutionReport rep = execute(tp, {}, shadow_on());
  REQUIRE(rep.shared_logs.size() == 1);
  const SharedBlockLog& log = rep.shared_logs[0];
  REQUIRE(log.records.size() == 8);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(log.records[i].epoch == 0);
    REQUIRE(log.records[i].kind == AccessKind::Write);
    REQUIRE(log.records[i].thread_in_block == std::uint32_t(i));
    REQUIRE(log.records[4 + i].epoch == 1);
    REQUIRE(log.records[4 + i].kind == AccessKind::Read);
    REQUIRE(log.records[4 + i].thread_in_block == std::uint32_t(i));
  }
}

TEST_CASE("virtual cost follows the published tariff exactly") {
  KernelDescriptor kd;
  kd.name = "k";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) { d.edge(1); };
  TargetProgram tp = mk_target("cost", [](HostCtx& h) {
    h.edge(1);
    h.edge(2);
    Handle dev = h.device_alloc(64);
    (void)dev;
    h.launch("k", {}, {});
  }, {kd});

  // 1000 startup + 2*2 host edges + 1 alloc + 1 launch + 2 device edge.
  ExecutionReport both = execute(tp, {});
  REQUIRE(both.virtual_cost == 1000 + 4 + 1 + 1 + 2);

  ExecOptions no_host;
  no_host.host_coverage = false;
  REQUIRE(execute(tp, {}, no_host).virtual_cost == 1000 + 2 + 1 + 1 + 2);

  ExecOptions no_dev;
  no_dev.device_coverage = false;
  REQUIRE(execute(tp, {}, no_dev).virtual_cost == 1000 + 4 + 1 + 1 + 1);

  ExecOptions neither;
  neither.host_coverage = false;
  neither.device_coverage = false;
  REQUIRE(execute(tp, {}, neither).virtual_cost == 1000 + 2 + 1 + 1 + 1);

  // Shadow adds one unit per retained record; no accesses here, so only
  // coverage-off discounts apply.
  ExecOptions sh = shadow_on();
  sh.host_coverage = false;
  sh.device_coverage = false;
  REQUIRE(execute(tp, {}, sh).virtual_cost == 1000 + 2 + 1 + 1 + 1);
}

TEST_CASE("host coverage toggles map writes without hiding host edges") {
  TargetProgram tp = mk_target("hc", [](HostCtx& h) {
    h.edge(5);
    h.edge(9);
  }, {});
  ExecutionReport on = execute(tp, {});
  REQUIRE(on.host_edges_recorded == 2);
  bool any = false;
  for (std::uint8_t v : on.raw_map.host_half()) any |= v != 0;
  REQUIRE(any);

  ExecOptions off;
  off.host_coverage = false;
  ExecutionReport offr = execute(tp, {}, off);
  REQUIRE(offr.host_edges_recorded == 0);
  for (std::uint8_t v : offr.raw_map.host_half()) REQUIRE(v == 0);
}

TEST_CASE("exit and abort terminate with the declared kinds") {
  TargetProgram te = mk_target("e", [](HostCtx& h) { h.exit(3); }, {});
  ExecutionReport re = execute(te, {});
  REQUIRE(re.exit.kind == ExitKind::Clean);
  REQUIRE(re.exit.code == 3);

  TargetProgram ta = mk_target("a", [](HostCtx& h) { h.abort(134); }, {});
  ExecutionReport ra = execute(ta, {});
  REQUIRE(ra.exit.kind == ExitKind::HostAbort);
  REQUIRE(ra.exit.code == 134);
}

TEST_CASE("host allocation faults mirror device semantics") {
  TargetProgram tp = mk_target("hw", [](HostCtx& h) {
    h.routine("copy_input");
    Handle hb = h.host_alloc(128);
    std::vector<std::uint8_t> data(130, 1);
    h.host_write(hb, 0, data);  // 2 bytes past the end, inside the guard
  }, {});
  ExecutionReport rep = execute(tp, {}, shadow_on());
  REQUIRE(rep.exit.kind == ExitKind::Clean);
  REQUIRE(rep.host_access_log.size() == 1);
  REQUIRE(rep.host_access_log[0].fault);
  REQUIRE(rep.host_access_log[0].where == "copy_input");

  TargetProgram tf = mk_target("hf", [](HostCtx& h) {
    Handle hb = h.host_alloc(128);
    std::vector<std::uint8_t> data(128 + 4097, 1);
    h.host_write(hb, 0, data);  // escapes the guard window
  }, {});
  REQUIRE(execute(tf, {}).exit.kind == ExitKind::HardFault);
}

TEST_CASE("persistent iterations reproduce fresh-process traces exactly") {
  // Input-dependent host branching plus device work.
  KernelDescriptor kd;
  kd.name = "work";
  kd.arg_count = 1;
  kd.body = [](DeviceThreadCtx& d) {
    d.edge(10);
    if (d.arg_scalar(0) % 2 == 1) d.edge(11);
  };
  HostFn host = [](HostCtx& h) {
    h.edge(1);
    if (h.input_size() == 0) h.exit(1);
    std::uint8_t b = h.input()[0];
    h.edge(2 + b % 3);
    LaunchConfig cfg;
    cfg.block.x = 48;
    h.launch("work", cfg, {KernelArg::make_scalar(b)});
    Handle dev = h.device_alloc(64);
    h.device_free(dev);
  };
  TargetProgram tp = mk_target("persist", host, {kd});

  std::vector<std::vector<std::uint8_t>> inputs = {
      {0}, {1}, {}, {2}, {1, 9}, {5}};
  PersistentSession session(tp, {}, 100);
  for (const auto& in : inputs) {
    ExecutionReport fresh = execute(tp, in);
    ExecutionReport pers = session.run(in);
    REQUIRE(pers.exit.kind == fresh.exit.kind);
    REQUIRE(pers.exit.code == fresh.exit.code);
    REQUIRE(pers.marker_violation == false);
    REQUIRE(pers.raw_map.host_half() == fresh.raw_map.host_half());
    REQUIRE(pers.raw_map.device_half() == fresh.raw_map.device_half());
  }
  REQUIRE(session.processes_started() == 1);
}

TEST_CASE("persistent mode pays startup once per process") {
  TargetProgram tp = mk_target("cheap", [](HostCtx& h) { h.edge(1); }, {});
  PersistentSession session(tp, {}, 100);
  ExecutionReport fresh = execute(tp, {});
  ExecutionReport first = session.run({});
  ExecutionReport second = session.run({});
  ExecutionReport third = session.run({});
  REQUIRE(first.virtual_cost == fresh.virtual_cost);
  REQUIRE(second.virtual_cost == fresh.virtual_cost - 1000);
  REQUIRE(third.virtual_cost == second.virtual_cost);
}

TEST_CASE("persistent processes recycle after loop_n iterations") {
  TargetProgram tp = mk_target("cheap", [](HostCtx& h) { h.edge(1); }, {});
  PersistentSession session(tp, {}, 3);
  for (int i = 0; i < 7; ++i) session.run({});
  REQUIRE(session.processes_started() == 3);  // 3 + 3 + 1
}

TEST_CASE("non-clean exits recycle the persistent process") {
  KernelDescriptor kd;
  kd.name = "boom";
  kd.arg_count = 1;
  kd.body = [](DeviceThreadCtx& d) { d.read(d.arg_buffer(0), 0, 4); };
  HostFn host = [](HostCtx& h) {
    h.edge(1);
    if (h.input_size() > 0 && h.input()[0] == 0xff) {
      ApiStatus st;
      Handle bad = h.device_alloc(1ull << 40, &st);
      h.launch("boom", {}, {KernelArg::make_buffer(bad)});
    }
  };
  TargetProgram tp = mk_target("crashy", host, {kd});
  PersistentSession session(tp, {}, 100);
  session.run({0});
  REQUIRE(session.processes_started() == 1);
  ExecutionReport crash = session.run({0xff});
  REQUIRE(crash.exit.kind == ExitKind::HardFault);
  session.run({0});
  REQUIRE(session.processes_started() == 2);  // restarted after the fault
}

TEST_CASE("marker protocol violations are flagged and recycle the process") {
  TargetProgram tp;
  tp.name = "twice";
  tp.host_proc = [](HostCtx& h) { (void)h; };
  tp.persistent_proc = [](HostCtx& h) {
    h.emit_marker(kMagicStart);
    h.emit_marker(kMagicStart);  // double start
    h.emit_marker(kMagicEnd);
  };
  PersistentSession session(tp, {}, 100);
  ExecutionReport rep = session.run({});
  REQUIRE(rep.marker_violation);
  session.run({});
  REQUIRE(session.processes_started() == 2);

  TargetProgram tm;
  tm.name = "missing";
  tm.host_proc = [](HostCtx& h) { (void)h; };
  tm.persistent_proc = [](HostCtx& h) { h.emit_marker(kMagicStart); };
  PersistentSession s2(tm, {}, 100);
  REQUIRE(s2.run({}).marker_violation);
}

TEST_CASE("start markers reset device coverage state between iterations") {
  KernelDescriptor kd;
  kd.name = "k";
  kd.arg_count = 0;
  kd.body = [](DeviceThreadCtx& d) { d.edge(21); };
  TargetProgram tp = mk_target("reset", [](HostCtx& h) {
    h.launch("k", {}, {});
  }, {kd});
  PersistentSession session(tp, {}, 100);
  ExecutionReport r1 = session.run({});
  ExecutionReport r2 = session.run({});
  // Without the reset the second iteration would show count 2 or a chained
  // second slot; with it both iterations are identical.
  REQUIRE(r1.raw_map.device_half() == r2.raw_map.device_half());
  REQUIRE(r1.raw_map.device_at(32768 + 21) == 1);
}

TEST_CASE("early clean rejection completes the persistent protocol") {
  TargetProgram tp = mk_target("reject", [](HostCtx& h) {
    if (h.input_size() < 4) h.exit(1);
  }, {});
  PersistentSession session(tp, {}, 100);
  ExecutionReport rep = session.run({});
  REQUIRE(rep.exit.kind == ExitKind::Clean);
  REQUIRE(rep.exit.code == 1);
  REQUIRE(!rep.marker_violation);
  session.run({});
  REQUIRE(session.processes_started() == 1);
}

TEST_CASE("identical runs produce identical reports") {
  LaunchConfig cfg;
  cfg.block.x = 40;
  TargetProgram tp = chain_target(cfg, {{1, 2, 3, 2, 1}});
  ExecutionReport a = execute(tp, {1, 2, 3});
  ExecutionReport b = execute(tp, {1, 2, 3});
  REQUIRE(a.raw_map.host_half() == b.raw_map.host_half());
  REQUIRE(a.raw_map.device_half() == b.raw_map.device_half());
  REQUIRE(a.virtual_cost == b.virtual_cost);
  REQUIRE(a.exit.kind == b.exit.kind);
}

TEST_CASE("device counters saturate instead of wrapping") {
  CoverageMap map;
  std::vector<std::uint32_t> counters(32768, 0);
  counters[4] = 0xffffffffu;
  merge_device_into_map(counters, map);
  REQUIRE(map.device_at(32768 + 4) == 0xffffffffu);
}
