#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "hetfuzz/rng.hpp"
#include "hetfuzz/sanitizers.hpp"
#include "hetfuzz/targets.hpp"

using namespace hetfuzz;
using namespace hetfuzz::hdvm;

namespace {

ExecOptions shadow_on() {
  ExecOptions o;
  o.shadow = true;
  return o;
}

// Every dedup key one input exposes: sanitizer findings from a shadow run
// plus the crash-derived finding if the run died.
std::set<std::uint64_t> exposed_keys(const TargetInfo& t,
                                     const std::vector<std::uint8_t>& input) {
  auto rep = execute(t.program, input, shadow_on());
  std::set<std::uint64_t> keys;
  for (const auto& f : run_all_tools(rep).findings) keys.insert(dedup_key(f));
  if (auto crash = derive_crash_finding(rep)) keys.insert(dedup_key(*crash));
  return keys;
}

std::size_t finding_count(const TargetInfo& t,
                          const std::vector<std::uint8_t>& input) {
  return run_all_tools(execute(t.program, input, shadow_on())).findings.size();
}

std::vector<std::uint8_t> u32s(std::initializer_list<std::uint32_t> xs) {
  std::vector<std::uint8_t> v;
  for (auto x : xs)
    for (int i = 0; i < 4; ++i)
      v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  return v;
}

}  // namespace

TEST_CASE("registry lists the seven built-ins with seed corpora") {
  const auto& all = registry();
  REQUIRE(all.size() == 7);
  std::vector<std::string> names;
  for (const auto& t : all) {
    names.push_back(t.program.name);
    CHECK(!t.program.input_format.empty());
    CHECK(!t.summary.empty());
    CHECK(t.seeds.size() >= 1);
    CHECK(t.seeds.size() <= 5);
    CHECK(find_target(t.program.name) == &t);
  }
  CHECK(names == std::vector<std::string>{
                     "vecadd-offbyone", "boxfilter-guardless",
                     "seamcarve-nocheck", "urng-headertrust", "shared-race",
                     "uninit-sum", "clean-pipeline"});
  CHECK(find_target("no-such-target") == nullptr);
}

TEST_CASE("six targets declare distinct seeded defects, one is clean") {
  std::set<std::uint64_t> keys;
  int buggy = 0;
  for (const auto& t : registry()) {
    if (!t.bug) {
      CHECK(t.program.name == "clean-pipeline");
      continue;
    }
    ++buggy;
    keys.insert(seeded_key(t));
  }
  CHECK(buggy == 6);
  CHECK(keys.size() == 6);  // pairwise distinct identities
  CHECK_THROWS(seeded_key(*find_target("clean-pipeline")));
}

TEST_CASE("every seed runs to a clean exit and reaches the device") {
  for (const auto& t : registry())
    for (const auto& seed : t.seeds) {
      auto rep = execute(t.program, seed, shadow_on());
      INFO(t.program.name);
      CHECK(rep.exit.kind == ExitKind::Clean);
      CHECK(rep.exit.code == 0);
      CHECK(rep.device_triggered);
      CHECK(rep.raw_map.host_partition_violations() == 0);
      CHECK(rep.raw_map.device_partition_violations() == 0);
    }
}

TEST_CASE("each witness exposes exactly the seeded defect key") {
  for (const auto& t : registry()) {
    if (!t.bug) continue;
    INFO(t.program.name);
    auto keys = exposed_keys(t, t.witness);
    CHECK(keys.count(seeded_key(t)) == 1);
  }
}

TEST_CASE("vecadd overruns only on ragged sizes") {
  const auto& t = *find_target("vecadd-offbyone");

  auto ragged = u32s({100});
  CHECK(exposed_keys(t, ragged).count(seeded_key(t)) == 1);

  auto exact = u32s({256});  // full blocks: no thread lands on idx == n
  CHECK(finding_count(t, exact) == 0);

  auto rejected = u32s({0});
  auto rep = execute(t.program, rejected, shadow_on());
  CHECK(rep.exit.code == 1);
  CHECK(!rep.device_triggered);
  CHECK(finding_count(t, rejected) == 0);
}

TEST_CASE("vecadd read and write overruns share the kernel frame") {
  const auto& t = *find_target("vecadd-offbyone");
  auto rep = execute(t.program, t.witness, shadow_on());
  auto fs = analyze(rep, Tool::MemCheck);
  std::set<FindingKind> kinds;
  for (const auto& f : fs) {
    kinds.insert(f.kind);
    CHECK(f.site[1] == "vectorAdd");
  }
  CHECK(kinds == std::set<FindingKind>{FindingKind::OobDeviceRead,
                                       FindingKind::OobDeviceWrite});
}

TEST_CASE("boxfilter overreads only on ragged widths") {
  const auto& t = *find_target("boxfilter-guardless");
  CHECK(exposed_keys(t, t.witness).count(seeded_key(t)) == 1);

  std::vector<std::uint8_t> aligned = u32s({0x46584F42, 64, 8});
  aligned.resize(12 + 64 * 8, 9);
  CHECK(finding_count(t, aligned) == 0);

  std::vector<std::uint8_t> bad_magic = u32s({0x46584F43, 100, 8});
  auto rep = execute(t.program, bad_magic, shadow_on());
  CHECK(rep.exit.code == 1);
  CHECK(finding_count(t, bad_magic) == 0);
}

TEST_CASE("boxfilter never writes out of bounds") {
  const auto& t = *find_target("boxfilter-guardless");
  auto rep = execute(t.program, t.witness, shadow_on());
  for (const auto& f : analyze(rep, Tool::MemCheck))
    CHECK(f.kind == FindingKind::OobDeviceRead);
}

TEST_CASE("seamcarve cascades from an unchecked allocation") {
  const auto& t = *find_target("seamcarve-nocheck");

  auto rep = execute(t.program, t.witness);  // no shadow needed: hard fault
  REQUIRE(rep.exit.kind == ExitKind::HardFault);
  REQUIRE(rep.api_failures.size() >= 2);  // alloc, then the blind memcpy
  CHECK(rep.api_failures[0].status == ApiStatus::OutOfMemory);
  auto crash = derive_crash_finding(rep);
  REQUIRE(crash.has_value());
  CHECK(crash->kind == FindingKind::ApiFailureCascade);
  CHECK(dedup_key(*crash) == seeded_key(t));
  CHECK(exposed_keys(t, t.witness).count(seeded_key(t)) == 1);

  // just under the device budget: allocation succeeds, run is clean
  auto fits = u32s({0x4D414553, 4096, 4096});
  auto ok = execute(t.program, fits, shadow_on());
  CHECK(ok.exit.kind == ExitKind::Clean);
  CHECK(finding_count(t, fits) == 0);

  // one row more exhausts it
  auto busts = u32s({0x4D414553, 4096, 4097});
  CHECK(exposed_keys(t, busts).count(seeded_key(t)) == 1);
}

TEST_CASE("urng trusts the header size and overruns its state buffer") {
  const auto& t = *find_target("urng-headertrust");
  CHECK(exposed_keys(t, t.witness).count(seeded_key(t)) == 1);

  auto rep = execute(t.program, t.witness, shadow_on());
  CHECK(rep.exit.kind == ExitKind::Clean);  // overrun sits inside the guard
  auto fs = analyze(rep, Tool::HostCheck);
  REQUIRE(fs.size() == 1);
  CHECK(fs[0].site[1] == "loadState");

  // header sized exactly to the buffer: clean
  CHECK(finding_count(t, t.seeds[0]) == 0);

  // sizeBuffer may exceed the payload without harm: the copy is clamped
  auto short_payload = u32s({0x474E5255, 16, 16, 0xffffffff});
  short_payload.resize(16 + 64, 1);
  auto rep2 = execute(t.program, short_payload, shadow_on());
  CHECK(rep2.exit.kind == ExitKind::Clean);
  CHECK(finding_count(t, short_payload) == 0);
}

TEST_CASE("shared-race races exactly when the stride is non-zero") {
  const auto& t = *find_target("shared-race");
  CHECK(finding_count(t, t.seeds[0]) == 0);  // stride 0
  for (std::uint32_t stride : {1u, 2u, 7u, 15u}) {
    INFO("stride " << stride);
    auto keys = exposed_keys(t, u32s({stride}));
    CHECK(keys == std::set<std::uint64_t>{seeded_key(t)});
  }
  auto rep = execute(t.program, u32s({16}), shadow_on());
  CHECK(rep.exit.code == 1);  // out-of-range stride is rejected
  CHECK(!rep.device_triggered);
}

TEST_CASE("uninit-sum reads stale memory only on the short fast path") {
  const auto& t = *find_target("uninit-sum");
  CHECK(finding_count(t, t.seeds[0]) == 0);  // slow path, cleared
  CHECK(exposed_keys(t, t.witness) ==
        std::set<std::uint64_t>{seeded_key(t)});

  // fast path with a full payload is still clean
  auto full = u32s({1, 4, 5, 6, 7, 8});
  CHECK(finding_count(t, full) == 0);

  // slow path with a short payload warns but stays clean
  auto slow_short = u32s({0, 5, 5, 6, 7, 8});
  CHECK(finding_count(t, slow_short) == 0);

  auto rep = execute(t.program, t.witness, shadow_on());
  auto fs = analyze(rep, Tool::InitCheck);
  REQUIRE(fs.size() == 1);
  CHECK(fs[0].site[1] == "sumAll");
}

TEST_CASE("clean-pipeline stays silent under 10000 random inputs") {
  const auto& t = *find_target("clean-pipeline");
  Rng rng(0x97c1e5);
  std::size_t rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint8_t> input(rng.below(33));
    for (auto& b : input) b = static_cast<std::uint8_t>(rng.below(256));
    auto rep = execute(t.program, input, shadow_on());
    REQUIRE(rep.exit.kind == ExitKind::Clean);
    if (rep.exit.code != 0) ++rejected;
    REQUIRE(run_all_tools(rep).findings.empty());
    REQUIRE(!derive_crash_finding(rep).has_value());
  }
  CHECK(rejected > 0);  // sizes below 8 bounce off validation
}

TEST_CASE("clean-pipeline witness drives extra device-only edges") {
  const auto& t = *find_target("clean-pipeline");
  auto base = execute(t.program, t.seeds[0], shadow_on());
  auto deep = execute(t.program, t.witness, shadow_on());
  CHECK(run_all_tools(deep).findings.empty());

  auto base_tr = classify_trace(base.raw_map);
  auto deep_tr = classify_trace(deep.raw_map);
  std::size_t extra_device = 0;
  for (std::size_t i = kDeviceIndexBase; i < kMapSize; ++i)
    if (deep_tr.classed[i] && !base_tr.classed[i]) ++extra_device;
  CHECK(extra_device >= 4);  // one per matched byte of the compare chain
}

TEST_CASE("buggy-target seeds expose at most their own defect") {
  // vecadd and boxfilter fire at their seeds by design; the other four
  // seeds are clean and need mutation to reach the defect.
  for (const auto& name : {"seamcarve-nocheck", "urng-headertrust",
                           "shared-race", "uninit-sum"}) {
    INFO(name);
    const auto& t = *find_target(name);
    CHECK(finding_count(t, t.seeds[0]) == 0);
  }
  for (const auto& name : {"vecadd-offbyone", "boxfilter-guardless"}) {
    INFO(name);
    const auto& t = *find_target(name);
    for (const auto& f :
         run_all_tools(execute(t.program, t.seeds[0], shadow_on())).findings)
      CHECK(f.site[1] == t.bug->where);
  }
}

TEST_CASE("kernel schemas carry invariant-satisfying seed values") {
  for (const auto& t : registry())
    for (const auto& kd : t.program.kernels) {
      if (kd.schema.empty()) continue;
      // replicate the kernel-level harness binding to vet the seeds
      LaunchConfig cfg{{1, 1, 1}, {1, 1, 1}};
      std::vector<std::uint64_t> av(kd.arg_count, 0);
      for (const auto& p : kd.schema) {
        REQUIRE(p.lo <= p.seed_value);
        REQUIRE(p.seed_value <= p.hi);
        switch (p.bind) {
          case ParamSpec::Bind::GridX: cfg.grid.x = p.seed_value; break;
          case ParamSpec::Bind::GridY: cfg.grid.y = p.seed_value; break;
          case ParamSpec::Bind::GridZ: cfg.grid.z = p.seed_value; break;
          case ParamSpec::Bind::BlockX: cfg.block.x = p.seed_value; break;
          case ParamSpec::Bind::BlockY: cfg.block.y = p.seed_value; break;
          case ParamSpec::Bind::BlockZ: cfg.block.z = p.seed_value; break;
          case ParamSpec::Bind::Scalar:
            av[p.arg_index] = p.seed_value;
            break;
          case ParamSpec::Bind::BufferLen:
            av[p.arg_index] = std::uint64_t{p.seed_value} * p.elem_width;
            break;
        }
      }
      for (const auto& inv : t.program.invariants) {
        if (inv.kernel != kd.name) continue;
        INFO(t.program.name << "/" << kd.name << ": " << inv.label);
        CHECK(inv.holds(cfg, av));
      }
    }
}

TEST_CASE("every fuzzable kernel exists and every invariant names one") {
  for (const auto& t : registry()) {
    std::set<std::string> kernel_names;
    for (const auto& kd : t.program.kernels) kernel_names.insert(kd.name);
    for (const auto& inv : t.program.invariants)
      CHECK(kernel_names.count(inv.kernel) == 1);
    // at least one kernel per target is individually fuzzable
    bool any_schema = false;
    for (const auto& kd : t.program.kernels)
      any_schema |= !kd.schema.empty();
    CHECK(any_schema);
  }
}

TEST_CASE("witness runs keep the coverage partition intact") {
  for (const auto& t : registry()) {
    auto rep = execute(t.program, t.witness, shadow_on());
    INFO(t.program.name);
    CHECK(rep.raw_map.host_partition_violations() == 0);
    CHECK(rep.raw_map.device_partition_violations() == 0);
  }
}
