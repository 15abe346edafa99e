#include "hetfuzz/sanitizers.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

namespace hetfuzz {

namespace {

std::string site_frame(std::uint32_t site) {
  return "site:" + std::to_string(site);
}

// One finding per distinct (kind, routine, site) triple, first occurrence
// wins so detail text stays deterministic.
struct FindingSink {
  Tool tool;
  const hdvm::ExecutionReport& rep;
  std::vector<Finding> out;
  std::set<std::tuple<FindingKind, std::string, std::uint32_t>> seen;

  void add(FindingKind kind, const std::string& where, std::uint32_t site,
           std::string detail) {
    if (!seen.insert({kind, where, site}).second) return;
    Finding f;
    f.tool = tool;
    f.kind = kind;
    f.site = {rep.target, where, site_frame(site)};
    f.detail = std::move(detail);
    out.push_back(std::move(f));
  }
};

bool failure_precedes(const hdvm::ExecutionReport& rep, std::uint64_t seq) {
  for (const auto& af : rep.api_failures)
    if (af.seq < seq) return true;
  return false;
}

// Classification shared by MemCheck and crash derivation: a wild access
// (null or dead handle) downstream of an ignored API failure is the
// cascade pattern; everything else is a plain out-of-bounds access.
FindingKind classify_device_fault(const hdvm::ExecutionReport& rep,
                                  const hdvm::AccessRecord& rec) {
  if (rec.wild && failure_precedes(rep, rec.seq))
    return FindingKind::ApiFailureCascade;
  return rec.kind == hdvm::AccessKind::Write ? FindingKind::OobDeviceWrite
                                             : FindingKind::OobDeviceRead;
}

std::string device_fault_detail(const hdvm::AccessRecord& rec) {
  std::string d = rec.kind == hdvm::AccessKind::Write ? "write" : "read";
  d += " of " + std::to_string(rec.width) + " bytes";
  if (rec.wild)
    d += " through invalid handle, distance " +
         std::to_string(rec.fault_distance) + " from nearest allocation";
  else
    d += " past allocation end, distance " +
         std::to_string(rec.fault_distance);
  d += ", thread " + std::to_string(rec.thread);
  return d;
}

std::vector<Finding> analyze_memcheck(const hdvm::ExecutionReport& rep) {
  FindingSink sink{Tool::MemCheck, rep, {}, {}};
  for (const auto& rec : rep.device_access_log) {
    if (!rec.fault) continue;
    sink.add(classify_device_fault(rep, rec), rec.where, rec.site,
             device_fault_detail(rec));
  }
  return std::move(sink.out);
}

std::vector<Finding> analyze_initcheck(const hdvm::ExecutionReport& rep) {
  FindingSink sink{Tool::InitCheck, rep, {}, {}};
  for (const auto& rec : rep.device_access_log) {
    if (rec.fault || !rec.uninit) continue;
    if (rec.kind != hdvm::AccessKind::Read) continue;
    sink.add(FindingKind::UninitDeviceRead, rec.where, rec.site,
             "read of " + std::to_string(rec.width) +
                 " uninitialized bytes at offset " +
                 std::to_string(rec.offset) + ", thread " +
                 std::to_string(rec.thread));
  }
  return std::move(sink.out);
}

bool bytes_overlap(const hdvm::SharedAccess& a, const hdvm::SharedAccess& b) {
  return a.addr < b.addr + b.width && b.addr < a.addr + a.width;
}

std::vector<Finding> analyze_racecheck(const hdvm::ExecutionReport& rep) {
  FindingSink sink{Tool::RaceCheck, rep, {}, {}};
  for (const auto& blk : rep.shared_logs) {
    // Records are epoch-ordered; scan each same-epoch window pairwise.
    const auto& rs = blk.records;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        if (rs[j].epoch != rs[i].epoch) break;
        if (rs[i].thread_in_block == rs[j].thread_in_block) continue;
        if (!bytes_overlap(rs[i], rs[j])) continue;
        bool any_write = rs[i].kind == hdvm::AccessKind::Write ||
                         rs[j].kind == hdvm::AccessKind::Write;
        if (!any_write) continue;
        // Attribute the race to the later access in program order.
        const auto& loser = rs[j];
        sink.add(FindingKind::SharedRace, blk.kernel, loser.site,
                 "unsynchronized accesses to shared address " +
                     std::to_string(rs[i].addr) +
                     " by threads " + std::to_string(rs[i].thread_in_block) +
                     " and " + std::to_string(rs[j].thread_in_block) +
                     " in epoch " + std::to_string(rs[i].epoch));
      }
    }
  }
  return std::move(sink.out);
}

std::vector<Finding> analyze_hostcheck(const hdvm::ExecutionReport& rep) {
  FindingSink sink{Tool::HostCheck, rep, {}, {}};
  for (const auto& rec : rep.host_access_log) {
    if (!rec.fault) continue;
    std::string detail =
        (rec.kind == hdvm::AccessKind::Write ? std::string("write")
                                             : std::string("read")) +
        " of " + std::to_string(rec.width) +
        " bytes past host allocation end, distance " +
        std::to_string(rec.fault_distance);
    sink.add(FindingKind::HeapOverflowHost, rec.where, rec.site,
             std::move(detail));
  }
  return std::move(sink.out);
}

std::uint64_t tool_records(const hdvm::ExecutionReport& rep, Tool tool) {
  switch (tool) {
    case Tool::HostCheck:
      return rep.host_access_log.size();
    case Tool::MemCheck:
    case Tool::InitCheck:
      return rep.device_access_log.size();
    case Tool::RaceCheck: {
      std::uint64_t n = 0;
      for (const auto& blk : rep.shared_logs) n += blk.records.size();
      return n;
    }
  }
  return 0;
}

}  // namespace

const char* to_string(Tool tool) {
  switch (tool) {
    case Tool::HostCheck:
      return "hostcheck";
    case Tool::MemCheck:
      return "memcheck";
    case Tool::InitCheck:
      return "initcheck";
    case Tool::RaceCheck:
      return "racecheck";
  }
  return "?";
}

const char* to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::HeapOverflowHost:
      return "heap-overflow-host";
    case FindingKind::StackOverflowHost:
      return "stack-overflow-host";
    case FindingKind::OobDeviceRead:
      return "oob-device-read";
    case FindingKind::OobDeviceWrite:
      return "oob-device-write";
    case FindingKind::UninitDeviceRead:
      return "uninit-device-read";
    case FindingKind::SharedRace:
      return "shared-race";
    case FindingKind::ApiFailureCascade:
      return "api-failure-cascade";
  }
  return "?";
}

std::uint64_t dedup_key(const Finding& f) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a_step(h, static_cast<std::uint8_t>(f.tool));
  h = fnv1a_step(h, static_cast<std::uint8_t>(f.kind));
  for (std::size_t i = 0; i < 2 && i < f.site.size(); ++i) {
    for (char c : f.site[i]) h = fnv1a_step(h, static_cast<std::uint8_t>(c));
    h = fnv1a_step(h, 0);  // frame separator
  }
  return h;
}

std::vector<Finding> analyze(const hdvm::ExecutionReport& report, Tool tool) {
  switch (tool) {
    case Tool::HostCheck:
      return analyze_hostcheck(report);
    case Tool::MemCheck:
      return analyze_memcheck(report);
    case Tool::InitCheck:
      return analyze_initcheck(report);
    case Tool::RaceCheck:
      return analyze_racecheck(report);
  }
  return {};
}

SanitizerSweep run_all_tools(const hdvm::ExecutionReport& report) {
  SanitizerSweep sweep;
  for (Tool tool : kAllTools) {
    auto fs = analyze(report, tool);
    sweep.records_examined += tool_records(report, tool);
    sweep.findings.insert(sweep.findings.end(),
                          std::make_move_iterator(fs.begin()),
                          std::make_move_iterator(fs.end()));
  }
  return sweep;
}

std::optional<Finding> derive_crash_finding(const hdvm::ExecutionReport& rep) {
  if (rep.exit.kind == hdvm::ExitKind::Clean) return std::nullopt;
  // Hard faults always append their record last; prefer the device log.
  const hdvm::AccessRecord* rec = nullptr;
  bool device = false;
  for (auto it = rep.device_access_log.rbegin();
       it != rep.device_access_log.rend(); ++it)
    if (it->fault) {
      rec = &*it;
      device = true;
      break;
    }
  if (!rec)
    for (auto it = rep.host_access_log.rbegin();
         it != rep.host_access_log.rend(); ++it)
      if (it->fault) {
        rec = &*it;
        break;
      }
  if (!rec) return std::nullopt;  // e.g. a plain abort
  Finding f;
  if (device) {
    f.tool = Tool::MemCheck;
    f.kind = classify_device_fault(rep, *rec);
    f.detail = device_fault_detail(*rec);
  } else {
    f.tool = Tool::HostCheck;
    f.kind = FindingKind::HeapOverflowHost;
    f.detail = "write past host allocation end, distance " +
               std::to_string(rec->fault_distance);
  }
  f.site = {rep.target, rec->where, site_frame(rec->site)};
  return f;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::AllTrace:
      return "all-trace";
    case Strategy::UniqueTrace:
      return "unique-trace";
    case Strategy::SimpleTrace:
      return "simple-trace";
    case Strategy::CoverageIncrease:
      return "coverage-increase";
  }
  return "?";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
  if (name == "all-trace") return Strategy::AllTrace;
  if (name == "unique-trace") return Strategy::UniqueTrace;
  if (name == "simple-trace") return Strategy::SimpleTrace;
  if (name == "coverage-increase") return Strategy::CoverageIncrease;
  return std::nullopt;
}

bool should_sanitize(Strategy strategy, Admit admit, bool full_sig_seen,
                     bool simple_sig_seen) {
  switch (strategy) {
    case Strategy::AllTrace:
      return true;
    case Strategy::UniqueTrace:
      return !full_sig_seen;
    case Strategy::SimpleTrace:
      return !simple_sig_seen;
    case Strategy::CoverageIncrease:
      return admit != Admit::None;
  }
  return false;
}

std::uint64_t hash_input(const std::vector<std::uint8_t>& input) {
  return fnv1a_bytes(kFnvOffset, input.data(), input.size());
}

}  // namespace hetfuzz
