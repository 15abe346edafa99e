#include "hetfuzz/targets.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

namespace hetfuzz {

namespace {

using hdvm::DeviceThreadCtx;
using hdvm::Handle;
using hdvm::HostCtx;
using hdvm::HostInvariant;
using hdvm::KernelArg;
using hdvm::KernelDescriptor;
using hdvm::LaunchConfig;
using hdvm::ParamSpec;
using hdvm::TargetProgram;

using Bind = ParamSpec::Bind;

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 24));
}

std::vector<std::uint8_t> u32s(std::initializer_list<std::uint32_t> xs) {
  std::vector<std::uint8_t> v;
  for (auto x : xs) put_u32(v, x);
  return v;
}

std::uint32_t ceil_div(std::uint32_t a, std::uint32_t b) {
  return (a + b - 1) / b;
}

// Host instrumentation site ids, indexed by a routine-local ordinal. Edge
// slots fold consecutive sites as (prev >> 1) ^ cur, so dense small ids make
// distinct branch pairs land in one slot (1->4, 4->6 and 6->7 all fold to 4);
// compilers that instrument real binaries scatter block ids for the same
// reason. Spread constants keep every pair fold distinct (index 0 unused).
constexpr std::uint16_t kSite[] = {0,      0x4FD1, 0x23B9, 0x6A0D, 0x15E7,
                                   0x7C55, 0x0993, 0x5E2B, 0x366F, 0x61A3,
                                   0x2C17, 0x4B89, 0x133D};

TargetProgram finish(TargetProgram t) {
  t.persistent_proc = hdvm::wrap_persistent(t.host_proc);
  return t;
}

// ---------------------------------------------------------------------------
// vecadd-offbyone
//
// Input: u32le n, then up to n u32le values (missing bytes read as zero).
// Pipeline: initA -> initB -> vectorAdd -> checkSum, all on grid
// ceil(n/256) x block 256. vectorAdd's guard is `idx <= n`, so whenever a
// thread with idx == n exists (n % 256 != 0) it reads a[n], b[n] and writes
// c[n], one element past each allocation.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kVecaddMaxN = 4096;

TargetInfo make_vecadd() {
  TargetProgram t;
  t.name = "vecadd-offbyone";
  t.input_format = "u32le n (1..4096), then n u32le elements";

  t.kernels.push_back(
      {"initA",
       [](DeviceThreadCtx& d) {
         d.edge(100);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(1);
         if (idx < n) {
           d.edge(101);
           std::uint64_t v = d.read(d.arg_buffer(0), idx * 4, 4);
           d.write(d.arg_buffer(0), idx * 4, 4, v + idx);
         }
       },
       2,
       {}});

  t.kernels.push_back(
      {"initB",
       [](DeviceThreadCtx& d) {
         d.edge(110);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(1);
         if (idx < n) {
           d.edge(111);
           d.write(d.arg_buffer(0), idx * 4, 4, idx * 2 + 1);
         }
       },
       2,
       {}});

  t.kernels.push_back(
      {"vectorAdd",
       [](DeviceThreadCtx& d) {
         d.edge(120);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(3);
         if (idx <= n) {  // off-by-one: thread idx == n runs too
           d.edge(121);
           std::uint64_t a = d.read(d.arg_buffer(0), idx * 4, 4);
           std::uint64_t b = d.read(d.arg_buffer(1), idx * 4, 4);
           d.write(d.arg_buffer(2), idx * 4, 4, a + b);
         }
       },
       4,
       {{"grid_x", Bind::GridX, 0, 4, 1, 64, 1},
        {"block_x", Bind::BlockX, 0, 4, 1, 1024, 256},
        {"a_len", Bind::BufferLen, 0, 4, 1, kVecaddMaxN, 100},
        {"b_len", Bind::BufferLen, 1, 4, 1, kVecaddMaxN, 100},
        {"c_len", Bind::BufferLen, 2, 4, 1, kVecaddMaxN, 100},
        {"n", Bind::Scalar, 3, 4, 1, kVecaddMaxN, 100}}});

  t.kernels.push_back(
      {"checkSum",
       [](DeviceThreadCtx& d) {
         d.edge(130);
         if (d.global_tid() == 0) {
           d.edge(131);
           std::uint64_t n = d.arg_scalar(2);
           std::uint64_t m = std::min<std::uint64_t>(n, 8);
           std::uint64_t s = 0;
           for (std::uint64_t i = 0; i < m; ++i) {
             d.edge(132);
             s += d.read(d.arg_buffer(0), i * 4, 4);
           }
           d.write(d.arg_buffer(1), 0, 4, s);
         }
       },
       3,
       {}});

  t.invariants.push_back(
      {"vectorAdd", "grid covers exactly ceil(n/256) blocks of 256",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>& av) {
         std::uint64_t n = av[3];
         return cfg.block.x == 256 && cfg.grid.x == (n + 255) / 256 &&
                av[0] >= n * 4 && av[1] >= n * 4 && av[2] >= n * 4;
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t n = 0;
    if (!h.input_u32(0, &n)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (n < 1 || n > kVecaddMaxN) {
      h.edge(kSite[3]);
      h.exit(1);
    }
    if (n % 256 != 0) h.edge(kSite[4]);  // ragged tail block

    std::uint64_t bytes = std::uint64_t{n} * 4;
    Handle a = h.device_alloc(bytes);
    Handle b = h.device_alloc(bytes);
    Handle c = h.device_alloc(bytes);
    Handle result = h.device_alloc(4);

    h.routine("stageInput");
    Handle stage = h.host_alloc(bytes);
    h.host_write(stage, 0, h.input_slice(4, bytes));
    h.memcpy_h2d(a, stage, bytes);

    h.routine("pipeline");
    LaunchConfig cfg{{ceil_div(n, 256), 1, 1}, {256, 1, 1}};
    h.launch("initA", cfg, {KernelArg::make_buffer(a), KernelArg::make_scalar(n)});
    h.launch("initB", cfg, {KernelArg::make_buffer(b), KernelArg::make_scalar(n)});
    h.launch("vectorAdd", cfg,
             {KernelArg::make_buffer(a), KernelArg::make_buffer(b),
              KernelArg::make_buffer(c), KernelArg::make_scalar(n)});
    h.launch("checkSum", cfg,
             {KernelArg::make_buffer(c), KernelArg::make_buffer(result),
              KernelArg::make_scalar(n)});

    Handle back = h.host_alloc(4);
    h.memcpy_d2h(back, result, 4);
    if (h.host_read(back, 0, 4) % 2 == 0)
      h.edge(kSite[5]);
    else
      h.edge(kSite[6]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  {
    std::vector<std::uint8_t> seed = u32s({100});
    for (std::uint32_t i = 0; i < 100; ++i) put_u32(seed, i * 3);
    info.seeds.push_back(seed);
    info.witness = seed;  // fires immediately: 100 % 256 != 0
  }
  info.bug = SeededBug{Tool::MemCheck, FindingKind::OobDeviceWrite,
                       "vectorAdd"};
  info.summary = "four-kernel add pipeline; vectorAdd guard admits idx == n";
  return info;
}

// ---------------------------------------------------------------------------
// boxfilter-guardless
//
// Input: u32le magic 'BOXF', u32le w (1..1024), u32le h (1..64), then w*h
// pixel bytes. rowPass blurs along rows with full bounds checks; columnPass
// maps threads over ceil(w/64)*64 columns and reads tmp[x + y*w] without
// checking x < w, so ragged widths read past the end on the last row.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kBoxfMagic = 0x46584F42;  // "BOXF"
constexpr std::uint32_t kBoxfMaxW = 1024;
constexpr std::uint32_t kBoxfMaxH = 64;

TargetInfo make_boxfilter() {
  TargetProgram t;
  t.name = "boxfilter-guardless";
  t.input_format =
      "u32le magic 'BOXF', u32le width (1..1024), u32le height (1..64), "
      "width*height pixel bytes";

  t.kernels.push_back(
      {"rowPass",
       [](DeviceThreadCtx& d) {
         d.edge(140);
         std::uint64_t idx = d.global_tid();
         std::uint64_t w = d.arg_scalar(2);
         std::uint64_t total = d.arg_scalar(3);
         if (idx < total) {
           d.edge(141);
           std::uint64_t col = w ? idx % w : 0;
           std::uint64_t mid = d.read(d.arg_buffer(0), idx, 1);
           std::uint64_t left = mid, right = mid;
           if (col > 0) {
             d.edge(142);
             left = d.read(d.arg_buffer(0), idx - 1, 1);
           }
           if (col + 1 < w) {
             d.edge(143);
             right = d.read(d.arg_buffer(0), idx + 1, 1);
           }
           d.write(d.arg_buffer(1), idx, 1, (left + mid + right) / 3);
         }
       },
       4,
       {}});

  t.kernels.push_back(
      {"columnPass",
       [](DeviceThreadCtx& d) {
         d.edge(150);
         std::uint64_t x =
             std::uint64_t{d.block_idx().x} * 64 + d.thread_idx().x;
         std::uint64_t y = d.block_idx().y;
         std::uint64_t w = d.arg_scalar(2);
         std::uint64_t h = d.grid_dim().y;
         // missing `x < w` guard: ragged widths push x + y*w past the end
         std::uint64_t mid = d.read(d.arg_buffer(0), x + y * w, 1);
         std::uint64_t up = mid, down = mid;
         if (y > 0) {
           d.edge(151);
           up = d.read(d.arg_buffer(0), x + (y - 1) * w, 1);
         }
         if (y + 1 < h) {
           d.edge(152);
           down = d.read(d.arg_buffer(0), x + (y + 1) * w, 1);
         }
         if (x < w) {
           d.edge(153);
           d.write(d.arg_buffer(1), x + y * w, 1, (up + mid + down) / 3);
         }
       },
       3,
       {{"grid_x", Bind::GridX, 0, 4, 1, 16, 2},
        {"grid_y", Bind::GridY, 0, 4, 1, kBoxfMaxH, 8},
        {"block_x", Bind::BlockX, 0, 4, 1, 64, 64},
        {"tmp_len", Bind::BufferLen, 0, 1, 1, 1 << 16, 800},
        {"out_len", Bind::BufferLen, 1, 1, 1, 1 << 16, 800},
        {"w", Bind::Scalar, 2, 4, 1, kBoxfMaxW, 100}}});

  t.invariants.push_back(
      {"columnPass", "64-wide blocks exactly covering w columns and h rows",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>& av) {
         std::uint64_t w = av[2];
         std::uint64_t rows = cfg.grid.y;
         return cfg.block.x == 64 && cfg.grid.x == (w + 63) / 64 &&
                av[0] == w * rows && av[1] == w * rows;
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t magic = 0, w = 0, hh = 0;
    if (!h.input_u32(0, &magic) || !h.input_u32(4, &w) ||
        !h.input_u32(8, &hh)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (magic != kBoxfMagic) {
      h.edge(kSite[3]);
      h.exit(1);
    }
    if (w < 1 || w > kBoxfMaxW || hh < 1 || hh > kBoxfMaxH) {
      h.edge(kSite[4]);
      h.exit(1);
    }
    if (w % 64 != 0) h.edge(kSite[5]);  // ragged column tile

    std::uint64_t pixels = std::uint64_t{w} * hh;
    Handle img = h.device_alloc(pixels);
    Handle tmp = h.device_alloc(pixels);
    Handle out = h.device_alloc(pixels);

    h.routine("upload");
    Handle stage = h.host_alloc(pixels);
    h.host_write(stage, 0, h.input_slice(12, pixels));
    h.memcpy_h2d(img, stage, pixels);

    h.routine("filter");
    h.launch("rowPass", {{ceil_div(pixels, 256), 1, 1}, {256, 1, 1}},
             {KernelArg::make_buffer(img), KernelArg::make_buffer(tmp),
              KernelArg::make_scalar(w), KernelArg::make_scalar(pixels)});
    h.launch("columnPass", {{ceil_div(w, 64), hh, 1}, {64, 1, 1}},
             {KernelArg::make_buffer(tmp), KernelArg::make_buffer(out),
              KernelArg::make_scalar(w)});

    Handle back = h.host_alloc(1);
    h.memcpy_d2h(back, out, 1);
    if (h.host_read(back, 0, 1) > 127)
      h.edge(kSite[6]);
    else
      h.edge(kSite[7]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  {
    std::vector<std::uint8_t> seed = u32s({kBoxfMagic, 100, 8});
    for (std::uint32_t i = 0; i < 800; ++i)
      seed.push_back(static_cast<std::uint8_t>(i * 7));
    info.seeds.push_back(seed);
    info.witness = seed;  // fires immediately: 100 % 64 != 0
  }
  info.bug =
      SeededBug{Tool::MemCheck, FindingKind::OobDeviceRead, "columnPass"};
  info.summary = "separable blur; columnPass omits the x < width guard";
  return info;
}

// ---------------------------------------------------------------------------
// seamcarve-nocheck
//
// Input: u32le magic 'SEAM', u32le w (1..65535), u32le h (1..65535), pixel
// payload. The host multiplies untrusted w*h into an allocation size and
// never checks the allocation status: oversized images exhaust device
// memory, the null handle flows into memcpy and the kernel launch, and the
// first device read through it hard-faults.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kSeamMagic = 0x4D414553;  // "SEAM"
constexpr std::uint32_t kSeamWorkCap = 4096;      // pixels touched per run

TargetInfo make_seamcarve() {
  TargetProgram t;
  t.name = "seamcarve-nocheck";
  t.input_format =
      "u32le magic 'SEAM', u32le width (1..65535), u32le height (1..65535), "
      "pixel payload";

  t.kernels.push_back(
      {"carve",
       [](DeviceThreadCtx& d) {
         d.edge(160);
         std::uint64_t i = d.global_tid();
         std::uint64_t work = d.arg_scalar(1);
         if (i < work) {
           d.edge(161);
           std::uint64_t v = d.read(d.arg_buffer(0), i * 4, 4);
           std::uint64_t left = i ? d.read(d.arg_buffer(0), (i - 1) * 4, 4) : v;
           d.write(d.arg_buffer(0), i * 4, 4,
                   (v > left ? v - left : left - v));
         }
       },
       2,
       {{"grid_x", Bind::GridX, 0, 4, 1, 16, 16},
        {"block_x", Bind::BlockX, 0, 4, 1, 256, 256},
        {"img_len", Bind::BufferLen, 0, 4, 1, kSeamWorkCap, 4096},
        {"work", Bind::Scalar, 1, 4, 1, kSeamWorkCap, 4096}}});

  t.invariants.push_back(
      {"carve", "work never exceeds the image element count",
       [](const LaunchConfig&, const std::vector<std::uint64_t>& av) {
         return av[1] * 4 <= av[0];
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t magic = 0, w = 0, hh = 0;
    if (!h.input_u32(0, &magic) || !h.input_u32(4, &w) ||
        !h.input_u32(8, &hh)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (magic != kSeamMagic) {
      h.edge(kSite[3]);
      h.exit(1);
    }
    if (w < 1 || w > 65535 || hh < 1 || hh > 65535) {
      h.edge(kSite[4]);
      h.exit(1);
    }

    h.routine("buildEnergyMap");
    std::uint64_t pixels = std::uint64_t{w} * hh;
    // the tiling choice branches on the image's size class, one branch per
    // power of two of the pixel count; scattered like kSite (odd multiplier
    // keeps the rungs distinct and clear of the fixed sites)
    h.edge(static_cast<std::uint16_t>(
        (0x9E37u * std::bit_width(pixels)) & 0x7FFF));
    // allocation status never checked: huge w*h returns a null handle
    Handle img = h.device_alloc(pixels * 4);
    std::uint64_t work = std::min<std::uint64_t>(pixels, kSeamWorkCap);

    Handle stage = h.host_alloc(work * 4);
    h.host_write(stage, 0, h.input_slice(12, work * 4));
    h.memcpy_h2d(img, stage, work * 4);  // fails silently on null img

    h.launch("carve", {{16, 1, 1}, {256, 1, 1}},
             {KernelArg::make_buffer(img), KernelArg::make_scalar(work)});

    Handle back = h.host_alloc(4);
    h.memcpy_d2h(back, img, 4);
    if (h.host_read(back, 0, 4) == 0)
      h.edge(kSite[5]);
    else
      h.edge(kSite[6]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  {
    // 64x1024 sits well inside the device budget, but one flipped bit in
    // the width's high byte already pushes w*h past it
    std::vector<std::uint8_t> seed = u32s({kSeamMagic, 64, 1024});
    for (std::uint32_t i = 0; i < 256; ++i) put_u32(seed, i);
    info.seeds.push_back(seed);
  }
  info.witness = u32s({kSeamMagic, 32768, 1024});  // 128 MiB > device budget
  info.bug = SeededBug{Tool::MemCheck, FindingKind::ApiFailureCascade,
                       "carve"};
  info.summary =
      "energy-map pass; ignores device OOM and launches on a null image";
  return info;
}

// ---------------------------------------------------------------------------
// urng-headertrust
//
// Input: u32le magic 'URNG', u32le width (1..256), u32le height (1..256),
// u32le sizeBuffer, then payload. The host sizes its state buffer from
// width*height but copies sizeBuffer payload bytes into it, trusting the
// header: a sizeBuffer (and payload) larger than width*height overruns the
// host heap allocation.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kUrngMagic = 0x474E5255;  // "URNG"
constexpr std::uint32_t kUrngMaxDim = 256;

TargetInfo make_urng() {
  TargetProgram t;
  t.name = "urng-headertrust";
  t.input_format =
      "u32le magic 'URNG', u32le width (1..256), u32le height (1..256), "
      "u32le sizeBuffer, sizeBuffer payload bytes";

  t.kernels.push_back(
      {"rngInit",
       [](DeviceThreadCtx& d) {
         d.edge(170);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(1);
         if (idx < n) {
           d.edge(171);
           std::uint64_t v = d.read(d.arg_buffer(0), idx, 1);
           v = (v ^ (v << 3) ^ (idx * 41)) & 0xff;
           d.write(d.arg_buffer(0), idx, 1, v);
         }
       },
       2,
       {{"grid_x", Bind::GridX, 0, 4, 1, 256, 1},
        {"block_x", Bind::BlockX, 0, 4, 1, 256, 256},
        {"state_len", Bind::BufferLen, 0, 1, 1, 1 << 16, 256},
        {"n", Bind::Scalar, 1, 4, 1, 1 << 16, 256}}});

  t.invariants.push_back(
      {"rngInit", "grid covers exactly ceil(n/256) blocks over the state",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>& av) {
         return cfg.block.x == 256 && cfg.grid.x == (av[1] + 255) / 256 &&
                av[1] <= av[0];
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t magic = 0, w = 0, hh = 0, size_buffer = 0;
    if (!h.input_u32(0, &magic) || !h.input_u32(4, &w) ||
        !h.input_u32(8, &hh) || !h.input_u32(12, &size_buffer)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (magic != kUrngMagic) {
      h.edge(kSite[3]);
      h.exit(1);
    }
    if (w < 1 || w > kUrngMaxDim || hh < 1 || hh > kUrngMaxDim) {
      h.edge(kSite[4]);
      h.exit(1);
    }
    std::uint64_t state_bytes = std::uint64_t{w} * hh;
    if (state_bytes % 256 != 0) h.edge(kSite[5]);  // ragged final block
    if (size_buffer % 4 != 0) h.edge(kSite[6]);    // unaligned payload

    h.routine("loadState");
    Handle state = h.host_alloc(state_bytes);
    // header claiming more than the state holds is logged... and then the
    // copy below trusts the header anyway
    if (size_buffer > state_bytes) h.edge(kSite[9]);
    h.host_write(state, 0, h.input_slice(16, size_buffer));

    h.routine("seedDevice");
    Handle dev = h.device_alloc(state_bytes);
    h.memcpy_h2d(dev, state, state_bytes);
    h.launch("rngInit", {{ceil_div(state_bytes, 256), 1, 1}, {256, 1, 1}},
             {KernelArg::make_buffer(dev), KernelArg::make_scalar(state_bytes)});

    Handle back = h.host_alloc(1);
    h.memcpy_d2h(back, dev, 1);
    if (h.host_read(back, 0, 1) & 1)
      h.edge(kSite[7]);
    else
      h.edge(kSite[8]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  {
    std::vector<std::uint8_t> seed = u32s({kUrngMagic, 16, 16, 256});
    for (std::uint32_t i = 0; i < 256; ++i)
      seed.push_back(static_cast<std::uint8_t>(255 - i));
    info.seeds.push_back(seed);
    info.witness = seed;
    // same header with height 15: 240-byte buffer, 256 copied
    info.witness[8] = 15;
  }
  info.bug =
      SeededBug{Tool::HostCheck, FindingKind::HeapOverflowHost, "loadState"};
  info.summary =
      "RNG state seeder; copies header-declared bytes into a w*h buffer";
  return info;
}

// ---------------------------------------------------------------------------
// shared-race
//
// Input: u32le stride (0..15). blockScan runs one 16-thread block; with a
// non-zero stride every thread writes its shared slot and immediately reads
// its neighbour's with no barrier in between, so the read races the
// neighbouring write. Stride zero takes the race-free path.
// ---------------------------------------------------------------------------

TargetInfo make_shared_race() {
  TargetProgram t;
  t.name = "shared-race";
  t.input_format = "u32le stride (0..15)";

  t.kernels.push_back(
      {"blockScan",
       [](DeviceThreadCtx& d) {
         d.edge(180);
         std::uint32_t tid = d.thread_idx().x;
         std::uint32_t threads = d.block_dim().x;
         std::uint64_t stride = d.arg_scalar(0);
         if (stride != 0) {
           d.edge(181);
           std::uint32_t wslot = (tid * stride) % 16;
           std::uint32_t rslot = ((tid + 1) * stride) % 16;
           d.shared_write(wslot * 4, 4, tid + 1);
           // no barrier: the neighbour's write races this read
           std::uint32_t v = d.shared_read(rslot * 4, 4);
           d.write(d.arg_buffer(1), (tid % threads) * 4, 4, v);
         } else {
           d.edge(182);
           d.write(d.arg_buffer(1), (tid % threads) * 4, 4, tid);
         }
       },
       2,
       {{"block_x", Bind::BlockX, 0, 4, 1, 16, 16},
        {"stride", Bind::Scalar, 0, 4, 0, 15, 1},
        {"out_len", Bind::BufferLen, 1, 4, 16, 16, 16}}});

  t.invariants.push_back(
      {"blockScan", "exactly one full 16-thread block",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>&) {
         return cfg.grid.x == 1 && cfg.grid.y == 1 && cfg.grid.z == 1 &&
                cfg.block.x == 16 && cfg.block.y == 1 && cfg.block.z == 1;
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t stride = 0;
    if (!h.input_u32(0, &stride)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (stride > 15) {
      h.edge(kSite[3]);
      h.exit(1);
    }
    if (stride == 0)
      h.edge(kSite[4]);
    else
      h.edge(kSite[5]);

    Handle out = h.device_alloc(64);
    h.device_memset(out, 0, 64);
    h.launch("blockScan", {{1, 1, 1}, {16, 1, 1}},
             {KernelArg::make_scalar(stride), KernelArg::make_buffer(out)});

    Handle back = h.host_alloc(4);
    h.memcpy_d2h(back, out, 4);
    if (h.host_read(back, 0, 4) != 0)
      h.edge(kSite[6]);
    else
      h.edge(kSite[7]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  info.seeds.push_back(u32s({0}));  // race-free seed; one flipped bit races
  info.witness = u32s({1});
  info.bug = SeededBug{Tool::RaceCheck, FindingKind::SharedRace, "blockScan"};
  info.summary =
      "16-thread shared scan; neighbour read lacks a barrier after the write";
  return info;
}

// ---------------------------------------------------------------------------
// uninit-sum
//
// Input: u32le flags, u32le n (1..1024), then payload u32s. With flags bit 0
// set the host skips the device_memset and uploads only the payload bytes it
// actually has; when n*4 exceeds the payload it warns (edge 7) but launches
// anyway, so sumAll reads the uninitialized tail.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kUninitMaxN = 1024;

TargetInfo make_uninit_sum() {
  TargetProgram t;
  t.name = "uninit-sum";
  t.input_format =
      "u32le flags (bit0 = skip clearing), u32le n (1..1024), n u32le values";

  t.kernels.push_back(
      {"sumAll",
       [](DeviceThreadCtx& d) {
         d.edge(190);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(1);
         if (idx < n) {
           d.edge(191);
           std::uint64_t v = d.read(d.arg_buffer(0), idx * 4, 4);
           d.write(d.arg_buffer(0), idx * 4, 4, v + 1);
         }
       },
       2,
       {{"grid_x", Bind::GridX, 0, 4, 1, 4, 1},
        {"block_x", Bind::BlockX, 0, 4, 1, 256, 256},
        {"buf_len", Bind::BufferLen, 0, 4, 1, kUninitMaxN, 4},
        {"n", Bind::Scalar, 1, 4, 1, kUninitMaxN, 4}}});

  t.invariants.push_back(
      {"sumAll", "n elements fit the buffer under a covering grid",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>& av) {
         return cfg.block.x == 256 && cfg.grid.x == (av[1] + 255) / 256 &&
                av[1] * 4 <= av[0];
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    std::uint32_t flags = 0, n = 0;
    if (!h.input_u32(0, &flags) || !h.input_u32(4, &n)) {
      h.edge(kSite[2]);
      h.exit(1);
    }
    if (n < 1 || n > kUninitMaxN) {
      h.edge(kSite[3]);
      h.exit(1);
    }

    std::uint64_t bytes = std::uint64_t{n} * 4;
    std::uint64_t avail = h.input_size() > 8 ? h.input_size() - 8 : 0;
    std::uint64_t upload = std::min(bytes, avail);
    Handle buf = h.device_alloc(bytes);

    h.routine("upload");
    if ((flags & 1) == 0) {
      h.edge(kSite[4]);
      h.device_memset(buf, 0, bytes);  // slow path: clear everything first
    } else {
      h.edge(kSite[5]);  // fast path skips the clear
    }
    if (upload > 0) {
      h.edge(kSite[6]);
      Handle stage = h.host_alloc(upload);
      h.host_write(stage, 0, h.input_slice(8, upload));
      h.memcpy_h2d(buf, stage, upload);
    }
    if (bytes > avail) h.edge(kSite[7]);  // short payload: tail stays as-is

    h.routine("reduce");
    h.launch("sumAll", {{ceil_div(n, 256), 1, 1}, {256, 1, 1}},
             {KernelArg::make_buffer(buf), KernelArg::make_scalar(n)});

    Handle back = h.host_alloc(4);
    h.memcpy_d2h(back, buf, 4);
    if (h.host_read(back, 0, 4) & 1)
      h.edge(kSite[8]);
    else
      h.edge(kSite[9]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  {
    std::vector<std::uint8_t> seed = u32s({0, 4, 11, 22, 33, 44});
    info.seeds.push_back(seed);
  }
  info.witness = u32s({1, 5, 11, 22, 33, 44});  // 20 > 16 payload bytes
  info.bug =
      SeededBug{Tool::InitCheck, FindingKind::UninitDeviceRead, "sumAll"};
  info.summary =
      "flagged upload path skips clearing; sumAll reads the stale tail";
  return info;
}

// ---------------------------------------------------------------------------
// clean-pipeline
//
// Input: two u32le words. transform XOR-mixes both words, inspect walks a
// four-stage byte-compare chain over the mixed second word (each stage is a
// device-only branch; the full match writes a token the host echoes), and
// reduce does a barrier-correct shared-memory sum. No seeded defect.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kCleanMix = 0xA5A5A5A5;
constexpr std::uint32_t kCleanToken = 0x600DD065;

TargetInfo make_clean_pipeline() {
  TargetProgram t;
  t.name = "clean-pipeline";
  t.input_format = "two u32le words";

  t.kernels.push_back(
      {"transform",
       [](DeviceThreadCtx& d) {
         d.edge(200);
         std::uint64_t idx = d.global_tid();
         std::uint64_t n = d.arg_scalar(2);
         if (idx < n) {
           d.edge(201);
           std::uint64_t v = d.read(d.arg_buffer(0), idx * 4, 4);
           d.write(d.arg_buffer(1), idx * 4, 4, v ^ kCleanMix);
         }
       },
       3,
       {{"grid_x", Bind::GridX, 0, 4, 1, 4, 1},
        {"block_x", Bind::BlockX, 0, 4, 1, 64, 2},
        {"src_len", Bind::BufferLen, 0, 4, 1, 64, 2},
        {"dst_len", Bind::BufferLen, 1, 4, 1, 64, 2},
        {"n", Bind::Scalar, 2, 4, 1, 64, 2}}});

  t.kernels.push_back(
      {"inspect",
       [](DeviceThreadCtx& d) {
         d.edge(210);
         if (d.global_tid() != 0) return;
         std::uint64_t v = d.read(d.arg_buffer(0), 4, 4);
         if ((v & 0xff) == 0x5A) {
           d.edge(211);
           if (((v >> 8) & 0xff) == 0xDA) {
             d.edge(212);
             if (((v >> 16) & 0xff) == 0x25) {
               d.edge(213);
               if (((v >> 24) & 0xff) == 0xB5) {
                 d.edge(214);  // deepest device-only branch
                 d.write(d.arg_buffer(1), 0, 4, kCleanToken);
               }
             }
           }
         }
       },
       2,
       {}});

  t.kernels.push_back(
      {"reduce",
       [](DeviceThreadCtx& d) {
         d.edge(220);
         std::uint32_t tid = d.thread_idx().x;
         d.shared_write(tid * 4, 4, tid + 1);
         d.barrier();  // publishes every slot before thread 0 reads them
         if (tid == 0) {
           d.edge(221);
           std::uint32_t s = 0;
           for (std::uint32_t i = 0; i < 32; ++i) s += d.shared_read(i * 4, 4);
           d.write(d.arg_buffer(0), 0, 4, s);
         }
       },
       1,
       {}});

  t.invariants.push_back(
      {"transform", "n elements fit both buffers",
       [](const LaunchConfig& cfg, const std::vector<std::uint64_t>& av) {
         std::uint64_t n = av[2];
         return n * 4 <= av[0] && n * 4 <= av[1] &&
                std::uint64_t{cfg.grid.x} * cfg.block.x >= n;
       }});

  t.host_proc = [](HostCtx& h) {
    h.routine("main");
    h.edge(kSite[1]);
    if (h.input_size() < 8) {
      h.edge(kSite[2]);
      h.exit(1);
    }

    Handle words = h.device_alloc(8);
    Handle work = h.device_alloc(8);
    Handle token = h.device_alloc(4);
    Handle scratch = h.device_alloc(4);
    h.device_memset(token, 0, 4);

    h.routine("upload");
    Handle stage = h.host_alloc(8);
    h.host_write(stage, 0, h.input_slice(0, 8));
    h.memcpy_h2d(words, stage, 8);

    h.routine("pipeline");
    h.launch("transform", {{1, 1, 1}, {2, 1, 1}},
             {KernelArg::make_buffer(words), KernelArg::make_buffer(work),
              KernelArg::make_scalar(2)});
    h.launch("inspect", {{1, 1, 1}, {1, 1, 1}},
             {KernelArg::make_buffer(work), KernelArg::make_buffer(token)});
    h.launch("reduce", {{1, 1, 1}, {32, 1, 1}},
             {KernelArg::make_buffer(scratch)});

    Handle back = h.host_alloc(4);
    h.memcpy_d2h(back, token, 4);
    if (h.host_read(back, 0, 4) == kCleanToken)
      h.edge(kSite[3]);  // echoes the deep-branch token
    else
      h.edge(kSite[4]);
    h.exit(0);
  };

  TargetInfo info;
  info.program = finish(std::move(t));
  info.seeds.push_back(u32s({0, 0}));
  info.witness = u32s({0, 0x10807FFF});  // mixes to 0xB525DA5A: full match
  info.bug = std::nullopt;
  info.summary =
      "bug-free three-kernel pipeline with a four-stage device-only branch";
  return info;
}

}  // namespace

const std::vector<TargetInfo>& registry() {
  static const std::vector<TargetInfo> all = [] {
    std::vector<TargetInfo> v;
    v.push_back(make_vecadd());
    v.push_back(make_boxfilter());
    v.push_back(make_seamcarve());
    v.push_back(make_urng());
    v.push_back(make_shared_race());
    v.push_back(make_uninit_sum());
    v.push_back(make_clean_pipeline());
    return v;
  }();
  return all;
}

const TargetInfo* find_target(const std::string& name) {
  for (const auto& t : registry())
    if (t.program.name == name) return &t;
  return nullptr;
}

std::uint64_t seeded_key(const TargetInfo& info) {
  if (!info.bug) throw std::logic_error("target has no seeded defect");
  Finding f;
  f.tool = info.bug->tool;
  f.kind = info.bug->kind;
  f.site = {info.program.name, info.bug->where, "site:0"};
  return dedup_key(f);
}

}  // namespace hetfuzz
