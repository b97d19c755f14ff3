// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "s2s/errors.hpp"
#include "s2s/kernels.hpp"

namespace s2s::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  const bool avx2_ok = available(Isa::avx2);
  if (const char* env = std::getenv("S2S_KERNELS")) {
    const std::string_view want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && avx2_ok) return Isa::avx2;
  }
  return avx2_ok ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool available(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool ok = avx2::compiled() && cpu_has_avx2();
  return ok;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) fail(ErrorKind::ConfigInvalid, std::string("kernel set not available: ") + name(isa));
  return isa == Isa::avx2 ? avx2::table : scalar::table;
}

const KernelTable& active() { return current().load(std::memory_order_relaxed) == Isa::avx2 ? avx2::table : scalar::table; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  table(isa);
  current().store(isa, std::memory_order_relaxed);
}

const char* name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace s2s::kernels
