#include <atomic>
#include <cstdlib>
#include <string_view>

#include "irpert/simd/kernels.hpp"

namespace irpert::simd {

#if defined(IRPERT_HAVE_AVX2)
const Kernels& avx2_table();
#endif

const Kernels* avx2_kernels() {
#if defined(IRPERT_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const Kernels* pick_default() {
  if (const char* env = std::getenv("IRPERT_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels()) return avx2_kernels();
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& current() {
  static std::atomic<const Kernels*> table{pick_default()};
  return table;
}

}  // namespace

const Kernels& active() { return *current().load(std::memory_order_acquire); }

bool set_level(Level level) {
  const Kernels* table = level == Level::scalar ? &scalar_kernels() : avx2_kernels();
  if (!table) return false;
  current().store(table, std::memory_order_release);
  return true;
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::scalar:
      return "scalar";
    case Level::avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace irpert::simd
