#include <atomic>
#include <cstdlib>
#include <string_view>

#include "mtnas/kernels/kernels.hpp"

namespace mtnas::kernels {

const KernelTable* avx2_table();  // avx2.cpp

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* detect() {
  const KernelTable* fast = avx2();
  if (const char* forced = std::getenv("MTNAS_KERNELS")) {
    if (const KernelTable* t = find(forced)) return t;
  }
  return fast ? fast : &scalar();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable* avx2() {
  static const KernelTable* table = cpu_has_avx2_fma() ? avx2_table() : nullptr;
  return table;
}

const KernelTable* find(std::string_view name) {
  if (name == "scalar") return &scalar();
  if (name == "avx2") return avx2();
  return nullptr;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void use(const KernelTable& table) { current().store(&table, std::memory_order_relaxed); }

}  // namespace mtnas::kernels
