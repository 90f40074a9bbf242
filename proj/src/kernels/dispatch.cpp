#include <atomic>
#include <cstdlib>
#include <string>

#include "edgelam/error.hpp"
#include "edgelam/kernels.hpp"

namespace edgelam::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("EDGELAM_ISA");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_table();
  if (isa_supported(Isa::avx2)) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (!isa_supported(isa)) {
    fail(Errc::invalid_parameter, "kernel ISA not supported on this CPU: " +
                                      std::string(isa_name(isa)));
  }
  current().store(isa == Isa::scalar ? &scalar_table() : avx2_table(),
                  std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

}  // namespace edgelam::kernels
