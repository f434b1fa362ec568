#include <string>

#include "spursever/error.hpp"
#include "spursever/kernels.hpp"

namespace spursever::kernels {

bool simd_available() noexcept {
#if defined(SPURSEVER_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

const Ops& ops(Mode mode) noexcept {
#if defined(SPURSEVER_WITH_AVX2)
  if (mode == Mode::simd && simd_available()) return detail::avx2_ops();
#endif
  (void)mode;
  return reference_ops();
}

Mode fastest_mode() noexcept { return simd_available() ? Mode::simd : Mode::reference; }

std::string_view to_string(Mode mode) noexcept {
  return mode == Mode::simd ? "simd" : "reference";
}

Mode mode_from_string(std::string_view text) {
  if (text == "reference") return Mode::reference;
  if (text == "simd") return Mode::simd;
  if (text == "auto") return fastest_mode();
  throw InputError("unknown kernel mode '" + std::string(text) +
                   "' (expected reference, simd or auto)");
}

}  // namespace spursever::kernels
