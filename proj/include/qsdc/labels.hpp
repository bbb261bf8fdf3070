#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace qsdc {

// Ground-truth and detector output classes. The integer values are the
// class ids used by the detector.
enum class FaultClass : std::uint8_t { none = 0, noise = 1, blur = 2, contrast = 3, memory = 4 };

inline constexpr std::size_t kFaultClassCount = 5;
inline constexpr std::array<FaultClass, kFaultClassCount> kAllFaultClasses{
    FaultClass::none, FaultClass::noise, FaultClass::blur, FaultClass::contrast, FaultClass::memory};

enum class FaultCategory : std::uint8_t { none = 0, input = 1, memory = 2 };

[[nodiscard]] constexpr FaultCategory category_of(FaultClass c) {
  switch (c) {
    case FaultClass::none:
      return FaultCategory::none;
    case FaultClass::memory:
      return FaultCategory::memory;
    default:
      return FaultCategory::input;
  }
}

[[nodiscard]] std::string_view to_string(FaultClass c);
[[nodiscard]] std::string_view to_string(FaultCategory c);
// Throws ConfigError on unknown names.
[[nodiscard]] FaultClass parse_fault_class(std::string_view name);
[[nodiscard]] FaultClass fault_class_from_id(int id);

}  // namespace qsdc
