#include "qsdc/labels.hpp"

#include <string>

#include "qsdc/errors.hpp"

namespace qsdc {

std::string_view to_string(FaultClass c) {
  switch (c) {
    case FaultClass::none:
      return "none";
    case FaultClass::noise:
      return "noise";
    case FaultClass::blur:
      return "blur";
    case FaultClass::contrast:
      return "contrast";
    case FaultClass::memory:
      return "memory";
  }
  return "?";
}

std::string_view to_string(FaultCategory c) {
  switch (c) {
    case FaultCategory::none:
      return "none";
    case FaultCategory::input:
      return "input";
    case FaultCategory::memory:
      return "memory";
  }
  return "?";
}

FaultClass parse_fault_class(std::string_view name) {
  for (FaultClass c : kAllFaultClasses) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown fault class '" + std::string(name) + "'");
}

FaultClass fault_class_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kFaultClassCount)) {
    throw ConfigError("fault class id " + std::to_string(id) + " out of range");
  }
  return static_cast<FaultClass>(id);
}

}  // namespace qsdc
