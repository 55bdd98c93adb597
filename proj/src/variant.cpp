#include "bilevel/variant.hpp"

#include "bilevel/types.hpp"

#include <string>

namespace bilevel {

Variant parse_variant(std::string_view s) {
  if (s == "biadam") return Variant::BiAdam;
  if (s == "vr-biadam" || s == "vrbiadam") return Variant::VRBiAdam;
  throw ContractViolation("unknown variant '" + std::string(s) + "'");
}

std::string_view to_string(Variant v) { return v == Variant::BiAdam ? "biadam" : "vr-biadam"; }

}  // namespace bilevel
