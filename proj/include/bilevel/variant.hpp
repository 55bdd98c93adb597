#pragma once

#include <string_view>

namespace bilevel {

/// BiAdam uses momentum direction estimates and eta_t = k/(m+t)^{1/2};
/// VR-BiAdam uses STORM estimates and eta_t = k/(m+t)^{1/3}.
enum class Variant { BiAdam, VRBiAdam };

Variant parse_variant(std::string_view s);
std::string_view to_string(Variant v);

}  // namespace bilevel
