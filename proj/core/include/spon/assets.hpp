#pragma once

#include <optional>
#include <string_view>

namespace spon {

/// Built-in topology files: "chain", "global", "fairness", "bgp".
std::optional<std::string_view> canonical_topology(std::string_view name);

}  // namespace spon
