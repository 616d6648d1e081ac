#pragma once

#include <string>

namespace groundbank {

// Attribute kind of a prompt token. `other` covers answers outside the four
// canonical kinds (e.g. morphology); `pad` marks padding rows.
enum class AttributeKind { color, shape, texture, location, other, pad };

const char* to_string(AttributeKind k);
AttributeKind attribute_kind_from_string(const std::string& s); // throws format_error

} // namespace groundbank
