#include "groundbank/attributes.hpp"

#include "groundbank/errors.hpp"

namespace groundbank {

const char* to_string(AttributeKind k) {
    switch (k) {
        case AttributeKind::color: return "color";
        case AttributeKind::shape: return "shape";
        case AttributeKind::texture: return "texture";
        case AttributeKind::location: return "location";
        case AttributeKind::other: return "other";
        case AttributeKind::pad: return "pad";
    }
    return "other";
}

AttributeKind attribute_kind_from_string(const std::string& s) {
    if (s == "color" || s == "colors") return AttributeKind::color;
    if (s == "shape" || s == "shapes") return AttributeKind::shape;
    if (s == "texture" || s == "textures") return AttributeKind::texture;
    if (s == "location" || s == "locations") return AttributeKind::location;
    if (s == "other") return AttributeKind::other;
    if (s == "pad") return AttributeKind::pad;
    throw format_error("unknown attribute kind: '" + s + "'");
}

} // namespace groundbank
