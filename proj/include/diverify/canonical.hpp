#pragma once

#include <cmath>

#include "diverify/bytes.hpp"
#include "diverify/crypto.hpp"
#include "json.hpp"

namespace diverify {

using Json = nlohmann::json;

namespace detail {
inline void reject_unencodable(const Json& j) {
    if (j.is_number_float()) {
        double v = j.get<double>();
        if (!std::isfinite(v)) throw EncodingError("non-finite number is not encodable");
    } else if (j.is_binary() || j.is_discarded()) {
        throw EncodingError("value has no canonical JSON form");
    } else if (j.is_object() || j.is_array()) {
        for (const auto& child : j) reject_unencodable(child);
    }
}
}  // namespace detail

// Canonical form: compact JSON, UTF-8, object keys in byte-lexicographic
// order (nlohmann objects are std::map-backed, so dump() already sorts).
// Binary fields are hex strings by convention; callers hex-encode before
// building the tree.
inline std::string canonical_encode(const Json& value) {
    detail::reject_unencodable(value);
    return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

inline Bytes canonical_bytes(const Json& value) {
    return to_bytes(canonical_encode(value));
}

inline Digest32 canonical_digest(const Json& value) {
    return sha256(canonical_encode(value));
}

}  // namespace diverify
