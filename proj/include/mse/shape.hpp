#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mse/errors.hpp"

namespace mse {

// Dense row-major extents. Most activations are 2D [positions, features];
// vectors are [d] and scalars [1].
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Trailing extent; 1 for scalars with empty shape.
inline int trailing(const Shape& s) { return s.empty() ? 1 : s.back(); }

// Number of rows when the array is viewed as [rows, trailing].
inline int64_t leading_rows(const Shape& s) {
    int t = trailing(s);
    if (t == 0) throw ShapeError("zero trailing extent in " + shape_str(s));
    return numel(s) / t;
}

inline void check_positive_extents(const Shape& s) {
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
    }
}

}  // namespace mse
