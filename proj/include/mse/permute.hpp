#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mse {

// Index permutations on sequences of length 4^k: Z-order (Morton) flatten and
// unflatten between a 2^k x 2^k row-major grid and the quadtree traversal
// order, raster identities for the ablation, and the quaternary shuffle that
// cyclically rotates base-4 digits of the sequence index.
//
// Convention: row bits occupy the more significant interleave slots, so the
// top-left 2x2 quad reads (0,0),(0,1),(1,0),(1,1).

enum class PermKind {
    zorder_flatten,
    zorder_unflatten,
    raster_flatten,
    raster_unflatten,
    qshuffle_right,
    qshuffle_left,
};

const char* perm_kind_name(PermKind kind);

struct PermTable {
    int k = 0;
    PermKind kind = PermKind::zorder_flatten;
    std::vector<int> table;  // bijection on [0, 4^k); out[j] = in[table[j]]

    int64_t size() const { return (int64_t)table.size(); }
};

// Morton index of (row, col) on a 2^k grid; throws on out-of-range coordinates.
int zorder_index(int row, int col, int k);

// Cyclic rotation of x by one base-4 digit (k digits, zero padded).
enum class RotateDir { right, left };
int qrotate(int x, int k, RotateDir dir);

PermTable build_flatten_table(int k, PermKind kind);
PermTable build_qshuffle_table(int k, RotateDir dir);

// Process-wide cache; tables are immutable once built and safe to share.
const PermTable& perm_table(int k, PermKind kind);

bool is_bijection(const std::vector<int>& table);

}  // namespace mse
