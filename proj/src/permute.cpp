#include "mse/permute.hpp"

#include <map>
#include <mutex>

#include "mse/errors.hpp"

namespace mse {

const char* perm_kind_name(PermKind kind) {
    switch (kind) {
        case PermKind::zorder_flatten: return "zorder_flatten";
        case PermKind::zorder_unflatten: return "zorder_unflatten";
        case PermKind::raster_flatten: return "raster_flatten";
        case PermKind::raster_unflatten: return "raster_unflatten";
        case PermKind::qshuffle_right: return "qshuffle_right";
        case PermKind::qshuffle_left: return "qshuffle_left";
    }
    return "?";
}

int zorder_index(int row, int col, int k) {
    const int side = 1 << k;
    if (k < 1 || row < 0 || col < 0 || row >= side || col >= side)
        throw ShapeError("zorder_index: (" + std::to_string(row) + ", " +
                         std::to_string(col) + ") out of range for k=" + std::to_string(k));
    int z = 0;
    for (int b = 0; b < k; ++b) {
        z |= ((col >> b) & 1) << (2 * b);
        z |= ((row >> b) & 1) << (2 * b + 1);
    }
    return z;
}

int qrotate(int x, int k, RotateDir dir) {
    const int64_t n = int64_t(1) << (2 * k);
    if (k < 1 || x < 0 || x >= n)
        throw ShapeError("qrotate: x=" + std::to_string(x) + " out of range for k=" +
                         std::to_string(k));
    if (dir == RotateDir::right) {
        // least significant digit becomes most significant
        int low = x & 3;
        return (x >> 2) | (low << (2 * (k - 1)));
    }
    int high = (x >> (2 * (k - 1))) & 3;
    return ((x << 2) & (int)(n - 1)) | high;
}

PermTable build_flatten_table(int k, PermKind kind) {
    if (k < 1) throw ShapeError("build_flatten_table: k must be >= 1");
    const int side = 1 << k;
    const int64_t n = (int64_t)side * side;
    PermTable t;
    t.k = k;
    t.kind = kind;
    t.table.resize(n);
    switch (kind) {
        case PermKind::raster_flatten:
        case PermKind::raster_unflatten:
            for (int64_t i = 0; i < n; ++i) t.table[i] = (int)i;
            break;
        case PermKind::zorder_flatten:
            // sequence[z] = grid_rowmajor[table[z]]
            for (int r = 0; r < side; ++r)
                for (int c = 0; c < side; ++c)
                    t.table[zorder_index(r, c, k)] = r * side + c;
            break;
        case PermKind::zorder_unflatten:
            // grid_rowmajor[p] = sequence[table[p]]
            for (int r = 0; r < side; ++r)
                for (int c = 0; c < side; ++c)
                    t.table[r * side + c] = zorder_index(r, c, k);
            break;
        default:
            throw ShapeError("build_flatten_table: not a flatten kind");
    }
    return t;
}

PermTable build_qshuffle_table(int k, RotateDir dir) {
    if (k < 1) throw ShapeError("build_qshuffle_table: k must be >= 1");
    const int64_t n = int64_t(1) << (2 * k);
    PermTable t;
    t.k = k;
    t.kind = dir == RotateDir::right ? PermKind::qshuffle_right : PermKind::qshuffle_left;
    t.table.resize(n);
    for (int64_t x = 0; x < n; ++x) t.table[x] = qrotate((int)x, k, dir);
    return t;
}

const PermTable& perm_table(int k, PermKind kind) {
    static std::mutex mu;
    static std::map<std::pair<int, PermKind>, PermTable> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(k, kind);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    PermTable t;
    if (kind == PermKind::qshuffle_right)
        t = build_qshuffle_table(k, RotateDir::right);
    else if (kind == PermKind::qshuffle_left)
        t = build_qshuffle_table(k, RotateDir::left);
    else
        t = build_flatten_table(k, kind);
    return cache.emplace(key, std::move(t)).first->second;
}

bool is_bijection(const std::vector<int>& table) {
    std::vector<char> seen(table.size(), 0);
    for (int v : table) {
        if (v < 0 || v >= (int)table.size() || seen[v]) return false;
        seen[v] = 1;
    }
    return true;
}

}  // namespace mse
