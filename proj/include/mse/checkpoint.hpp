#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mse/config.hpp"
#include "mse/model.hpp"
#include "mse/radam.hpp"
#include "mse/shape.hpp"

namespace mse {

// On-disk model state: a textual header (format version, training config and a
// named-array manifest with shapes and byte offsets) followed by the arrays as
// raw little-endian 32-bit floats in manifest order.

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    int version = 1;
    KvConfig config;
    int64_t step = 0;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
// DataError with distinct messages for version mismatch, manifest/shape
// inconsistencies and truncated payloads.
Checkpoint load_checkpoint(const std::string& path);

// Bundles parameters plus optimizer state under stable names
// ("embedding", "block0.forward.Z", ..., "opt.m1.<param>", "opt.m2.<param>").
Checkpoint snapshot_state(const KvConfig& config, ModelParams<float>& params,
                          RAdam<float>& opt, int64_t step);

// Restores into matching structures; shapes must agree with the checkpoint.
void restore_state(const Checkpoint& ck, ModelParams<float>& params, RAdam<float>& opt);

}  // namespace mse
