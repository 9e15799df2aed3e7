#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mse/errors.hpp"

namespace mse {

// Grid tasks: matrices of symbols in, matrices of symbols out, each target
// produced by a brute-force oracle. Graph tasks ride on the adjacency matrix;
// `n` is the vertex count there and the matrix side otherwise.

enum class TaskId {
    transpose,
    rotate90,
    bitwise_xor,
    square_mod2,
    component_labeling,
    transitivity,
    triangle_finding,
    sudoku,
};

struct TaskInfo {
    TaskId id;
    const char* name;
    int vocab_in;
    int vocab_out;
    int pad_symbol;   // input-domain padding
    bool is_graph;    // n counts vertices
    bool from_dataset;  // generated from files, not (n, seed)
};

const TaskInfo& task_info(TaskId id);
TaskId task_from_name(const std::string& name);  // ConfigError on unknown names
std::vector<TaskId> all_tasks();

struct TaskInstance {
    TaskId task = TaskId::transpose;
    int n = 0;
    uint64_t seed = 0;
    int k = 0;  // padded grid is 2^k x 2^k
    std::vector<int> input;
    std::vector<int> target;
    std::vector<uint8_t> mask;  // 1 exactly where the target is defined

    int side() const { return 1 << k; }
    int64_t cells() const { return (int64_t)side() * side(); }
};

// Smallest k (>= 1) whose 2^k x 2^k square holds the task's layout for size n.
int padded_k(TaskId task, int n);

// Deterministic in (task, n, seed). Throws ConfigError for dataset tasks.
TaskInstance generate(TaskId task, int n, uint64_t seed);

// ---- transform oracles ----------------------------------------------------
// Plain definitions over row-major matrices; generators derive targets from
// these and the tests re-derive them through independent routes.

std::vector<int> transpose_of(const std::vector<int>& m, int n);
std::vector<int> rotate90cw_of(const std::vector<int>& m, int n);
std::vector<int> square_mod2_of(const std::vector<int>& bits, int n);
// A or A^2 > 0, by triple loop over (i, k, j).
std::vector<int> transitive_step_of(const std::vector<int>& adj, int v);
// Minimum edge label per connected component via union-find; 0 off edges.
std::vector<int> component_min_labels(const std::vector<int>& labels, int v);
// 1 on every edge that belongs to at least one triangle, by triple enumeration.
std::vector<int> triangle_edges(const std::vector<int>& adj, int v);

// ---- serialization ----------------------------------------------------------
// One-line header "task n seed", then input, target and mask as
// whitespace-separated integer grids of the padded side.

void write_instance(std::ostream& os, const TaskInstance& inst);
TaskInstance read_instance(std::istream& is);  // DataError on malformed input

}  // namespace mse
