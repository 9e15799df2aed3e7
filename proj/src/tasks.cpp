#include "mse/tasks.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace mse {

namespace {

const TaskInfo kTasks[] = {
    // symbols 1..11, 0 pads
    {TaskId::transpose, "transpose", 12, 12, 0, false, false},
    {TaskId::rotate90, "rotate90", 12, 12, 0, false, false},
    // bits as 1/2, separator 3, 0 pads
    {TaskId::bitwise_xor, "xor", 4, 3, 0, false, false},
    {TaskId::square_mod2, "square_mod2", 3, 3, 0, false, false},
    // edge labels 2..100 verbatim, 0 marks non-edges, 101 pads
    {TaskId::component_labeling, "component_labeling", 102, 101, 101, true, false},
    {TaskId::transitivity, "transitivity", 3, 2, 2, true, false},
    {TaskId::triangle_finding, "triangle_finding", 3, 2, 2, true, false},
    // digits 0..9 (0 = blank), 10 pads; outputs 1..9
    {TaskId::sudoku, "sudoku", 11, 10, 10, false, true},
};

int k_for_side(int min_side) {
    int k = 1;
    while ((1 << k) < min_side) ++k;
    return k;
}

// Instance skeleton filled with the pad symbol, zero targets, zero mask.
TaskInstance blank_instance(TaskId task, int n, uint64_t seed, int k) {
    TaskInstance inst;
    inst.task = task;
    inst.n = n;
    inst.seed = seed;
    inst.k = k;
    inst.input.assign(inst.cells(), task_info(task).pad_symbol);
    inst.target.assign(inst.cells(), 0);
    inst.mask.assign(inst.cells(), 0);
    return inst;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

const TaskInfo& task_info(TaskId id) {
    for (const TaskInfo& t : kTasks)
        if (t.id == id) return t;
    throw ConfigError("unknown task id");
}

TaskId task_from_name(const std::string& name) {
    for (const TaskInfo& t : kTasks)
        if (name == t.name) return t.id;
    throw ConfigError("unknown task '" + name + "'");
}

std::vector<TaskId> all_tasks() {
    std::vector<TaskId> out;
    for (const TaskInfo& t : kTasks) out.push_back(t.id);
    return out;
}

int padded_k(TaskId task, int n) {
    if (n < 1) throw ConfigError("task size must be >= 1");
    // XOR places two n-wide operands and a separator column side by side.
    if (task == TaskId::bitwise_xor) return k_for_side(2 * n + 1);
    if (task == TaskId::sudoku) return 4;  // 9x9 padded to 16x16
    return k_for_side(std::max(n, 2));
}

// ---- transform oracles ----------------------------------------------------

std::vector<int> transpose_of(const std::vector<int>& m, int n) {
    std::vector<int> out((size_t)n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) out[(size_t)r * n + c] = m[(size_t)c * n + r];
    return out;
}

std::vector<int> rotate90cw_of(const std::vector<int>& m, int n) {
    std::vector<int> out((size_t)n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            out[(size_t)r * n + c] = m[(size_t)(n - 1 - c) * n + r];
    return out;
}

std::vector<int> square_mod2_of(const std::vector<int>& bits, int n) {
    std::vector<int> out((size_t)n * n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int acc = 0;
            for (int l = 0; l < n; ++l)
                acc ^= bits[(size_t)i * n + l] & bits[(size_t)l * n + j];
            out[(size_t)i * n + j] = acc;
        }
    return out;
}

std::vector<int> transitive_step_of(const std::vector<int>& adj, int v) {
    std::vector<int> out = adj;
    for (int i = 0; i < v; ++i)
        for (int l = 0; l < v; ++l) {
            if (!adj[(size_t)i * v + l]) continue;
            for (int j = 0; j < v; ++j)
                if (adj[(size_t)l * v + j]) out[(size_t)i * v + j] = 1;
        }
    return out;
}

std::vector<int> component_min_labels(const std::vector<int>& labels, int v) {
    UnionFind uf(v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (labels[(size_t)i * v + j] > 0) uf.unite(i, j);
    std::vector<int> comp_min(v, 0);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j) {
            int lab = labels[(size_t)i * v + j];
            if (lab <= 0) continue;
            int root = uf.find(i);
            if (comp_min[root] == 0 || lab < comp_min[root]) comp_min[root] = lab;
        }
    std::vector<int> out((size_t)v * v, 0);
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < v; ++j)
            if (labels[(size_t)i * v + j] > 0) out[(size_t)i * v + j] = comp_min[uf.find(i)];
    return out;
}

std::vector<int> triangle_edges(const std::vector<int>& adj, int v) {
    std::vector<int> out((size_t)v * v, 0);
    for (int a = 0; a < v; ++a)
        for (int b = a + 1; b < v; ++b) {
            if (!adj[(size_t)a * v + b]) continue;
            for (int c = b + 1; c < v; ++c) {
                if (adj[(size_t)a * v + c] && adj[(size_t)b * v + c]) {
                    out[(size_t)a * v + b] = out[(size_t)b * v + a] = 1;
                    out[(size_t)a * v + c] = out[(size_t)c * v + a] = 1;
                    out[(size_t)b * v + c] = out[(size_t)c * v + b] = 1;
                }
            }
        }
    return out;
}

// ---- generators -------------------------------------------------------------

namespace {

TaskInstance gen_permutation_task(TaskId task, int n, uint64_t seed) {
    TaskInstance inst = blank_instance(task, n, seed, padded_k(task, n));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> sym(1, 11);
    const int side = inst.side();
    std::vector<int> m((size_t)n * n);
    for (int& x : m) x = sym(rng);
    std::vector<int> t = task == TaskId::transpose ? transpose_of(m, n)
                                                   : rotate90cw_of(m, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            inst.input[(size_t)r * side + c] = m[(size_t)r * n + c];
            inst.target[(size_t)r * side + c] = t[(size_t)r * n + c];
            inst.mask[(size_t)r * side + c] = 1;
        }
    return inst;
}

// Layout: A in columns [0, n), separator column n, B in columns [n+1, 2n+1);
// the target (A xor B) sits on A's footprint.
TaskInstance gen_xor(int n, uint64_t seed) {
    TaskInstance inst = blank_instance(TaskId::bitwise_xor, n, seed, padded_k(TaskId::bitwise_xor, n));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> bit(0, 1);
    const int side = inst.side();
    for (int r = 0; r < n; ++r) {
        inst.input[(size_t)r * side + n] = 3;  // separator
        for (int c = 0; c < n; ++c) {
            int a = bit(rng), b = bit(rng);
            inst.input[(size_t)r * side + c] = 1 + a;
            inst.input[(size_t)r * side + n + 1 + c] = 1 + b;
            inst.target[(size_t)r * side + c] = 1 + (a ^ b);
            inst.mask[(size_t)r * side + c] = 1;
        }
    }
    return inst;
}

TaskInstance gen_square_mod2(int n, uint64_t seed) {
    TaskInstance inst = blank_instance(TaskId::square_mod2, n, seed, padded_k(TaskId::square_mod2, n));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> bit(0, 1);
    const int side = inst.side();
    std::vector<int> bits((size_t)n * n);
    for (int& b : bits) b = bit(rng);
    std::vector<int> sq = square_mod2_of(bits, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            inst.input[(size_t)r * side + c] = 1 + bits[(size_t)r * n + c];
            inst.target[(size_t)r * side + c] = 1 + sq[(size_t)r * n + c];
            inst.mask[(size_t)r * side + c] = 1;
        }
    return inst;
}

// Copies a v x v matrix into the padded grid; mask covers the whole v x v block.
void place_graph(TaskInstance& inst, const std::vector<int>& in,
                 const std::vector<int>& out, int v) {
    const int side = inst.side();
    for (int r = 0; r < v; ++r)
        for (int c = 0; c < v; ++c) {
            inst.input[(size_t)r * side + c] = in[(size_t)r * v + c];
            inst.target[(size_t)r * side + c] = out[(size_t)r * v + c];
            inst.mask[(size_t)r * side + c] = 1;
        }
}

// Sparse undirected labelled graph; density 1.5/v keeps several components.
TaskInstance gen_component_labeling(int v, uint64_t seed) {
    TaskInstance inst = blank_instance(TaskId::component_labeling, v, seed,
                                       padded_k(TaskId::component_labeling, v));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> label(2, 100);
    const double p = std::min(0.5, 1.5 / v);
    std::vector<int> labels((size_t)v * v, 0);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (coin(rng) < p) {
                int lab = label(rng);
                labels[(size_t)i * v + j] = labels[(size_t)j * v + i] = lab;
            }
    place_graph(inst, labels, component_min_labels(labels, v), v);
    return inst;
}

TaskInstance gen_transitivity(int v, uint64_t seed) {
    TaskInstance inst = blank_instance(TaskId::transitivity, v, seed,
                                       padded_k(TaskId::transitivity, v));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double p = std::min(0.5, 2.0 / v);
    std::vector<int> adj((size_t)v * v, 0);
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < v; ++j)
            if (i != j && coin(rng) < p) adj[(size_t)i * v + j] = 1;
    place_graph(inst, adj, transitive_step_of(adj, v), v);
    return inst;
}

// Complete bipartite graph over shuffled vertices plus Poisson(3) extra edges;
// only the extras can close triangles.
TaskInstance gen_triangle_finding(int v, uint64_t seed) {
    TaskInstance inst = blank_instance(TaskId::triangle_finding, v, seed,
                                       padded_k(TaskId::triangle_finding, v));
    std::mt19937_64 rng(seed);
    std::vector<int> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> part(v, 0);
    for (int i = 0; i < v / 2; ++i) part[order[i]] = 1;

    std::vector<int> adj((size_t)v * v, 0);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (part[i] != part[j]) adj[(size_t)i * v + j] = adj[(size_t)j * v + i] = 1;

    std::poisson_distribution<int> extra_count(3.0);
    std::uniform_int_distribution<int> vertex(0, v - 1);
    int extras = extra_count(rng);
    for (int e = 0; e < extras; ++e) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            int i = vertex(rng), j = vertex(rng);
            if (i == j || adj[(size_t)i * v + j]) continue;
            adj[(size_t)i * v + j] = adj[(size_t)j * v + i] = 1;
            break;
        }
    }
    place_graph(inst, adj, triangle_edges(adj, v), v);
    return inst;
}

}  // namespace

TaskInstance generate(TaskId task, int n, uint64_t seed) {
    const TaskInfo& info = task_info(task);
    if (info.from_dataset)
        throw ConfigError(std::string(info.name) + " instances come from a dataset file");
    if (info.is_graph && n < 2) throw ConfigError("graph tasks need at least 2 vertices");
    switch (task) {
        case TaskId::transpose:
        case TaskId::rotate90: return gen_permutation_task(task, n, seed);
        case TaskId::bitwise_xor: return gen_xor(n, seed);
        case TaskId::square_mod2: return gen_square_mod2(n, seed);
        case TaskId::component_labeling: return gen_component_labeling(n, seed);
        case TaskId::transitivity: return gen_transitivity(n, seed);
        case TaskId::triangle_finding: return gen_triangle_finding(n, seed);
        default: throw ConfigError("unsupported generated task");
    }
}

// ---- serialization ------------------------------------------------------------

void write_instance(std::ostream& os, const TaskInstance& inst) {
    os << task_info(inst.task).name << ' ' << inst.n << ' ' << inst.seed << '\n';
    const int side = inst.side();
    auto emit = [&](auto get) {
        for (int r = 0; r < side; ++r) {
            for (int c = 0; c < side; ++c) {
                if (c) os << ' ';
                os << get((size_t)r * side + c);
            }
            os << '\n';
        }
    };
    emit([&](size_t i) { return inst.input[i]; });
    emit([&](size_t i) { return inst.target[i]; });
    emit([&](size_t i) { return (int)inst.mask[i]; });
}

TaskInstance read_instance(std::istream& is) {
    std::string name;
    int n = 0;
    uint64_t seed = 0;
    if (!(is >> name >> n >> seed)) throw DataError("instance header malformed");
    TaskInstance inst;
    inst.task = task_from_name(name);
    inst.n = n;
    inst.seed = seed;
    inst.k = padded_k(inst.task, n);
    const int64_t cells = inst.cells();
    inst.input.resize(cells);
    inst.target.resize(cells);
    inst.mask.resize(cells);
    for (int64_t i = 0; i < cells; ++i)
        if (!(is >> inst.input[i])) throw DataError("instance input grid truncated");
    for (int64_t i = 0; i < cells; ++i)
        if (!(is >> inst.target[i])) throw DataError("instance target grid truncated");
    for (int64_t i = 0; i < cells; ++i) {
        int m = 0;
        if (!(is >> m)) throw DataError("instance mask grid truncated");
        inst.mask[i] = (uint8_t)m;
    }
    return inst;
}

}  // namespace mse
