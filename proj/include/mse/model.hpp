#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mse/graph.hpp"
#include "mse/permute.hpp"

namespace mse {

enum class FlattenKind { zorder, raster };

inline const char* flatten_kind_name(FlattenKind f) {
    return f == FlattenKind::zorder ? "zorder" : "raster";
}

// Named learnable buffer. Graph leaves are created from these per step; the
// optimizer and checkpoints address them through ModelParams::all().
template <typename T>
struct Param {
    std::string name;
    Shape shape;
    std::vector<T> value;

    Param() = default;
    Param(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
        value.assign(numel(shape), T(0));
    }
};

// One quaternary switch unit: o = sigma(s) (*) i + h * (W GELU(RMSNorm(Z i)) + b)
template <typename T>
struct QsuWeights {
    Param<T> Z;         // [4m, 8m]
    Param<T> rms_gain;  // [8m]
    Param<T> W;         // [8m, 4m]
    Param<T> b;         // [4m]
    Param<T> s;         // [4m], initialized to inverse-sigmoid of 0.9
    Param<T> h;         // scalar, initialized to sqrt(1 - 0.9^2) * 0.25

    void collect(std::vector<Param<T>*>& out) {
        for (Param<T>* p : {&Z, &rms_gain, &W, &b, &s, &h}) out.push_back(p);
    }
};

// Three weight sets per Benes block: the forward Shuffle-Exchange half shares
// one set, the mirror half shares another, the closing switch layer owns its own.
template <typename T>
struct BenesBlockWeights {
    QsuWeights<T> forward_shared;
    QsuWeights<T> mirror_shared;
    QsuWeights<T> final;

    void collect(std::vector<Param<T>*>& out) {
        forward_shared.collect(out);
        mirror_shared.collect(out);
        final.collect(out);
    }
};

template <typename T>
struct ModelParams {
    int m = 96;
    int blocks_n = 2;
    int vocab_in = 0;
    int vocab_out = 0;
    FlattenKind flatten = FlattenKind::zorder;

    Param<T> embedding;  // [vocab_in, m]
    std::vector<BenesBlockWeights<T>> blocks;
    Param<T> head_w1, head_b1;  // m -> m, GELU applied after
    Param<T> head_w2, head_b2;  // m -> vocab_out

    // Stable enumeration order; checkpoints and optimizer buffers rely on it.
    std::vector<Param<T>*> all() {
        std::vector<Param<T>*> out;
        out.push_back(&embedding);
        for (auto& b : blocks) b.collect(out);
        for (Param<T>* p : {&head_w1, &head_b1, &head_w2, &head_b2}) out.push_back(p);
        return out;
    }

    int64_t scalar_count() {
        int64_t n = 0;
        for (Param<T>* p : all()) n += (int64_t)p->value.size();
        return n;
    }
};

// ---- parameter counting (closed form, size-independent) ----------------------

inline int64_t qsu_weight_count(int m) {
    // Z + W + rms_gain + b + s + h
    return 32LL * m * m + 32LL * m * m + 8LL * m + 4LL * m + 4LL * m + 1;
}

inline int64_t block_weight_count(int m) { return 3 * qsu_weight_count(m); }

inline int64_t param_count(int m, int blocks_n, int vocab_in, int vocab_out) {
    int64_t head = (int64_t)m * m + m + (int64_t)m * vocab_out + vocab_out;
    return blocks_n * block_weight_count(m) + (int64_t)vocab_in * m + head;
}

// ---- initialization -----------------------------------------------------------

namespace detail {
template <typename T>
void fill_uniform(Param<T>& p, std::mt19937_64& rng, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : p.value) v = (T)dist(rng);
}
}  // namespace detail

// Fan-in variance-scaled uniform init for matrices and the embedding; gates per
// the unit definition: s = log(9) so sigma(s) = 0.9, h = sqrt(1 - 0.81) / 4.
template <typename T>
ModelParams<T> init_params(int m, int blocks_n, int vocab_in, int vocab_out,
                           uint64_t seed, FlattenKind flatten = FlattenKind::zorder) {
    if (m < 1 || blocks_n < 1 || vocab_in < 1 || vocab_out < 1)
        throw ShapeError("init_params: m, blocks, vocab sizes must be >= 1");
    ModelParams<T> p;
    p.m = m;
    p.blocks_n = blocks_n;
    p.vocab_in = vocab_in;
    p.vocab_out = vocab_out;
    p.flatten = flatten;

    const T s_init = (T)std::log(9.0);                    // inverse sigmoid of 0.9
    const T h_init = (T)(std::sqrt(1.0 - 0.9 * 0.9) * 0.25);

    std::mt19937_64 rng(seed);
    p.embedding = Param<T>("embedding", {vocab_in, m});
    detail::fill_uniform(p.embedding, rng, std::sqrt(3.0 / m));

    p.blocks.resize(blocks_n);
    for (int bi = 0; bi < blocks_n; ++bi) {
        auto init_qsu = [&](QsuWeights<T>& q, const std::string& prefix) {
            q.Z = Param<T>(prefix + ".Z", {4 * m, 8 * m});
            detail::fill_uniform(q.Z, rng, std::sqrt(3.0 / (4.0 * m)));
            q.rms_gain = Param<T>(prefix + ".rms_gain", {8 * m});
            std::fill(q.rms_gain.value.begin(), q.rms_gain.value.end(), T(1));
            q.W = Param<T>(prefix + ".W", {8 * m, 4 * m});
            detail::fill_uniform(q.W, rng, std::sqrt(3.0 / (8.0 * m)));
            q.b = Param<T>(prefix + ".b", {4 * m});
            q.s = Param<T>(prefix + ".s", {4 * m});
            std::fill(q.s.value.begin(), q.s.value.end(), s_init);
            q.h = Param<T>(prefix + ".h", {1});
            q.h.value[0] = h_init;
        };
        const std::string bp = "block" + std::to_string(bi);
        init_qsu(p.blocks[bi].forward_shared, bp + ".forward");
        init_qsu(p.blocks[bi].mirror_shared, bp + ".mirror");
        init_qsu(p.blocks[bi].final, bp + ".final");
    }

    p.head_w1 = Param<T>("head.w1", {m, m});
    detail::fill_uniform(p.head_w1, rng, std::sqrt(3.0 / m));
    p.head_b1 = Param<T>("head.b1", {m});
    p.head_w2 = Param<T>("head.w2", {m, vocab_out});
    detail::fill_uniform(p.head_w2, rng, std::sqrt(3.0 / m));
    p.head_b2 = Param<T>("head.b2", {vocab_out});
    return p;
}

// ---- graph binding --------------------------------------------------------------

// Creates at most one leaf per Param within a graph so that weight sharing
// (shared switch layers, recurrent steps) accumulates gradients correctly.
template <typename T>
class ParamBinder {
public:
    // trainable=false binds inference-only leaves: no gradient bookkeeping.
    explicit ParamBinder(Graph<T>& g, bool trainable = true)
        : g_(g), trainable_(trainable) {}

    int operator()(const Param<T>& p) {
        auto it = ids_.find(&p);
        if (it != ids_.end()) return it->second;
        int id = g_.leaf(p.shape, p.value.data(), trainable_);
        ids_.emplace(&p, id);
        return id;
    }

    // Gradient span for a bound param; empty if the param was never used.
    std::span<const T> grad_of(const Param<T>& p) {
        auto it = ids_.find(&p);
        if (it == ids_.end()) return {};
        return g_.grad(it->second);
    }

private:
    Graph<T>& g_;
    bool trainable_;
    std::unordered_map<const Param<T>*, int> ids_;
};

// ---- forward passes --------------------------------------------------------------

struct BlockCounters {
    int switch_layers = 0;
    int shuffle_layers = 0;
};
struct ForwardStats {
    std::vector<BlockCounters> per_block;
};

namespace detail {

// Repeats a per-sample table across the batch with row offsets.
inline std::vector<int> batched_table(const std::vector<int>& t, int batch) {
    std::vector<int> out((size_t)t.size() * batch);
    const int64_t len = (int64_t)t.size();
    for (int s = 0; s < batch; ++s)
        for (int64_t j = 0; j < len; ++j) out[s * len + j] = (int)(s * len + t[j]);
    return out;
}

}  // namespace detail

template <typename T>
int qsu_forward(Graph<T>& g, ParamBinder<T>& bind, int x, const QsuWeights<T>& w) {
    return g.switch_unit(x, bind(w.Z), bind(w.rms_gain), bind(w.W), bind(w.b), bind(w.s),
                         bind(w.h));
}

// One switch layer: reinterpret [len, m] as [len/4, 4m], apply the shared unit,
// reinterpret back.
template <typename T>
int qswitch_layer(Graph<T>& g, ParamBinder<T>& bind, int seq, const QsuWeights<T>& w) {
    const Shape s = g.shape(seq);  // copy: adding nodes may reallocate
    if (s.size() != 2 || s[0] % 4 != 0)
        throw ShapeError("qswitch_layer: sequence length must be divisible by 4, got " +
                         shape_str(s));
    int grouped = g.view(seq, {s[0] / 4, 4 * s[1]});
    int out = qsu_forward(g, bind, grouped, w);
    return g.view(out, s);
}

// (k-1) x [switch; right shuffle], (k-1) x [switch; left shuffle], final switch.
template <typename T>
int benes_block(Graph<T>& g, ParamBinder<T>& bind, int seq, const BenesBlockWeights<T>& w,
                int k, int batch, BlockCounters* counters = nullptr) {
    auto shuffle = [&](int x, PermKind kind) {
        const PermTable& t = perm_table(k, kind);
        std::vector<int> idx = detail::batched_table(t.table, batch);
        if (counters) counters->shuffle_layers++;
        return g.gather_rows(x, idx);
    };
    auto sw = [&](int x, const QsuWeights<T>& qs) {
        if (counters) counters->switch_layers++;
        return qswitch_layer(g, bind, x, qs);
    };

    int x = seq;
    for (int i = 0; i < k - 1; ++i) {
        x = sw(x, w.forward_shared);
        x = shuffle(x, PermKind::qshuffle_right);
    }
    for (int i = 0; i < k - 1; ++i) {
        x = sw(x, w.mirror_shared);
        x = shuffle(x, PermKind::qshuffle_left);
    }
    return sw(x, w.final);
}

// Embeds a batch of padded 2^k x 2^k symbol grids (row-major ints) and flattens
// them to the model's sequence order. Returns a [batch * 4^k, m] node.
template <typename T>
int embed_and_flatten(Graph<T>& g, ParamBinder<T>& bind, const ModelParams<T>& p,
                      const std::vector<const std::vector<int>*>& grids, int k) {
    const int64_t cells = int64_t(1) << (2 * k);
    std::vector<int> symbols;
    symbols.reserve(cells * grids.size());
    for (const auto* grid : grids) {
        if ((int64_t)grid->size() != cells)
            throw ShapeError("embed_and_flatten: grid has " +
                             std::to_string(grid->size()) + " cells, expected " +
                             std::to_string(cells));
        for (int s : *grid) {
            if (s < 0 || s >= p.vocab_in)
                throw ShapeError("embed_and_flatten: symbol " + std::to_string(s) +
                                 " outside vocabulary of " + std::to_string(p.vocab_in));
            symbols.push_back(s);
        }
    }
    int embedded = g.gather_rows(bind(p.embedding), symbols);
    if (p.flatten == FlattenKind::raster) return embedded;
    const PermTable& ft = perm_table(k, PermKind::zorder_flatten);
    return g.gather_rows(embedded, detail::batched_table(ft.table, (int)grids.size()));
}

// All Benes blocks in sequence over a flattened hidden state.
template <typename T>
int benes_stack(Graph<T>& g, ParamBinder<T>& bind, int seq, const ModelParams<T>& p,
                int k, int batch, ForwardStats* stats = nullptr) {
    if (stats) stats->per_block.assign(p.blocks.size(), BlockCounters{});
    int x = seq;
    for (size_t bi = 0; bi < p.blocks.size(); ++bi)
        x = benes_block(g, bind, x, p.blocks[bi], k, batch,
                        stats ? &stats->per_block[bi] : nullptr);
    return x;
}

// Unflatten to grid order, then the output head (linear, GELU, linear).
// Returns logits [batch * 4^k, vocab_out] in row-major grid order.
template <typename T>
int head_logits(Graph<T>& g, ParamBinder<T>& bind, int hidden, const ModelParams<T>& p,
                int k, int batch) {
    int x = hidden;
    if (p.flatten == FlattenKind::zorder) {
        const PermTable& ut = perm_table(k, PermKind::zorder_unflatten);
        x = g.gather_rows(x, detail::batched_table(ut.table, batch));
    }
    int h1 = g.gelu(g.linear(x, bind(p.head_w1), bind(p.head_b1)));
    return g.linear(h1, bind(p.head_w2), bind(p.head_b2));
}

// Single-pass forward: embed, flatten, blocks, unflatten, head.
template <typename T>
int forward_logits(Graph<T>& g, ParamBinder<T>& bind, const ModelParams<T>& p,
                   const std::vector<const std::vector<int>*>& grids, int k,
                   ForwardStats* stats = nullptr) {
    int seq = embed_and_flatten(g, bind, p, grids, k);
    int hidden = benes_stack(g, bind, seq, p, k, (int)grids.size(), stats);
    return head_logits(g, bind, hidden, p, k, (int)grids.size());
}

// Recurrent application: the hidden state is passed through the block stack
// `steps` times with shared weights; the embedded input is re-added before
// every pass so the givens stay visible; the head reads out after each pass.
// steps=1 coincides with forward_logits.
template <typename T>
std::vector<int> recurrent_logits(Graph<T>& g, ParamBinder<T>& bind,
                                  const ModelParams<T>& p,
                                  const std::vector<const std::vector<int>*>& grids, int k,
                                  int steps, ForwardStats* stats = nullptr) {
    if (steps < 1) throw ShapeError("recurrent_logits: steps must be >= 1");
    int e = embed_and_flatten(g, bind, p, grids, k);
    std::vector<int> per_step;
    per_step.reserve(steps);
    int hidden = -1;
    for (int t = 0; t < steps; ++t) {
        int x = hidden < 0 ? e : g.add(hidden, e);
        hidden = benes_stack(g, bind, x, p, k, (int)grids.size(),
                             t == 0 ? stats : nullptr);
        per_step.push_back(head_logits(g, bind, hidden, p, k, (int)grids.size()));
    }
    return per_step;
}

// Argmax decode of logits values back into one grid per batch item.
template <typename T>
std::vector<std::vector<int>> decode_argmax(const Graph<T>& g, int logits, int batch) {
    const Shape& s = g.shape(logits);
    int classes = s.back();
    int64_t rows = numel(s) / classes;
    int64_t per = rows / batch;
    std::span<const T> v = g.value(logits);
    std::vector<std::vector<int>> out(batch, std::vector<int>(per));
    for (int64_t r = 0; r < rows; ++r) {
        const T* zr = v.data() + r * classes;
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (zr[c] > zr[best]) best = c;
        out[r / per][r % per] = best;
    }
    return out;
}

}  // namespace mse
