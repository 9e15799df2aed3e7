#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mse/blas.hpp"
#include "mse/errors.hpp"
#include "mse/shape.hpp"

namespace mse {

inline constexpr double kRmsNormEps = 1e-6;

// Reverse-mode tape over dense row-major arrays. Templated on the scalar type:
// float is the training precision, double exists for finite-difference
// verification. One Graph instance belongs to one execution context; nodes are
// created in topological order and backward() walks them in reverse.
//
// The op set is deliberately small: exactly what the switch-unit model, its
// loss, and the tests need.
template <typename T>
class Graph {
    struct StorageSlot {
        std::vector<T> value;
        std::vector<T> grad;
        bool grad_touched = false;
    };
    struct Node {
        Shape shape;
        int storage = -1;
        bool requires_grad = false;
        std::function<void(Graph&)> backward;
    };
    // Saved activations of the fused switch unit, shared with its backward.
    struct SwitchCtx {
        std::vector<T> u, g, c, inv_rms;
    };

public:
    // ---- construction of leaves -------------------------------------------

    // Copies `data` into the tape. Parameters use requires_grad=true.
    int leaf(Shape shape, const T* data, bool requires_grad) {
        check_positive_extents(shape);
        int id = alloc(std::move(shape), requires_grad);
        auto& v = storage_[nodes_[id].storage].value;
        std::copy(data, data + v.size(), v.begin());
        return id;
    }

    int zeros(Shape shape, bool requires_grad) {
        check_positive_extents(shape);
        return alloc(std::move(shape), requires_grad);
    }

    // ---- metadata-only reinterpretation ------------------------------------

    // Shares storage with `x`; gradients flow through the shared buffer.
    int view(int x, Shape shape) {
        check_positive_extents(shape);
        if (numel(shape) != numel(nodes_[x].shape))
            throw ShapeError("view: element count mismatch " + shape_str(nodes_[x].shape) +
                             " -> " + shape_str(shape));
        Node n;
        n.shape = std::move(shape);
        n.storage = nodes_[x].storage;
        n.requires_grad = nodes_[x].requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    // ---- affine map over the trailing dimension -----------------------------

    // x: [..., d_in], w: [d_in, d_out], bias: [d_out] or -1 for none.
    int linear(int x, int w, int bias) {
        const Shape& xs = nodes_[x].shape;
        const Shape& ws = nodes_[w].shape;
        if (ws.size() != 2)
            throw ShapeError("linear: weight must be 2D, got " + shape_str(ws));
        int d_in = ws[0], d_out = ws[1];
        if (trailing(xs) != d_in)
            throw ShapeError("linear: input trailing extent " + std::to_string(trailing(xs)) +
                             " != weight input extent " + std::to_string(d_in) + " (x " +
                             shape_str(xs) + ", w " + shape_str(ws) + ")");
        if (bias >= 0 && numel(nodes_[bias].shape) != d_out)
            throw ShapeError("linear: bias shape " + shape_str(nodes_[bias].shape) +
                             " != [" + std::to_string(d_out) + "]");
        int64_t rows = leading_rows(xs);

        Shape out_shape = xs;
        out_shape.back() = d_out;
        bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad ||
                  (bias >= 0 && nodes_[bias].requires_grad);
        int out = alloc(std::move(out_shape), rg);

        T* c = val(out);
        gemm(false, false, (int)rows, d_out, d_in, T(1), val(x), d_in, val(w), d_out, T(0),
             c, d_out);
        if (bias >= 0) {
            const T* b = val(bias);
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < d_out; ++j) c[r * d_out + j] += b[j];
        }

        if (rg) {
            nodes_[out].backward = [x, w, bias, out, rows, d_in, d_out](Graph& g) {
                const T* dy = g.val_grad(out);
                if (g.nodes_[x].requires_grad)
                    gemm(false, true, (int)rows, d_in, d_out, T(1), dy, d_out, g.val(w),
                         d_out, T(1), g.grad_accum(x), d_in);
                if (g.nodes_[w].requires_grad)
                    gemm(true, false, d_in, d_out, (int)rows, T(1), g.val(x), d_in, dy,
                         d_out, T(1), g.grad_accum(w), d_out);
                if (bias >= 0 && g.nodes_[bias].requires_grad) {
                    T* db = g.grad_accum(bias);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d_out; ++j) db[j] += dy[r * d_out + j];
                }
            };
        }
        return out;
    }

    // ---- elementwise --------------------------------------------------------

    // Exact-erf GELU: x * Phi(x).
    int gelu(int x) {
        int out = alloc_like(x);
        const T* in = val(x);
        T* o = val(out);
        int64_t n = numel(nodes_[x].shape);
        for (int64_t i = 0; i < n; ++i) o[i] = in[i] * normal_cdf(in[i]);
        if (nodes_[out].requires_grad) {
            nodes_[out].backward = [x, out, n](Graph& g) {
                const T* dy = g.val_grad(out);
                const T* in = g.val(x);
                T* dx = g.grad_accum(x);
                for (int64_t i = 0; i < n; ++i)
                    dx[i] += dy[i] * (normal_cdf(in[i]) + in[i] * normal_pdf(in[i]));
            };
        }
        return out;
    }

    int sigmoid(int x) {
        int out = alloc_like(x);
        const T* in = val(x);
        T* o = val(out);
        int64_t n = numel(nodes_[x].shape);
        for (int64_t i = 0; i < n; ++i) o[i] = logistic(in[i]);
        if (nodes_[out].requires_grad) {
            nodes_[out].backward = [x, out, n](Graph& g) {
                const T* dy = g.val_grad(out);
                const T* y = g.val(out);
                T* dx = g.grad_accum(x);
                for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (1 - y[i]);
            };
        }
        return out;
    }

    // y_i = gain_i * x_i / sqrt(mean_j(x_j^2) + eps), per row over the trailing dim.
    int rmsnorm(int x, int gain) {
        const Shape& xs = nodes_[x].shape;
        int d = trailing(xs);
        if (numel(nodes_[gain].shape) != d)
            throw ShapeError("rmsnorm: gain shape " + shape_str(nodes_[gain].shape) +
                             " does not match trailing extent " + std::to_string(d));
        int64_t rows = leading_rows(xs);
        bool rg = nodes_[x].requires_grad || nodes_[gain].requires_grad;
        int out = alloc(xs, rg);

        std::vector<T> inv_rms(rows);
        const T* in = val(x);
        const T* g = val(gain);
        T* o = val(out);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = in + r * d;
            T ss = 0;
            for (int j = 0; j < d; ++j) ss += xr[j] * xr[j];
            T ir = T(1) / std::sqrt(ss / d + T(kRmsNormEps));
            inv_rms[r] = ir;
            for (int j = 0; j < d; ++j) o[r * d + j] = g[j] * xr[j] * ir;
        }

        if (rg) {
            nodes_[out].backward = [x, gain, out, rows, d,
                                    ir = std::move(inv_rms)](Graph& g_) {
                const T* dy = g_.val_grad(out);
                const T* in = g_.val(x);
                const T* gv = g_.val(gain);
                T* dx = g_.nodes_[x].requires_grad ? g_.grad_accum(x) : nullptr;
                T* dg = g_.nodes_[gain].requires_grad ? g_.grad_accum(gain) : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const T* xr = in + r * d;
                    const T* dyr = dy + r * d;
                    if (dx) {
                        T dot = 0;
                        for (int j = 0; j < d; ++j) dot += dyr[j] * gv[j] * xr[j];
                        T c = ir[r] * ir[r] * ir[r] * dot / d;
                        for (int j = 0; j < d; ++j)
                            dx[r * d + j] += ir[r] * gv[j] * dyr[j] - c * xr[j];
                    }
                    if (dg)
                        for (int j = 0; j < d; ++j) dg[j] += dyr[j] * xr[j] * ir[r];
                }
            };
        }
        return out;
    }

    // y[r, i] = x[r, i] * v[i]  (vector broadcast over rows)
    int row_scale(int x, int v) {
        const Shape& xs = nodes_[x].shape;
        int d = trailing(xs);
        if (numel(nodes_[v].shape) != d)
            throw ShapeError("row_scale: vector shape " + shape_str(nodes_[v].shape) +
                             " does not match trailing extent " + std::to_string(d));
        int64_t rows = leading_rows(xs);
        bool rg = nodes_[x].requires_grad || nodes_[v].requires_grad;
        int out = alloc(xs, rg);
        const T* in = val(x);
        const T* vv = val(v);
        T* o = val(out);
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) o[r * d + j] = in[r * d + j] * vv[j];
        if (rg) {
            nodes_[out].backward = [x, v, out, rows, d](Graph& g) {
                const T* dy = g.val_grad(out);
                if (g.nodes_[x].requires_grad) {
                    const T* vv = g.val(v);
                    T* dx = g.grad_accum(x);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j) dx[r * d + j] += dy[r * d + j] * vv[j];
                }
                if (g.nodes_[v].requires_grad) {
                    const T* in = g.val(x);
                    T* dv = g.grad_accum(v);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j) dv[j] += dy[r * d + j] * in[r * d + j];
                }
            };
        }
        return out;
    }

    // y = h * x where h is a single-element node.
    int scalar_scale(int x, int h) {
        if (numel(nodes_[h].shape) != 1)
            throw ShapeError("scalar_scale: scale node must hold one element, got " +
                             shape_str(nodes_[h].shape));
        bool rg = nodes_[x].requires_grad || nodes_[h].requires_grad;
        int out = alloc(nodes_[x].shape, rg);
        int64_t n = numel(nodes_[x].shape);
        T hv = val(h)[0];
        const T* in = val(x);
        T* o = val(out);
        for (int64_t i = 0; i < n; ++i) o[i] = hv * in[i];
        if (rg) {
            nodes_[out].backward = [x, h, out, n](Graph& g) {
                const T* dy = g.val_grad(out);
                if (g.nodes_[x].requires_grad) {
                    T hv = g.val(h)[0];
                    T* dx = g.grad_accum(x);
                    for (int64_t i = 0; i < n; ++i) dx[i] += hv * dy[i];
                }
                if (g.nodes_[h].requires_grad) {
                    const T* in = g.val(x);
                    T acc = 0;
                    for (int64_t i = 0; i < n; ++i) acc += dy[i] * in[i];
                    g.grad_accum(h)[0] += acc;
                }
            };
        }
        return out;
    }

    int scale_const(int x, T c) {
        int out = alloc_like(x);
        int64_t n = numel(nodes_[x].shape);
        const T* in = val(x);
        T* o = val(out);
        for (int64_t i = 0; i < n; ++i) o[i] = c * in[i];
        if (nodes_[out].requires_grad) {
            nodes_[out].backward = [x, out, n, c](Graph& g) {
                const T* dy = g.val_grad(out);
                T* dx = g.grad_accum(x);
                for (int64_t i = 0; i < n; ++i) dx[i] += c * dy[i];
            };
        }
        return out;
    }

    int add(int a, int b) {
        if (nodes_[a].shape != nodes_[b].shape)
            throw ShapeError("add: shape mismatch " + shape_str(nodes_[a].shape) + " vs " +
                             shape_str(nodes_[b].shape));
        bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
        int out = alloc(nodes_[a].shape, rg);
        int64_t n = numel(nodes_[a].shape);
        const T* av = val(a);
        const T* bv = val(b);
        T* o = val(out);
        for (int64_t i = 0; i < n; ++i) o[i] = av[i] + bv[i];
        if (rg) {
            nodes_[out].backward = [a, b, out, n](Graph& g) {
                const T* dy = g.val_grad(out);
                if (g.nodes_[a].requires_grad) {
                    T* da = g.grad_accum(a);
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
                }
                if (g.nodes_[b].requires_grad) {
                    T* db = g.grad_accum(b);
                    for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
                }
            };
        }
        return out;
    }

    int hadamard(int a, int b) {
        if (nodes_[a].shape != nodes_[b].shape)
            throw ShapeError("hadamard: shape mismatch " + shape_str(nodes_[a].shape) +
                             " vs " + shape_str(nodes_[b].shape));
        bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
        int out = alloc(nodes_[a].shape, rg);
        int64_t n = numel(nodes_[a].shape);
        const T* av = val(a);
        const T* bv = val(b);
        T* o = val(out);
        for (int64_t i = 0; i < n; ++i) o[i] = av[i] * bv[i];
        if (rg) {
            nodes_[out].backward = [a, b, out, n](Graph& g) {
                const T* dy = g.val_grad(out);
                if (g.nodes_[a].requires_grad) {
                    const T* bv = g.val(b);
                    T* da = g.grad_accum(a);
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
                }
                if (g.nodes_[b].requires_grad) {
                    const T* av = g.val(a);
                    T* db = g.grad_accum(b);
                    for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
                }
            };
        }
        return out;
    }

    int reduce_sum(int x) {
        int out = alloc(Shape{1}, nodes_[x].requires_grad);
        int64_t n = numel(nodes_[x].shape);
        const T* in = val(x);
        T acc = 0;
        for (int64_t i = 0; i < n; ++i) acc += in[i];
        val(out)[0] = acc;
        if (nodes_[out].requires_grad) {
            nodes_[out].backward = [x, out, n](Graph& g) {
                T dy = g.val_grad(out)[0];
                T* dx = g.grad_accum(x);
                for (int64_t i = 0; i < n; ++i) dx[i] += dy;
            };
        }
        return out;
    }

    // ---- row gather ---------------------------------------------------------

    // out[j, :] = src[idx[j], :]. Realizes both the embedding lookup and every
    // permutation (via a precomputed table); the gradient scatters back.
    int gather_rows(int src, std::span<const int> idx) {
        const Shape& ss = nodes_[src].shape;
        int d = trailing(ss);
        int64_t src_rows = leading_rows(ss);
        for (int j : idx)
            if (j < 0 || j >= src_rows)
                throw ShapeError("gather_rows: index " + std::to_string(j) +
                                 " out of range [0, " + std::to_string(src_rows) + ")");
        Shape out_shape{(int)idx.size(), d};
        int out = alloc(std::move(out_shape), nodes_[src].requires_grad);
        const T* in = val(src);
        T* o = val(out);
        for (size_t j = 0; j < idx.size(); ++j)
            std::copy(in + (int64_t)idx[j] * d, in + (int64_t)idx[j] * d + d, o + j * d);
        if (nodes_[out].requires_grad) {
            std::vector<int> table(idx.begin(), idx.end());
            nodes_[out].backward = [src, out, d, tb = std::move(table)](Graph& g) {
                const T* dy = g.val_grad(out);
                T* dx = g.grad_accum(src);
                for (size_t j = 0; j < tb.size(); ++j) {
                    T* dst = dx + (int64_t)tb[j] * d;
                    const T* s = dy + j * d;
                    for (int c = 0; c < d; ++c) dst[c] += s[c];
                }
            };
        }
        return out;
    }

    // ---- masked softmax cross-entropy --------------------------------------

    // Mean over masked rows of -log softmax(logits)[label]. Scalar output.
    int softmax_xent(int logits, std::span<const int> labels,
                     std::span<const uint8_t> mask) {
        const Shape& ls = nodes_[logits].shape;
        int classes = trailing(ls);
        int64_t rows = leading_rows(ls);
        if ((int64_t)labels.size() != rows || (int64_t)mask.size() != rows)
            throw ShapeError("softmax_xent: labels/mask length " +
                             std::to_string(labels.size()) + "/" +
                             std::to_string(mask.size()) + " != rows " +
                             std::to_string(rows));
        int64_t masked = 0;
        for (int64_t r = 0; r < rows; ++r) {
            if (!mask[r]) continue;
            ++masked;
            if (labels[r] < 0 || labels[r] >= classes)
                throw ShapeError("softmax_xent: label " + std::to_string(labels[r]) +
                                 " out of range [0, " + std::to_string(classes) + ")");
        }
        if (masked == 0) throw ShapeError("softmax_xent: all-zero mask, mean undefined");

        int out = alloc(Shape{1}, nodes_[logits].requires_grad);
        const T* z = val(logits);
        double total = 0;  // serial accumulation keeps runs bit-identical
        for (int64_t r = 0; r < rows; ++r) {
            if (!mask[r]) continue;
            const T* zr = z + r * classes;
            T zmax = zr[0];
            for (int c = 1; c < classes; ++c) zmax = std::max(zmax, zr[c]);
            double se = 0;
            for (int c = 0; c < classes; ++c) se += std::exp((double)(zr[c] - zmax));
            total += std::log(se) + (double)zmax - (double)zr[labels[r]];
        }
        val(out)[0] = (T)(total / masked);

        if (nodes_[out].requires_grad) {
            std::vector<int> lab(labels.begin(), labels.end());
            std::vector<uint8_t> msk(mask.begin(), mask.end());
            nodes_[out].backward = [logits, out, rows, classes, masked,
                                    lab = std::move(lab), msk = std::move(msk)](Graph& g) {
                T dy = g.val_grad(out)[0];
                const T* z = g.val(logits);
                T* dz = g.grad_accum(logits);
                T scale = dy / (T)masked;
                for (int64_t r = 0; r < rows; ++r) {
                    if (!msk[r]) continue;
                    const T* zr = z + r * classes;
                    T zmax = zr[0];
                    for (int c = 1; c < classes; ++c) zmax = std::max(zmax, zr[c]);
                    T se = 0;
                    for (int c = 0; c < classes; ++c) se += std::exp(zr[c] - zmax);
                    for (int c = 0; c < classes; ++c) {
                        T p = std::exp(zr[c] - zmax) / se;
                        dz[r * classes + c] += scale * (p - (c == lab[r] ? T(1) : T(0)));
                    }
                }
            };
        }
        return out;
    }

    // ---- fused quaternary switch unit ---------------------------------------
    //
    //   u = x Z;  g = GELU(RMSNorm(u) * gain);  c = g W + b
    //   o = sigma(s) (*) x + h * c
    //
    // One node instead of eight keeps per-layer tape memory at ~6 activations
    // per element, which is what bounds the largest trainable batch here.
    int switch_unit(int x, int z_w, int gain, int w_w, int b, int s, int h) {
        const Shape& xs = nodes_[x].shape;
        int d = trailing(xs);                       // 4m
        int64_t rows = leading_rows(xs);
        const Shape& zs = nodes_[z_w].shape;
        const Shape& ws = nodes_[w_w].shape;
        if (zs.size() != 2 || zs[0] != d)
            throw ShapeError("switch_unit: Z " + shape_str(zs) + " incompatible with input " +
                             shape_str(xs));
        int dh = zs[1];                             // 8m
        if (ws.size() != 2 || ws[0] != dh || ws[1] != d)
            throw ShapeError("switch_unit: W " + shape_str(ws) + " must be [" +
                             std::to_string(dh) + ", " + std::to_string(d) + "]");
        if (numel(nodes_[gain].shape) != dh)
            throw ShapeError("switch_unit: gain must have " + std::to_string(dh) +
                             " elements");
        if (numel(nodes_[b].shape) != d || numel(nodes_[s].shape) != d)
            throw ShapeError("switch_unit: b and s must have " + std::to_string(d) +
                             " elements");
        if (numel(nodes_[h].shape) != 1)
            throw ShapeError("switch_unit: h must be scalar");

        bool rg = nodes_[x].requires_grad || nodes_[z_w].requires_grad ||
                  nodes_[gain].requires_grad || nodes_[w_w].requires_grad ||
                  nodes_[b].requires_grad || nodes_[s].requires_grad ||
                  nodes_[h].requires_grad;
        int out = alloc(xs, rg);

        auto ctx = std::make_shared<SwitchCtx>();
        ctx->u.resize(rows * dh);
        ctx->g.resize(rows * dh);
        ctx->c.resize(rows * d);
        ctx->inv_rms.resize(rows);

        const T* xv = val(x);
        gemm(false, false, (int)rows, dh, d, T(1), xv, d, val(z_w), dh, T(0),
             ctx->u.data(), dh);
        const T* gainv = val(gain);
        for (int64_t r = 0; r < rows; ++r) {
            const T* ur = ctx->u.data() + r * dh;
            T ss = 0;
            for (int j = 0; j < dh; ++j) ss += ur[j] * ur[j];
            T ir = T(1) / std::sqrt(ss / dh + T(kRmsNormEps));
            ctx->inv_rms[r] = ir;
            T* gr = ctx->g.data() + r * dh;
            for (int j = 0; j < dh; ++j) {
                T nrm = ur[j] * ir * gainv[j];
                gr[j] = nrm * normal_cdf(nrm);
            }
        }
        gemm(false, false, (int)rows, d, dh, T(1), ctx->g.data(), dh, val(w_w), d, T(0),
             ctx->c.data(), d);
        const T* bv = val(b);
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) ctx->c[r * d + j] += bv[j];

        const T* sv = val(s);
        T hv = val(h)[0];
        std::vector<T> sig_s(d);
        for (int j = 0; j < d; ++j) sig_s[j] = logistic(sv[j]);
        T* ov = val(out);
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j)
                ov[r * d + j] = sig_s[j] * xv[r * d + j] + hv * ctx->c[r * d + j];

        if (rg) {
            nodes_[out].backward = [x, z_w, gain, w_w, b, s, h, out, rows, d, dh,
                                    ctx](Graph& g_) {
                const T* dy = g_.val_grad(out);
                const T* xv = g_.val(x);
                const T* sv = g_.val(s);
                const T* gainv = g_.val(gain);
                T hv = g_.val(h)[0];

                // residual gate
                if (g_.nodes_[s].requires_grad) {
                    T* ds = g_.grad_accum(s);
                    for (int j = 0; j < d; ++j) {
                        T sig = logistic(sv[j]);
                        T acc = 0;
                        for (int64_t r = 0; r < rows; ++r)
                            acc += dy[r * d + j] * xv[r * d + j];
                        ds[j] += acc * sig * (1 - sig);
                    }
                }
                if (g_.nodes_[h].requires_grad) {
                    T acc = 0;
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j) acc += dy[r * d + j] * ctx->c[r * d + j];
                    g_.grad_accum(h)[0] += acc;
                }

                // dc = h * dy;  db, dW, dg
                std::vector<T> dc(rows * d);
                for (int64_t i = 0; i < rows * d; ++i) dc[i] = hv * dy[i];
                if (g_.nodes_[b].requires_grad) {
                    T* db = g_.grad_accum(b);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j) db[j] += dc[r * d + j];
                }
                if (g_.nodes_[w_w].requires_grad)
                    gemm(true, false, dh, d, (int)rows, T(1), ctx->g.data(), dh, dc.data(),
                         d, T(1), g_.grad_accum(w_w), d);
                std::vector<T> dg(rows * dh);
                gemm(false, true, (int)rows, dh, d, T(1), dc.data(), d, g_.val(w_w), d,
                     T(0), dg.data(), dh);
                dc.clear();
                dc.shrink_to_fit();

                // through GELU and RMSNorm, recomputing the normalized input
                std::vector<T> du(rows * dh);
                bool need_dgain = g_.nodes_[gain].requires_grad;
                T* dgain = need_dgain ? g_.grad_accum(gain) : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const T* ur = ctx->u.data() + r * dh;
                    T ir = ctx->inv_rms[r];
                    T* dur = du.data() + r * dh;
                    T dot = 0;
                    for (int j = 0; j < dh; ++j) {
                        T nrm = ur[j] * ir * gainv[j];
                        T dn = dg[r * dh + j] * (normal_cdf(nrm) + nrm * normal_pdf(nrm));
                        if (need_dgain) dgain[j] += dn * ur[j] * ir;
                        dur[j] = dn * gainv[j];  // still d/d(u*ir)
                        dot += dur[j] * ur[j];
                    }
                    T c3 = ir * ir * ir * dot / dh;
                    for (int j = 0; j < dh; ++j) dur[j] = ir * dur[j] - c3 * ur[j];
                }
                dg.clear();
                dg.shrink_to_fit();

                if (g_.nodes_[z_w].requires_grad)
                    gemm(true, false, d, dh, (int)rows, T(1), xv, d, du.data(), dh, T(1),
                         g_.grad_accum(z_w), dh);
                if (g_.nodes_[x].requires_grad) {
                    T* dx = g_.grad_accum(x);
                    gemm(false, true, (int)rows, d, dh, T(1), du.data(), dh, g_.val(z_w),
                         dh, T(1), dx, d);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j)
                            dx[r * d + j] += dy[r * d + j] * logistic(sv[j]);
                }
            };
        }
        return out;
    }

    // ---- reverse pass -------------------------------------------------------

    void backward(int loss) {
        if (numel(nodes_[loss].shape) != 1)
            throw ShapeError("backward: loss must be scalar, got " +
                             shape_str(nodes_[loss].shape));
        grad_accum(loss)[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.backward) continue;
            if (!storage_[n.storage].grad_touched) continue;
            n.backward(*this);
        }
    }

    // ---- access -------------------------------------------------------------

    const Shape& shape(int id) const { return nodes_[id].shape; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    std::span<const T> value(int id) const {
        const auto& v = storage_[nodes_[id].storage].value;
        return {v.data(), v.size()};
    }

    // Gradient of a node; zeros if backward never reached it.
    std::span<const T> grad(int id) {
        return {grad_accum(id), (size_t)numel(nodes_[id].shape)};
    }

    bool grad_nonzero(int id) const { return storage_[nodes_[id].storage].grad_touched; }

    size_t node_count() const { return nodes_.size(); }

    // Math helpers shared with the optimizer and tests.
    static T logistic(T v) { return T(1) / (T(1) + std::exp(-v)); }
    static T normal_cdf(T v) {
        return T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475)));
    }
    static T normal_pdf(T v) {
        return T(0.3989422804014327) * std::exp(T(-0.5) * v * v);
    }

private:
    int alloc(Shape shape, bool requires_grad) {
        Node n;
        n.shape = std::move(shape);
        n.requires_grad = requires_grad;
        n.storage = static_cast<int>(storage_.size());
        storage_.emplace_back();
        storage_.back().value.assign(numel(n.shape), T(0));
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int alloc_like(int x) { return alloc(nodes_[x].shape, nodes_[x].requires_grad); }

    T* val(int id) { return storage_[nodes_[id].storage].value.data(); }
    const T* val(int id) const { return storage_[nodes_[id].storage].value.data(); }

    T* grad_accum(int id) {
        StorageSlot& s = storage_[nodes_[id].storage];
        if (s.grad.empty()) s.grad.assign(s.value.size(), T(0));
        s.grad_touched = true;
        return s.grad.data();
    }
    const T* val_grad(int id) {
        StorageSlot& s = storage_[nodes_[id].storage];
        if (s.grad.empty()) s.grad.assign(s.value.size(), T(0));
        return s.grad.data();
    }

    std::vector<Node> nodes_;
    std::vector<StorageSlot> storage_;
};

}  // namespace mse
