#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mse/errors.hpp"
#include "mse/shape.hpp"

namespace mse {

// Rectified Adam. During the warmup steps where the variance estimate is not
// yet rectifiable (rho_t <= 4) the update degenerates to bias-corrected
// momentum SGD; afterwards the variance-rectification term r_t kicks in.
template <typename T>
class RAdam {
public:
    RAdam() = default;
    RAdam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Allocates moment buffers matching the given parameter sizes.
    void bind(const std::vector<int64_t>& param_sizes) {
        m1_.clear();
        m2_.clear();
        for (int64_t n : param_sizes) {
            m1_.emplace_back(n, T(0));
            m2_.emplace_back(n, T(0));
        }
    }

    size_t buffer_count() const { return m1_.size(); }

    // One update over all parameter tensors. Returns false (and leaves every
    // parameter, moment buffer and the step counter untouched) when any
    // gradient entry is non-finite.
    bool step(std::span<std::vector<T>*> params, std::span<const std::vector<T>*> grads) {
        if (params.size() != m1_.size() || grads.size() != m1_.size())
            throw ShapeError("radam: bound to " + std::to_string(m1_.size()) +
                             " buffers, got " + std::to_string(params.size()) +
                             " params / " + std::to_string(grads.size()) + " grads");
        for (size_t p = 0; p < params.size(); ++p) {
            if (params[p]->size() != m1_[p].size() || grads[p]->size() != m1_[p].size())
                throw ShapeError("radam: parameter " + std::to_string(p) +
                                 " size mismatch with moment buffers");
            for (T g : *grads[p])
                if (!std::isfinite(g)) return false;
        }

        ++step_;
        const double b1t = std::pow((double)beta1_, (double)step_);
        const double b2t = std::pow((double)beta2_, (double)step_);
        const double rho_inf = 2.0 / (1.0 - (double)beta2_) - 1.0;
        const double rho_t = rho_inf - 2.0 * (double)step_ * b2t / (1.0 - b2t);
        const bool rectified = rho_t > 4.0;
        double r_t = 1.0;
        if (rectified)
            r_t = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                            ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

        for (size_t p = 0; p < params.size(); ++p) {
            T* w = params[p]->data();
            const T* g = grads[p]->data();
            T* m1 = m1_[p].data();
            T* m2 = m2_[p].data();
            const int64_t n = (int64_t)m1_[p].size();
            for (int64_t i = 0; i < n; ++i) {
                m1[i] = beta1_ * m1[i] + (1 - beta1_) * g[i];
                m2[i] = beta2_ * m2[i] + (1 - beta2_) * g[i] * g[i];
                T m_hat = m1[i] / (T)(1.0 - b1t);
                if (rectified) {
                    T v_hat = std::sqrt(m2[i] / (T)(1.0 - b2t));
                    w[i] -= lr_ * (T)r_t * m_hat / (v_hat + eps_);
                } else {
                    w[i] -= lr_ * m_hat;
                }
            }
        }
        return true;
    }

    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }
    T beta1() const { return beta1_; }
    T beta2() const { return beta2_; }
    T epsilon() const { return eps_; }

    std::vector<T>& first_moment(size_t p) { return m1_[p]; }
    std::vector<T>& second_moment(size_t p) { return m2_[p]; }

private:
    T lr_ = T(1e-4);
    T beta1_ = T(0.9);
    T beta2_ = T(0.999);
    T eps_ = T(1e-8);
    int64_t step_ = 0;
    std::vector<std::vector<T>> m1_, m2_;
};

}  // namespace mse
