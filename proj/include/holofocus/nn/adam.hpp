#pragma once

#include "holofocus/nn/layers.hpp"

namespace holo::nn {

// Adam with bias-corrected moments:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <std::floating_point T>
class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<ParamRef<T>>& params) {
        if (moments_.empty()) {
            moments_.reserve(params.size());
            for (const auto& p : params)
                moments_.push_back({Tensor<T>(p.value->shape), Tensor<T>(p.value->shape)});
        }
        if (moments_.size() != params.size())
            throw ShapeMismatch("adam: parameter list changed between steps");

        ++t_;
        const T c1 = T(1) - static_cast<T>(std::pow(b1_, static_cast<double>(t_)));
        const T c2 = T(1) - static_cast<T>(std::pow(b2_, static_cast<double>(t_)));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<T>& val = *params[pi].value;
            const Tensor<T>& grad = *params[pi].grad;
            if (!val.same_shape(grad) || !val.same_shape(moments_[pi].m))
                throw ShapeMismatch("adam: shape mismatch on " + params[pi].name);
            Tensor<T>& m = moments_[pi].m;
            Tensor<T>& v = moments_[pi].v;
            for (std::int64_t i = 0; i < val.numel(); ++i) {
                const T g = grad[i];
                m[i] = static_cast<T>(b1_) * m[i] + (T(1) - static_cast<T>(b1_)) * g;
                v[i] = static_cast<T>(b2_) * v[i] + (T(1) - static_cast<T>(b2_)) * g * g;
                const T m_hat = m[i] / c1;
                const T v_hat = v[i] / c2;
                val[i] -= static_cast<T>(lr_) * m_hat / (std::sqrt(v_hat) + static_cast<T>(eps_));
            }
        }
    }

    std::int64_t step_count() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    struct Moments {
        Tensor<T> m, v;
    };
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Moments> moments_;
};

} // namespace holo::nn
