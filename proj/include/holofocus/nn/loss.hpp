#pragma once

#include "holofocus/nn/layers.hpp"

namespace holo::nn {

template <std::floating_point T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad_logits;
};

// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction. grad = (softmax - onehot) / batch.
template <std::floating_point T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeMismatch("cross_entropy expects [batch, classes]");
    const int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeMismatch("labels size does not match batch");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw LabelOutOfRange("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(k) + ")");

    LossResult<T> res;
    res.grad_logits = Tensor<T>({n, k});
    double total = 0.0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (int r = 0; r < n; ++r) {
        const T* row = logits.data.data() + static_cast<size_t>(r) * k;
        T* grow = res.grad_logits.data.data() + static_cast<size_t>(r) * k;
        T mx = row[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(row[i] - mx));
        const double log_sum = std::log(sum);
        total += log_sum - static_cast<double>(row[labels[static_cast<size_t>(r)]] - mx);
        for (int i = 0; i < k; ++i) {
            double p = std::exp(static_cast<double>(row[i] - mx)) / sum;
            grow[i] = static_cast<T>(p) * inv_n;
        }
        grow[labels[static_cast<size_t>(r)]] -= inv_n;
    }
    res.loss = total / n;
    return res;
}

template <std::floating_point T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    const int n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        const T* row = logits.data.data() + static_cast<size_t>(r) * k;
        int best = 0;
        for (int i = 1; i < k; ++i)
            if (row[i] > row[best]) best = i;
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

} // namespace holo::nn
