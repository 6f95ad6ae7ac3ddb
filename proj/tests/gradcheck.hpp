#pragma once

#include <doctest.h>

#include "holofocus/nn/layers.hpp"

// Central-difference gradient oracle at 64-bit precision. The objective is
// J = sum(forward(x) * R) for a fixed random R; analytic gradients come from
// backward(R), numeric ones from (J(v+h) - J(v-h)) / 2h per element.
namespace gradcheck {

using DTensor = holo::nn::Tensor<double>;
using DCache = holo::nn::Cache<double>;

inline double objective(const holo::nn::Layer<double>& layer, const DTensor& x,
                        const DTensor& r) {
    DCache cache;
    DTensor y = layer.forward(x, holo::nn::Mode::infer, cache);
    double s = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
}

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({1e-2, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// Returns the max relative error over input and parameter gradients.
inline double max_gradient_error(holo::nn::Layer<double>& layer, DTensor x, std::uint64_t seed,
                                 double h = 1e-5) {
    holo::Rng rng(seed);
    DCache cache;
    DTensor y = layer.forward(x, holo::nn::Mode::train, cache);
    DTensor r(y.shape);
    for (auto& v : r.data) v = rng.uniform(-1.0, 1.0);

    std::vector<holo::nn::ParamRef<double>> params;
    layer.collect_params(params);
    for (auto& p : params) p.grad->fill(0.0);
    DTensor dx = layer.backward(cache, r);

    double max_err = 0.0;

    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double jp = objective(layer, x, r);
        x[i] = keep - h;
        const double jm = objective(layer, x, r);
        x[i] = keep;
        max_err = std::max(max_err, rel_err(dx[i], (jp - jm) / (2.0 * h)));
    }

    for (auto& p : params) {
        for (std::int64_t i = 0; i < p.value->numel(); ++i) {
            const double keep = (*p.value)[i];
            (*p.value)[i] = keep + h;
            const double jp = objective(layer, x, r);
            (*p.value)[i] = keep - h;
            const double jm = objective(layer, x, r);
            (*p.value)[i] = keep;
            max_err = std::max(max_err, rel_err((*p.grad)[i], (jp - jm) / (2.0 * h)));
        }
    }
    return max_err;
}

inline DTensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    holo::Rng rng(seed);
    DTensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// keeps values away from the ReLU kink / pooling ties
inline DTensor random_tensor_separated(std::vector<int> shape, std::uint64_t seed,
                                       double margin = 5e-2) {
    holo::Rng rng(seed);
    DTensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        double v;
        do {
            v = rng.uniform(-1.0, 1.0);
        } while (std::abs(v) < margin);
        // a small index-keyed offset separates pooling candidates
        t[i] = v + 1e-3 * static_cast<double>(i % 97);
    }
    return t;
}

} // namespace gradcheck
