#pragma once

#include <cmath>
#include <memory>

#include "holofocus/nn/tensor.hpp"

namespace holo::nn {

enum class Mode { train, infer };

// Everything a backward pass needs from the matching forward call.
// Composite layers nest their sublayers' caches in children.
template <std::floating_point T>
struct Cache {
    std::vector<Tensor<T>> saved;
    std::vector<Cache<T>> children;
};

template <std::floating_point T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <std::floating_point T>
class Layer {
public:
    explicit Layer(std::string path) : path_(std::move(path)) {}
    virtual ~Layer() = default;

    virtual const char* kind() const = 0;
    const std::string& path() const { return path_; }

    // Pure given (params, input); infer mode never touches parameters.
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache<T>& cache) const = 0;

    // Returns grad w.r.t. the input and accumulates parameter grads.
    virtual Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& grad_out) = 0;

    virtual void collect_params(std::vector<ParamRef<T>>&) {}

protected:
    void require_cached(const Cache<T>& cache, size_t n) const {
        if (cache.saved.size() < n)
            throw StaleCache(path_ + ": cache does not match this layer's forward");
    }

private:
    std::string path_;
};

// ---- initializers ------------------------------------------------------

template <std::floating_point T>
void init_he_normal(Tensor<T>& w, int fan_in, Rng& rng) {
    const double s = std::sqrt(2.0 / fan_in);
    for (auto& v : w.data) v = static_cast<T>(rng.normal() * s);
}

template <std::floating_point T>
void init_xavier_uniform(Tensor<T>& w, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-a, a));
}

// ---- residual_add ------------------------------------------------------

template <std::floating_point T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch("residual_add: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor<T> out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

// grad_out flows unchanged to both branches
template <std::floating_point T>
std::pair<Tensor<T>, Tensor<T>> residual_add_backward(const Tensor<T>& grad_out) {
    return {grad_out, grad_out};
}

// ---- conv2d ------------------------------------------------------------

// Zero-padded 2-D convolution on NCHW tensors, square odd kernel.
template <std::floating_point T>
class Conv2d : public Layer<T> {
public:
    Conv2d(std::string path, int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng)
        : Layer<T>(std::move(path)),
          in_ch_(in_ch),
          out_ch_(out_ch),
          k_(kernel),
          stride_(stride),
          pad_(pad),
          weight_(Tensor<T>({out_ch, in_ch, kernel, kernel})),
          bias_(Tensor<T>({out_ch})),
          grad_weight_(Tensor<T>({out_ch, in_ch, kernel, kernel})),
          grad_bias_(Tensor<T>({out_ch})) {
        if (kernel < 1 || stride < 1) throw InvalidConfig("conv2d kernel/stride must be >= 1");
        init_he_normal(weight_, in_ch * kernel * kernel, rng);
    }

    const char* kind() const override { return "conv2d"; }

    std::pair<int, int> out_hw(int h, int w) const {
        return {(h + 2 * pad_ - k_) / stride_ + 1, (w + 2 * pad_ - k_) / stride_ + 1};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 4 || x.dim(1) != in_ch_)
            throw ShapeMismatch(this->path() + ": expected [N, " + std::to_string(in_ch_) +
                                ", H, W], got " + shape_str(x.shape));
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        auto [ho, wo] = out_hw(h, w);
        if (ho < 1 || wo < 1)
            throw ShapeMismatch(this->path() + ": output collapses below 1x1 for input " +
                                shape_str(x.shape));
        Tensor<T> y({n, out_ch_, ho, wo});
        parallel_for(static_cast<std::int64_t>(n) * out_ch_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                const int ni = static_cast<int>(i) / out_ch_;
                const int oc = static_cast<int>(i) % out_ch_;
                const T* wbase = weight_.data.data() +
                                 static_cast<size_t>(oc) * in_ch_ * k_ * k_;
                T* ybase = y.data.data() +
                           (static_cast<size_t>(ni) * out_ch_ + oc) * ho * wo;
                for (int yo = 0; yo < ho; ++yo) {
                    for (int xo = 0; xo < wo; ++xo) {
                        T acc = bias_[oc];
                        for (int ic = 0; ic < in_ch_; ++ic) {
                            const T* xbase = x.data.data() +
                                             (static_cast<size_t>(ni) * in_ch_ + ic) * h * w;
                            const T* wk = wbase + static_cast<size_t>(ic) * k_ * k_;
                            for (int ky = 0; ky < k_; ++ky) {
                                const int yi = yo * stride_ - pad_ + ky;
                                if (yi < 0 || yi >= h) continue;
                                for (int kx = 0; kx < k_; ++kx) {
                                    const int xi = xo * stride_ - pad_ + kx;
                                    if (xi < 0 || xi >= w) continue;
                                    acc += xbase[static_cast<size_t>(yi) * w + xi] *
                                           wk[static_cast<size_t>(ky) * k_ + kx];
                                }
                            }
                        }
                        ybase[static_cast<size_t>(yo) * wo + xo] = acc;
                    }
                }
            }
        });
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        auto [ho, wo] = out_hw(h, w);
        check_shape(dy, {n, out_ch_, ho, wo}, "conv2d backward");

        // dW / db: one output channel per task keeps writes disjoint.
        parallel_for(out_ch_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t oc = b; oc < e; ++oc) {
                T dbias = 0;
                T* dwbase = grad_weight_.data.data() +
                            static_cast<size_t>(oc) * in_ch_ * k_ * k_;
                for (int ni = 0; ni < n; ++ni) {
                    const T* dybase = dy.data.data() +
                                      (static_cast<size_t>(ni) * out_ch_ + oc) * ho * wo;
                    for (int yo = 0; yo < ho; ++yo) {
                        for (int xo = 0; xo < wo; ++xo) {
                            const T g = dybase[static_cast<size_t>(yo) * wo + xo];
                            if (g == T(0)) continue;
                            dbias += g;
                            for (int ic = 0; ic < in_ch_; ++ic) {
                                const T* xbase = x.data.data() +
                                                 (static_cast<size_t>(ni) * in_ch_ + ic) * h * w;
                                T* dwk = dwbase + static_cast<size_t>(ic) * k_ * k_;
                                for (int ky = 0; ky < k_; ++ky) {
                                    const int yi = yo * stride_ - pad_ + ky;
                                    if (yi < 0 || yi >= h) continue;
                                    for (int kx = 0; kx < k_; ++kx) {
                                        const int xi = xo * stride_ - pad_ + kx;
                                        if (xi < 0 || xi >= w) continue;
                                        dwk[static_cast<size_t>(ky) * k_ + kx] +=
                                            g * xbase[static_cast<size_t>(yi) * w + xi];
                                    }
                                }
                            }
                        }
                    }
                }
                grad_bias_[oc] += dbias;
            }
        });

        Tensor<T> dx({n, in_ch_, h, w});
        parallel_for(static_cast<std::int64_t>(n) * in_ch_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                const int ni = static_cast<int>(i) / in_ch_;
                const int ic = static_cast<int>(i) % in_ch_;
                T* dxbase = dx.data.data() + (static_cast<size_t>(ni) * in_ch_ + ic) * h * w;
                for (int oc = 0; oc < out_ch_; ++oc) {
                    const T* dybase = dy.data.data() +
                                      (static_cast<size_t>(ni) * out_ch_ + oc) * ho * wo;
                    const T* wk = weight_.data.data() +
                                  (static_cast<size_t>(oc) * in_ch_ + ic) * k_ * k_;
                    for (int yo = 0; yo < ho; ++yo) {
                        for (int xo = 0; xo < wo; ++xo) {
                            const T g = dybase[static_cast<size_t>(yo) * wo + xo];
                            if (g == T(0)) continue;
                            for (int ky = 0; ky < k_; ++ky) {
                                const int yi = yo * stride_ - pad_ + ky;
                                if (yi < 0 || yi >= h) continue;
                                for (int kx = 0; kx < k_; ++kx) {
                                    const int xi = xo * stride_ - pad_ + kx;
                                    if (xi < 0 || xi >= w) continue;
                                    dxbase[static_cast<size_t>(yi) * w + xi] +=
                                        g * wk[static_cast<size_t>(ky) * k_ + kx];
                                }
                            }
                        }
                    }
                }
            }
        });
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".weight", &weight_, &grad_weight_});
        out.push_back({this->path() + ".bias", &bias_, &grad_bias_});
    }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }
    int out_channels() const { return out_ch_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
};

// ---- elementwise activations -------------------------------------------

template <std::floating_point T>
class Relu : public Layer<T> {
public:
    using Layer<T>::Layer;
    const char* kind() const override { return "relu"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        Tensor<T> y = x;
        for (auto& v : y.data) v = v > T(0) ? v : T(0);
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        if (!x.same_shape(dy)) throw StaleCache(this->path() + ": grad shape mismatch");
        Tensor<T> dx = dy;
        for (std::int64_t i = 0; i < dx.numel(); ++i)
            if (x[i] <= T(0)) dx[i] = T(0);
        return dx;
    }
};

// Exact GELU, x * Phi(x).
template <std::floating_point T>
class Gelu : public Layer<T> {
public:
    using Layer<T>::Layer;
    const char* kind() const override { return "gelu"; }

    static T phi_cdf(T x) { return T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440))); }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        Tensor<T> y = x;
        for (auto& v : y.data) v = v * phi_cdf(v);
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        if (!x.same_shape(dy)) throw StaleCache(this->path() + ": grad shape mismatch");
        constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
        Tensor<T> dx = dy;
        for (std::int64_t i = 0; i < dx.numel(); ++i) {
            const T v = x[i];
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            dx[i] *= phi_cdf(v) + v * pdf;
        }
        return dx;
    }
};

// ---- pooling -----------------------------------------------------------

// 2x2 max pooling with stride 2; ties route the gradient to the first
// maximum in scan order.
template <std::floating_point T>
class MaxPool2 : public Layer<T> {
public:
    using Layer<T>::Layer;
    const char* kind() const override { return "maxpool2"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2)
            throw ShapeMismatch(this->path() + ": expects NCHW with H,W >= 2, got " +
                                shape_str(x.shape));
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = h / 2, wo = w / 2;
        Tensor<T> y({n, c, ho, wo});
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
            const T* xb = x.data.data() + static_cast<size_t>(p) * h * w;
            T* yb = y.data.data() + static_cast<size_t>(p) * ho * wo;
            for (int r = 0; r < ho; ++r)
                for (int q = 0; q < wo; ++q) {
                    const T a = xb[static_cast<size_t>(2 * r) * w + 2 * q];
                    const T b2 = xb[static_cast<size_t>(2 * r) * w + 2 * q + 1];
                    const T d = xb[static_cast<size_t>(2 * r + 1) * w + 2 * q];
                    const T e = xb[static_cast<size_t>(2 * r + 1) * w + 2 * q + 1];
                    yb[static_cast<size_t>(r) * wo + q] = std::max(std::max(a, b2), std::max(d, e));
                }
        }
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = h / 2, wo = w / 2;
        check_shape(dy, {n, c, ho, wo}, "maxpool2 backward");
        Tensor<T> dx({n, c, h, w});
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
            const T* xb = x.data.data() + static_cast<size_t>(p) * h * w;
            const T* gyb = dy.data.data() + static_cast<size_t>(p) * ho * wo;
            T* gxb = dx.data.data() + static_cast<size_t>(p) * h * w;
            for (int r = 0; r < ho; ++r)
                for (int q = 0; q < wo; ++q) {
                    int br = 2 * r, bq = 2 * q;
                    T best = xb[static_cast<size_t>(br) * w + bq];
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dq = 0; dq < 2; ++dq) {
                            const T v = xb[static_cast<size_t>(2 * r + dr) * w + 2 * q + dq];
                            if (v > best) {
                                best = v;
                                br = 2 * r + dr;
                                bq = 2 * q + dq;
                            }
                        }
                    gxb[static_cast<size_t>(br) * w + bq] += gyb[static_cast<size_t>(r) * wo + q];
                }
        }
        return dx;
    }
};

template <std::floating_point T>
class GlobalAvgPool : public Layer<T> {
public:
    using Layer<T>::Layer;
    const char* kind() const override { return "global_avg_pool"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 4) throw ShapeMismatch(this->path() + ": expects NCHW");
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({n, c});
        const T inv = T(1) / static_cast<T>(h * w);
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
            const T* xb = x.data.data() + static_cast<size_t>(p) * h * w;
            T acc = 0;
            for (int i = 0; i < h * w; ++i) acc += xb[i];
            y[p] = acc * inv;
        }
        cache.saved = {Tensor<T>({4}, {static_cast<T>(n), static_cast<T>(c), static_cast<T>(h),
                                       static_cast<T>(w)})};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const auto& dims = cache.saved[0];
        const int n = static_cast<int>(dims[0]), c = static_cast<int>(dims[1]),
                  h = static_cast<int>(dims[2]), w = static_cast<int>(dims[3]);
        check_shape(dy, {n, c}, "global_avg_pool backward");
        Tensor<T> dx({n, c, h, w});
        const T inv = T(1) / static_cast<T>(h * w);
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
            const T g = dy[p] * inv;
            T* xb = dx.data.data() + static_cast<size_t>(p) * h * w;
            for (int i = 0; i < h * w; ++i) xb[i] = g;
        }
        return dx;
    }
};

// ---- dense -------------------------------------------------------------

// Affine map on the last dimension; leading dimensions are folded.
template <std::floating_point T>
class Dense : public Layer<T> {
public:
    Dense(std::string path, int in_dim, int out_dim, Rng& rng, bool xavier = false)
        : Layer<T>(std::move(path)),
          in_(in_dim),
          out_(out_dim),
          weight_(Tensor<T>({out_dim, in_dim})),
          bias_(Tensor<T>({out_dim})),
          grad_weight_(Tensor<T>({out_dim, in_dim})),
          grad_bias_(Tensor<T>({out_dim})) {
        if (xavier)
            init_xavier_uniform(weight_, in_dim, out_dim, rng);
        else
            init_he_normal(weight_, in_dim, rng);
    }

    const char* kind() const override { return "dense"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() < 2 || x.shape.back() != in_)
            throw ShapeMismatch(this->path() + ": expected [..., " + std::to_string(in_) +
                                "], got " + shape_str(x.shape));
        const std::int64_t m = x.numel() / in_;
        std::vector<int> yshape = x.shape;
        yshape.back() = out_;
        Tensor<T> y(yshape);
        parallel_for(m, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t r = b; r < e; ++r) {
                const T* xr = x.data.data() + static_cast<size_t>(r) * in_;
                T* yr = y.data.data() + static_cast<size_t>(r) * out_;
                for (int o = 0; o < out_; ++o) {
                    const T* wr = weight_.data.data() + static_cast<size_t>(o) * in_;
                    T acc = bias_[o];
                    for (int i = 0; i < in_; ++i) acc += xr[i] * wr[i];
                    yr[o] = acc;
                }
            }
        });
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        const std::int64_t m = x.numel() / in_;
        if (dy.numel() != m * out_ || dy.shape.back() != out_)
            throw StaleCache(this->path() + ": grad shape mismatch");

        parallel_for(out_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t o = b; o < e; ++o) {
                T* dw = grad_weight_.data.data() + static_cast<size_t>(o) * in_;
                T db = 0;
                for (std::int64_t r = 0; r < m; ++r) {
                    const T g = dy.data[static_cast<size_t>(r) * out_ + o];
                    if (g == T(0)) continue;
                    db += g;
                    const T* xr = x.data.data() + static_cast<size_t>(r) * in_;
                    for (int i = 0; i < in_; ++i) dw[i] += g * xr[i];
                }
                grad_bias_[o] += db;
            }
        });

        Tensor<T> dx(x.shape);
        parallel_for(m, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t r = b; r < e; ++r) {
                const T* gy = dy.data.data() + static_cast<size_t>(r) * out_;
                T* gx = dx.data.data() + static_cast<size_t>(r) * in_;
                for (int o = 0; o < out_; ++o) {
                    const T g = gy[o];
                    if (g == T(0)) continue;
                    const T* wr = weight_.data.data() + static_cast<size_t>(o) * in_;
                    for (int i = 0; i < in_; ++i) gx[i] += g * wr[i];
                }
            }
        });
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".weight", &weight_, &grad_weight_});
        out.push_back({this->path() + ".bias", &bias_, &grad_bias_});
    }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

private:
    int in_, out_;
    Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
};

// ---- layer norm --------------------------------------------------------

template <std::floating_point T>
class LayerNorm : public Layer<T> {
public:
    LayerNorm(std::string path, int dim)
        : Layer<T>(std::move(path)),
          dim_(dim),
          gamma_(Tensor<T>::full({dim}, T(1))),
          beta_(Tensor<T>({dim})),
          grad_gamma_(Tensor<T>({dim})),
          grad_beta_(Tensor<T>({dim})) {}

    const char* kind() const override { return "layer_norm"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() < 1 || x.shape.back() != dim_)
            throw ShapeMismatch(this->path() + ": expected [..., " + std::to_string(dim_) + "]");
        const std::int64_t m = x.numel() / dim_;
        Tensor<T> xhat(x.shape);
        Tensor<T> inv_std({static_cast<int>(m)});
        Tensor<T> y(x.shape);
        for (std::int64_t r = 0; r < m; ++r) {
            const T* xr = x.data.data() + static_cast<size_t>(r) * dim_;
            T mu = 0;
            for (int i = 0; i < dim_; ++i) mu += xr[i];
            mu /= static_cast<T>(dim_);
            T var = 0;
            for (int i = 0; i < dim_; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= static_cast<T>(dim_);
            const T istd = T(1) / std::sqrt(var + T(1e-5));
            inv_std[r] = istd;
            T* hr = xhat.data.data() + static_cast<size_t>(r) * dim_;
            T* yr = y.data.data() + static_cast<size_t>(r) * dim_;
            for (int i = 0; i < dim_; ++i) {
                hr[i] = (xr[i] - mu) * istd;
                yr[i] = gamma_[i] * hr[i] + beta_[i];
            }
        }
        cache.saved = {xhat, inv_std};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 2);
        const Tensor<T>& xhat = cache.saved[0];
        const Tensor<T>& inv_std = cache.saved[1];
        if (!xhat.same_shape(dy)) throw StaleCache(this->path() + ": grad shape mismatch");
        const std::int64_t m = xhat.numel() / dim_;
        Tensor<T> dx(xhat.shape);
        for (std::int64_t r = 0; r < m; ++r) {
            const T* hr = xhat.data.data() + static_cast<size_t>(r) * dim_;
            const T* gy = dy.data.data() + static_cast<size_t>(r) * dim_;
            T* gx = dx.data.data() + static_cast<size_t>(r) * dim_;
            T sum_g = 0, sum_gh = 0;
            for (int i = 0; i < dim_; ++i) {
                const T g = gy[i] * gamma_[i];
                sum_g += g;
                sum_gh += g * hr[i];
                grad_gamma_[i] += gy[i] * hr[i];
                grad_beta_[i] += gy[i];
            }
            const T inv_d = T(1) / static_cast<T>(dim_);
            for (int i = 0; i < dim_; ++i) {
                const T g = gy[i] * gamma_[i];
                gx[i] = inv_std[r] * (g - sum_g * inv_d - hr[i] * sum_gh * inv_d);
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".gamma", &gamma_, &grad_gamma_});
        out.push_back({this->path() + ".beta", &beta_, &grad_beta_});
    }

private:
    int dim_;
    Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_;
};

// ---- softmax -----------------------------------------------------------

template <std::floating_point T>
void softmax_rows_inplace(T* data, std::int64_t rows, int cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        T* row = data + static_cast<size_t>(r) * cols;
        T mx = row[0];
        for (int i = 1; i < cols; ++i) mx = std::max(mx, row[i]);
        T sum = 0;
        for (int i = 0; i < cols; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        const T inv = T(1) / sum;
        for (int i = 0; i < cols; ++i) row[i] *= inv;
    }
}

template <std::floating_point T>
class Softmax : public Layer<T> {
public:
    using Layer<T>::Layer;
    const char* kind() const override { return "softmax"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() < 1) throw ShapeMismatch(this->path() + ": scalar input");
        Tensor<T> y = x;
        const int d = x.shape.back();
        softmax_rows_inplace(y.data.data(), y.numel() / d, d);
        cache.saved = {y};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& y = cache.saved[0];
        if (!y.same_shape(dy)) throw StaleCache(this->path() + ": grad shape mismatch");
        const int d = y.shape.back();
        const std::int64_t m = y.numel() / d;
        Tensor<T> dx(y.shape);
        for (std::int64_t r = 0; r < m; ++r) {
            const T* yr = y.data.data() + static_cast<size_t>(r) * d;
            const T* gy = dy.data.data() + static_cast<size_t>(r) * d;
            T* gx = dx.data.data() + static_cast<size_t>(r) * d;
            T dot = 0;
            for (int i = 0; i < d; ++i) dot += gy[i] * yr[i];
            for (int i = 0; i < d; ++i) gx[i] = (gy[i] - dot) * yr[i];
        }
        return dx;
    }
};

// ---- ViT pieces --------------------------------------------------------

// Non-overlapping PxP patches projected to an embedding, row-major patch
// order: [N, C, H, W] -> [N, (H/P)*(W/P), dim].
template <std::floating_point T>
class PatchEmbed : public Layer<T> {
public:
    PatchEmbed(std::string path, int in_ch, int patch, int dim, Rng& rng)
        : Layer<T>(std::move(path)),
          in_ch_(in_ch),
          patch_(patch),
          dim_(dim),
          weight_(Tensor<T>({dim, in_ch * patch * patch})),
          bias_(Tensor<T>({dim})),
          grad_weight_(Tensor<T>({dim, in_ch * patch * patch})),
          grad_bias_(Tensor<T>({dim})) {
        init_xavier_uniform(weight_, in_ch * patch * patch, dim, rng);
    }

    const char* kind() const override { return "patch_embed"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 4 || x.dim(1) != in_ch_ || x.dim(2) % patch_ != 0 ||
            x.dim(3) % patch_ != 0)
            throw ShapeMismatch(this->path() + ": input " + shape_str(x.shape) +
                                " not divisible into " + std::to_string(patch_) + "x" +
                                std::to_string(patch_) + " patches");
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int gy = h / patch_, gx = w / patch_, tokens = gy * gx;
        const int pv = in_ch_ * patch_ * patch_;
        Tensor<T> y({n, tokens, dim_});
        parallel_for(static_cast<std::int64_t>(n) * tokens, [&](std::int64_t b, std::int64_t e) {
            std::vector<T> vec(static_cast<size_t>(pv));
            for (std::int64_t i = b; i < e; ++i) {
                const int ni = static_cast<int>(i) / tokens;
                const int t = static_cast<int>(i) % tokens;
                gather_patch(x, ni, t, gx, vec.data());
                T* yr = y.data.data() + static_cast<size_t>(i) * dim_;
                for (int o = 0; o < dim_; ++o) {
                    const T* wr = weight_.data.data() + static_cast<size_t>(o) * pv;
                    T acc = bias_[o];
                    for (int j = 0; j < pv; ++j) acc += vec[static_cast<size_t>(j)] * wr[j];
                    yr[o] = acc;
                }
            }
        });
        cache.saved = {x};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const Tensor<T>& x = cache.saved[0];
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int gy = h / patch_, gx = w / patch_, tokens = gy * gx;
        const int pv = in_ch_ * patch_ * patch_;
        check_shape(dy, {n, tokens, dim_}, "patch_embed backward");

        std::vector<T> vec(static_cast<size_t>(pv));
        for (int ni = 0; ni < n; ++ni) {
            for (int t = 0; t < tokens; ++t) {
                gather_patch(x, ni, t, gx, vec.data());
                const T* gy_row =
                    dy.data.data() + (static_cast<size_t>(ni) * tokens + t) * dim_;
                for (int o = 0; o < dim_; ++o) {
                    const T g = gy_row[o];
                    if (g == T(0)) continue;
                    grad_bias_[o] += g;
                    T* dw = grad_weight_.data.data() + static_cast<size_t>(o) * pv;
                    for (int j = 0; j < pv; ++j) dw[j] += g * vec[static_cast<size_t>(j)];
                }
            }
        }

        Tensor<T> dx(x.shape);
        for (int ni = 0; ni < n; ++ni) {
            for (int t = 0; t < tokens; ++t) {
                const T* gy_row =
                    dy.data.data() + (static_cast<size_t>(ni) * tokens + t) * dim_;
                std::fill(vec.begin(), vec.end(), T(0));
                for (int o = 0; o < dim_; ++o) {
                    const T g = gy_row[o];
                    if (g == T(0)) continue;
                    const T* wr = weight_.data.data() + static_cast<size_t>(o) * pv;
                    for (int j = 0; j < pv; ++j) vec[static_cast<size_t>(j)] += g * wr[j];
                }
                scatter_patch(dx, ni, t, gx, vec.data());
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".weight", &weight_, &grad_weight_});
        out.push_back({this->path() + ".bias", &bias_, &grad_bias_});
    }

private:
    void gather_patch(const Tensor<T>& x, int n, int t, int gx, T* vec) const {
        const int h = x.dim(2), w = x.dim(3);
        const int py = (t / gx) * patch_, px = (t % gx) * patch_;
        int j = 0;
        for (int c = 0; c < in_ch_; ++c) {
            const T* xb = x.data.data() + (static_cast<size_t>(n) * in_ch_ + c) * h * w;
            for (int r = 0; r < patch_; ++r)
                for (int q = 0; q < patch_; ++q)
                    vec[j++] = xb[static_cast<size_t>(py + r) * w + px + q];
        }
    }

    void scatter_patch(Tensor<T>& dx, int n, int t, int gx, const T* vec) const {
        const int h = dx.dim(2), w = dx.dim(3);
        const int py = (t / gx) * patch_, px = (t % gx) * patch_;
        int j = 0;
        for (int c = 0; c < in_ch_; ++c) {
            T* xb = dx.data.data() + (static_cast<size_t>(n) * in_ch_ + c) * h * w;
            for (int r = 0; r < patch_; ++r)
                for (int q = 0; q < patch_; ++q)
                    xb[static_cast<size_t>(py + r) * w + px + q] += vec[j++];
        }
    }

    int in_ch_, patch_, dim_;
    Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
};

// Learnable additive position table, zero-initialized.
template <std::floating_point T>
class PositionalEmbed : public Layer<T> {
public:
    PositionalEmbed(std::string path, int tokens, int dim)
        : Layer<T>(std::move(path)),
          tokens_(tokens),
          dim_(dim),
          table_(Tensor<T>({tokens, dim})),
          grad_table_(Tensor<T>({tokens, dim})) {}

    const char* kind() const override { return "positional_embed"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        check_rank3(x);
        Tensor<T> y = x;
        const int n = x.dim(0);
        for (int ni = 0; ni < n; ++ni) {
            T* yb = y.data.data() + static_cast<size_t>(ni) * tokens_ * dim_;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(tokens_) * dim_; ++i)
                yb[i] += table_[i];
        }
        cache.saved = {Tensor<T>({1}, {static_cast<T>(n)})};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        check_rank3(dy);
        const int n = dy.dim(0);
        for (int ni = 0; ni < n; ++ni) {
            const T* gb = dy.data.data() + static_cast<size_t>(ni) * tokens_ * dim_;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(tokens_) * dim_; ++i)
                grad_table_[i] += gb[i];
        }
        return dy;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".table", &table_, &grad_table_});
    }

    Tensor<T>& table() { return table_; }

private:
    void check_rank3(const Tensor<T>& x) const {
        if (x.rank() != 3 || x.dim(1) != tokens_ || x.dim(2) != dim_)
            throw ShapeMismatch(this->path() + ": expected [N, " + std::to_string(tokens_) + ", " +
                                std::to_string(dim_) + "], got " + shape_str(x.shape));
    }

    int tokens_, dim_;
    Tensor<T> table_, grad_table_;
};

// Prepends one learnable token: [N, T, D] -> [N, T+1, D].
template <std::floating_point T>
class ClassToken : public Layer<T> {
public:
    ClassToken(std::string path, int dim, Rng& rng)
        : Layer<T>(std::move(path)), dim_(dim), token_(Tensor<T>({dim})),
          grad_token_(Tensor<T>({dim})) {
        for (auto& v : token_.data) v = static_cast<T>(rng.normal() * 0.02);
    }

    const char* kind() const override { return "class_token"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 3 || x.dim(2) != dim_)
            throw ShapeMismatch(this->path() + ": expected [N, T, " + std::to_string(dim_) + "]");
        const int n = x.dim(0), t = x.dim(1);
        Tensor<T> y({n, t + 1, dim_});
        for (int ni = 0; ni < n; ++ni) {
            T* yb = y.data.data() + static_cast<size_t>(ni) * (t + 1) * dim_;
            for (int d = 0; d < dim_; ++d) yb[d] = token_[d];
            const T* xb = x.data.data() + static_cast<size_t>(ni) * t * dim_;
            std::copy(xb, xb + static_cast<size_t>(t) * dim_, yb + dim_);
        }
        cache.saved = {Tensor<T>({2}, {static_cast<T>(n), static_cast<T>(t)})};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const int n = static_cast<int>(cache.saved[0][0]);
        const int t = static_cast<int>(cache.saved[0][1]);
        check_shape(dy, {n, t + 1, dim_}, "class_token backward");
        Tensor<T> dx({n, t, dim_});
        for (int ni = 0; ni < n; ++ni) {
            const T* gb = dy.data.data() + static_cast<size_t>(ni) * (t + 1) * dim_;
            for (int d = 0; d < dim_; ++d) grad_token_[d] += gb[d];
            T* xb = dx.data.data() + static_cast<size_t>(ni) * t * dim_;
            std::copy(gb + dim_, gb + static_cast<size_t>(t + 1) * dim_, xb);
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".token", &token_, &grad_token_});
    }

private:
    int dim_;
    Tensor<T> token_, grad_token_;
};

// Picks one token out of the sequence: [N, T, D] -> [N, D].
template <std::floating_point T>
class TokenSelect : public Layer<T> {
public:
    TokenSelect(std::string path, int index) : Layer<T>(std::move(path)), index_(index) {}

    const char* kind() const override { return "token_select"; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 3 || index_ >= x.dim(1))
            throw ShapeMismatch(this->path() + ": token index out of range for " +
                                shape_str(x.shape));
        const int n = x.dim(0), t = x.dim(1), d = x.dim(2);
        Tensor<T> y({n, d});
        for (int ni = 0; ni < n; ++ni) {
            const T* xb = x.data.data() + (static_cast<size_t>(ni) * t + index_) * d;
            std::copy(xb, xb + d, y.data.data() + static_cast<size_t>(ni) * d);
        }
        cache.saved = {Tensor<T>({3}, {static_cast<T>(n), static_cast<T>(t), static_cast<T>(d)})};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 1);
        const int n = static_cast<int>(cache.saved[0][0]);
        const int t = static_cast<int>(cache.saved[0][1]);
        const int d = static_cast<int>(cache.saved[0][2]);
        check_shape(dy, {n, d}, "token_select backward");
        Tensor<T> dx({n, t, d});
        for (int ni = 0; ni < n; ++ni) {
            const T* gb = dy.data.data() + static_cast<size_t>(ni) * d;
            std::copy(gb, gb + d, dx.data.data() + (static_cast<size_t>(ni) * t + index_) * d);
        }
        return dx;
    }

private:
    int index_;
};

// ---- multi-head self-attention ------------------------------------------

template <std::floating_point T>
class MultiHeadSelfAttention : public Layer<T> {
public:
    MultiHeadSelfAttention(std::string path, int dim, int heads, Rng& rng)
        : Layer<T>(std::move(path)), dim_(dim), heads_(heads) {
        if (dim % heads != 0)
            throw InvalidConfig(this->path() + ": dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
        head_dim_ = dim / heads;
        for (auto* w : {&wq_, &wk_, &wv_, &wo_}) {
            *w = Tensor<T>({dim, dim});
            init_xavier_uniform(*w, dim, dim, rng);
        }
        for (auto* b : {&bq_, &bk_, &bv_, &bo_}) *b = Tensor<T>({dim});
        for (auto* g : {&gwq_, &gwk_, &gwv_, &gwo_}) *g = Tensor<T>({dim, dim});
        for (auto* g : {&gbq_, &gbk_, &gbv_, &gbo_}) *g = Tensor<T>({dim});
    }

    const char* kind() const override { return "multi_head_self_attention"; }

    int heads() const { return heads_; }

    Tensor<T> forward(const Tensor<T>& x, Mode, Cache<T>& cache) const override {
        if (x.rank() != 3 || x.dim(2) != dim_)
            throw ShapeMismatch(this->path() + ": expected [N, T, " + std::to_string(dim_) +
                                "], got " + shape_str(x.shape));
        const int n = x.dim(0), t = x.dim(1);

        Tensor<T> q = project(x, wq_, bq_);
        Tensor<T> k = project(x, wk_, bk_);
        Tensor<T> v = project(x, wv_, bv_);

        // A[n,h,t,u] = softmax_u(q . k / sqrt(head_dim))
        Tensor<T> attn({n, heads_, t, t});
        const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));
        parallel_for(static_cast<std::int64_t>(n) * heads_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                const int ni = static_cast<int>(i) / heads_;
                const int h = static_cast<int>(i) % heads_;
                T* ab = attn.data.data() + static_cast<size_t>(i) * t * t;
                for (int r = 0; r < t; ++r) {
                    const T* qr = q.data.data() +
                                  (static_cast<size_t>(ni) * t + r) * dim_ + h * head_dim_;
                    for (int u = 0; u < t; ++u) {
                        const T* ku = k.data.data() +
                                      (static_cast<size_t>(ni) * t + u) * dim_ + h * head_dim_;
                        T acc = 0;
                        for (int d = 0; d < head_dim_; ++d) acc += qr[d] * ku[d];
                        ab[static_cast<size_t>(r) * t + u] = acc * scale;
                    }
                }
                softmax_rows_inplace(ab, t, t);
            }
        });

        // concat over heads of A.V
        Tensor<T> mixed({n, t, dim_});
        parallel_for(static_cast<std::int64_t>(n) * heads_, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                const int ni = static_cast<int>(i) / heads_;
                const int h = static_cast<int>(i) % heads_;
                const T* ab = attn.data.data() + static_cast<size_t>(i) * t * t;
                for (int r = 0; r < t; ++r) {
                    T* mr = mixed.data.data() +
                            (static_cast<size_t>(ni) * t + r) * dim_ + h * head_dim_;
                    for (int d = 0; d < head_dim_; ++d) {
                        T acc = 0;
                        for (int u = 0; u < t; ++u)
                            acc += ab[static_cast<size_t>(r) * t + u] *
                                   v.data[(static_cast<size_t>(ni) * t + u) * dim_ +
                                          h * head_dim_ + d];
                        mr[d] = acc;
                    }
                }
            }
        });

        Tensor<T> y = project(mixed, wo_, bo_);
        cache.saved = {x, q, k, v, attn, mixed};
        return y;
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        this->require_cached(cache, 6);
        const Tensor<T>& x = cache.saved[0];
        const Tensor<T>& q = cache.saved[1];
        const Tensor<T>& k = cache.saved[2];
        const Tensor<T>& v = cache.saved[3];
        const Tensor<T>& attn = cache.saved[4];
        const Tensor<T>& mixed = cache.saved[5];
        if (!x.same_shape(dy)) throw StaleCache(this->path() + ": grad shape mismatch");
        const int n = x.dim(0), t = x.dim(1);
        const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));

        Tensor<T> dmixed = project_backward(mixed, dy, wo_, gwo_, gbo_);

        Tensor<T> dq(q.shape), dk(k.shape), dv(v.shape);
        parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t b, std::int64_t e) {
            std::vector<T> da(static_cast<size_t>(t) * t);
            for (std::int64_t ni = b; ni < e; ++ni) {
                for (int h = 0; h < heads_; ++h) {
                    const T* ab = attn.data.data() +
                                  (static_cast<size_t>(ni) * heads_ + h) * t * t;
                    // dA = dmixed . V^T, then softmax backward rows
                    for (int r = 0; r < t; ++r) {
                        const T* gm = dmixed.data.data() +
                                      (static_cast<size_t>(ni) * t + r) * dim_ + h * head_dim_;
                        for (int u = 0; u < t; ++u) {
                            const T* vu = v.data.data() +
                                          (static_cast<size_t>(ni) * t + u) * dim_ + h * head_dim_;
                            T acc = 0;
                            for (int d = 0; d < head_dim_; ++d) acc += gm[d] * vu[d];
                            da[static_cast<size_t>(r) * t + u] = acc;
                        }
                    }
                    // dV = A^T . dmixed
                    for (int u = 0; u < t; ++u) {
                        T* gv = dv.data.data() +
                                (static_cast<size_t>(ni) * t + u) * dim_ + h * head_dim_;
                        for (int d = 0; d < head_dim_; ++d) {
                            T acc = 0;
                            for (int r = 0; r < t; ++r)
                                acc += ab[static_cast<size_t>(r) * t + u] *
                                       dmixed.data[(static_cast<size_t>(ni) * t + r) * dim_ +
                                                   h * head_dim_ + d];
                            gv[d] = acc;
                        }
                    }
                    // dS = (dA - rowdot(dA, A)) * A, scaled
                    for (int r = 0; r < t; ++r) {
                        const T* ar = ab + static_cast<size_t>(r) * t;
                        T* dar = da.data() + static_cast<size_t>(r) * t;
                        T dot = 0;
                        for (int u = 0; u < t; ++u) dot += dar[u] * ar[u];
                        for (int u = 0; u < t; ++u) dar[u] = (dar[u] - dot) * ar[u] * scale;
                    }
                    // dQ = dS . K ; dK = dS^T . Q
                    for (int r = 0; r < t; ++r) {
                        T* gq = dq.data.data() +
                                (static_cast<size_t>(ni) * t + r) * dim_ + h * head_dim_;
                        const T* dar = da.data() + static_cast<size_t>(r) * t;
                        for (int d = 0; d < head_dim_; ++d) {
                            T acc = 0;
                            for (int u = 0; u < t; ++u)
                                acc += dar[u] * k.data[(static_cast<size_t>(ni) * t + u) * dim_ +
                                                       h * head_dim_ + d];
                            gq[d] = acc;
                        }
                    }
                    for (int u = 0; u < t; ++u) {
                        T* gk = dk.data.data() +
                                (static_cast<size_t>(ni) * t + u) * dim_ + h * head_dim_;
                        for (int d = 0; d < head_dim_; ++d) {
                            T acc = 0;
                            for (int r = 0; r < t; ++r)
                                acc += da[static_cast<size_t>(r) * t + u] *
                                       q.data[(static_cast<size_t>(ni) * t + r) * dim_ +
                                              h * head_dim_ + d];
                            gk[d] = acc;
                        }
                    }
                }
            }
        });

        Tensor<T> dx = project_backward(x, dq, wq_, gwq_, gbq_);
        Tensor<T> dx2 = project_backward(x, dk, wk_, gwk_, gbk_);
        Tensor<T> dx3 = project_backward(x, dv, wv_, gwv_, gbv_);
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] += dx2[i] + dx3[i];
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({this->path() + ".wq", &wq_, &gwq_});
        out.push_back({this->path() + ".bq", &bq_, &gbq_});
        out.push_back({this->path() + ".wk", &wk_, &gwk_});
        out.push_back({this->path() + ".bk", &bk_, &gbk_});
        out.push_back({this->path() + ".wv", &wv_, &gwv_});
        out.push_back({this->path() + ".bv", &bv_, &gbv_});
        out.push_back({this->path() + ".wo", &wo_, &gwo_});
        out.push_back({this->path() + ".bo", &bo_, &gbo_});
    }

    // Attention probabilities of the matching forward call, [N, heads, T, T].
    static const Tensor<T>& attention_from_cache(const Cache<T>& cache) {
        if (cache.saved.size() < 6) throw StaleCache("attention cache not populated");
        return cache.saved[4];
    }

    Tensor<T>& query_weight() { return wq_; }
    Tensor<T>& key_weight() { return wk_; }

private:
    // y[..., o] = sum_i x[..., i] w[o,i] + b[o]
    Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) const {
        const std::int64_t m = x.numel() / dim_;
        Tensor<T> y(x.shape);
        parallel_for(m, [&](std::int64_t s, std::int64_t e) {
            for (std::int64_t r = s; r < e; ++r) {
                const T* xr = x.data.data() + static_cast<size_t>(r) * dim_;
                T* yr = y.data.data() + static_cast<size_t>(r) * dim_;
                for (int o = 0; o < dim_; ++o) {
                    const T* wr = w.data.data() + static_cast<size_t>(o) * dim_;
                    T acc = b[o];
                    for (int i = 0; i < dim_; ++i) acc += xr[i] * wr[i];
                    yr[o] = acc;
                }
            }
        });
        return y;
    }

    Tensor<T> project_backward(const Tensor<T>& x, const Tensor<T>& dy, const Tensor<T>& w,
                               Tensor<T>& gw, Tensor<T>& gb) {
        const std::int64_t m = x.numel() / dim_;
        parallel_for(dim_, [&](std::int64_t s, std::int64_t e) {
            for (std::int64_t o = s; o < e; ++o) {
                T* gwr = gw.data.data() + static_cast<size_t>(o) * dim_;
                T acc_b = 0;
                for (std::int64_t r = 0; r < m; ++r) {
                    const T g = dy.data[static_cast<size_t>(r) * dim_ + o];
                    if (g == T(0)) continue;
                    acc_b += g;
                    const T* xr = x.data.data() + static_cast<size_t>(r) * dim_;
                    for (int i = 0; i < dim_; ++i) gwr[i] += g * xr[i];
                }
                gb[o] += acc_b;
            }
        });
        Tensor<T> dx(x.shape);
        parallel_for(m, [&](std::int64_t s, std::int64_t e) {
            for (std::int64_t r = s; r < e; ++r) {
                const T* gy = dy.data.data() + static_cast<size_t>(r) * dim_;
                T* gx = dx.data.data() + static_cast<size_t>(r) * dim_;
                for (int o = 0; o < dim_; ++o) {
                    const T g = gy[o];
                    if (g == T(0)) continue;
                    const T* wr = w.data.data() + static_cast<size_t>(o) * dim_;
                    for (int i = 0; i < dim_; ++i) gx[i] += g * wr[i];
                }
            }
        });
        return dx;
    }

    int dim_, heads_, head_dim_;
    Tensor<T> wq_, wk_, wv_, wo_, bq_, bk_, bv_, bo_;
    Tensor<T> gwq_, gwk_, gwv_, gwo_, gbq_, gbk_, gbv_, gbo_;
};

// ---- transformer block ---------------------------------------------------

// Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)).
template <std::floating_point T>
class TransformerBlock : public Layer<T> {
public:
    TransformerBlock(std::string path, int dim, int heads, int mlp_hidden, Rng& rng)
        : Layer<T>(path),
          ln1_(path + ".ln1", dim),
          attn_(path + ".attn", dim, heads, rng),
          ln2_(path + ".ln2", dim),
          fc1_(path + ".mlp.fc1", dim, mlp_hidden, rng),
          act_(path + ".mlp.gelu"),
          fc2_(path + ".mlp.fc2", mlp_hidden, dim, rng) {}

    const char* kind() const override { return "transformer_block"; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache<T>& cache) const override {
        cache.children.assign(6, Cache<T>{});
        Tensor<T> a = ln1_.forward(x, mode, cache.children[0]);
        Tensor<T> b = attn_.forward(a, mode, cache.children[1]);
        Tensor<T> c = residual_add(x, b);
        Tensor<T> d = ln2_.forward(c, mode, cache.children[2]);
        Tensor<T> e1 = fc1_.forward(d, mode, cache.children[3]);
        Tensor<T> e2 = act_.forward(e1, mode, cache.children[4]);
        Tensor<T> e3 = fc2_.forward(e2, mode, cache.children[5]);
        return residual_add(c, e3);
    }

    Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy) override {
        if (cache.children.size() != 6)
            throw StaleCache(this->path() + ": cache does not match this layer's forward");
        auto [dc_direct, de3] = residual_add_backward(dy);
        Tensor<T> de2 = fc2_.backward(cache.children[5], de3);
        Tensor<T> de1 = act_.backward(cache.children[4], de2);
        Tensor<T> dd = fc1_.backward(cache.children[3], de1);
        Tensor<T> dc = residual_add(dc_direct, ln2_.backward(cache.children[2], dd));
        auto [dx_direct, db] = residual_add_backward(dc);
        Tensor<T> da = attn_.backward(cache.children[1], db);
        return residual_add(dx_direct, ln1_.backward(cache.children[0], da));
    }

    void collect_params(std::vector<ParamRef<T>>& out) override {
        ln1_.collect_params(out);
        attn_.collect_params(out);
        ln2_.collect_params(out);
        fc1_.collect_params(out);
        fc2_.collect_params(out);
    }

    const MultiHeadSelfAttention<T>& attention() const { return attn_; }
    MultiHeadSelfAttention<T>& attention() { return attn_; }

    // cache.children[1] is the MHSA cache
    static const Cache<T>& attention_cache(const Cache<T>& cache) {
        if (cache.children.size() != 6) throw StaleCache("transformer block cache not populated");
        return cache.children[1];
    }

private:
    LayerNorm<T> ln1_;
    MultiHeadSelfAttention<T> attn_;
    LayerNorm<T> ln2_;
    Dense<T> fc1_;
    Gelu<T> act_;
    Dense<T> fc2_;
};

} // namespace holo::nn
