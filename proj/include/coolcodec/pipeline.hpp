#pragma once

#include <string>
#include <vector>

#include "coolcodec/layers.hpp"
#include "coolcodec/tensor.hpp"

namespace coolcodec {

// The decoder needs no general autodiff: its graph is fixed, so a plain layer
// sequence with per-layer forward/backward rules covers everything. This
// runner exists for composing and testing those rules; the codec hot paths
// call the same kernels directly on their own static schedules.

enum class LayerKind {
    Dense,
    Conv1x1,
    Conv3x3,
    TConv2xSepSym,
    NNUpsample,
    Softround,
    AdditiveNoise,
    LaplaceRate,
    Mse,
};

struct LayerNode {
    LayerKind kind = LayerKind::Dense;
    std::string name;
    ParamTensor* weight = nullptr;  // dense/conv kernels; tconv free taps
    ParamTensor* bias = nullptr;

    // geometry (per kind)
    int in_ch = 0, out_ch = 0;
    int h = 0, w = 0;            // input plane size where it matters
    int out_h = 0, out_w = 0;    // tconv / nn-upsample target
    float temp = 0.35f;          // softround
    float noise_std = 0.0f;      // additive noise
    uint64_t noise_stream = 0;
    std::vector<float> mu, sigma;   // laplace-rate distribution parameters
    std::vector<float> target;      // mse target

    // caches
    std::vector<float> in_cache, out_cache, aux_cache;
};

struct Pipeline {
    std::vector<LayerNode> nodes;
    std::vector<float> input_grad;
    bool ran_forward = false;

    LayerNode& add(LayerNode n) {
        nodes.push_back(std::move(n));
        return nodes.back();
    }

    std::vector<float> forward(const std::vector<float>& input) {
        std::vector<float> cur = input;
        for (auto& n : nodes) {
            n.in_cache = cur;
            cur = forward_node(n, cur);
            n.out_cache = cur;
        }
        ran_forward = true;
        return cur;
    }

    // Backpropagates an upstream gradient (per output element); parameter
    // gradients accumulate into the attached ParamTensors, the input gradient
    // lands in input_grad.
    void backward(const std::vector<float>& upstream) {
        if (!ran_forward) throw ConfigError("pipeline: backward before forward");
        std::vector<float> d = upstream;
        for (int i = int(nodes.size()) - 1; i >= 0; --i) {
            auto& n = nodes[i];
            if (d.size() != n.out_cache.size())
                throw ConfigError("pipeline: upstream size mismatch at " + n.name);
            d = backward_node(n, d);
            for (float v : d)
                if (!std::isfinite(v))
                    throw TrainingError("non-finite gradient out of layer " + n.name);
            if (n.weight && !n.weight->grad_finite())
                throw TrainingError("non-finite weight gradient in layer " + n.name);
        }
        input_grad = std::move(d);
    }
    void backward(float upstream_scalar = 1.0f) {
        backward(std::vector<float>(nodes.empty() ? 0 : nodes.back().out_cache.size(),
                                    upstream_scalar));
    }

private:
    static void require(bool ok, const std::string& what) {
        if (!ok) throw ConfigError("pipeline: " + what);
    }

    std::vector<float> forward_node(LayerNode& n, const std::vector<float>& x) {
        switch (n.kind) {
            case LayerKind::Dense: {
                require(n.weight && int(x.size()) == n.weight->cols(), "dense input size");
                const int m = n.weight->rows(), k = n.weight->cols();
                std::vector<float> y(m);
                std::vector<float> wt(size_t(k) * m);
                transpose(n.weight->v.data(), wt.data(), m, k);
                gemm_xwt(x.data(), wt.data(), n.bias ? n.bias->v.data() : nullptr, y.data(), 1, k, m);
                return y;
            }
            case LayerKind::Conv1x1: {
                require(n.weight && x.size() % n.in_ch == 0, "conv1x1 input");
                const size_t npix = x.size() / n.in_ch;
                std::vector<float> y(size_t(n.out_ch) * npix);
                conv1x1_forward(x.data(), n.weight->v.data(), n.bias ? n.bias->v.data() : nullptr,
                                y.data(), n.in_ch, n.out_ch, npix);
                return y;
            }
            case LayerKind::Conv3x3: {
                require(n.weight && int(x.size()) == n.in_ch * n.h * n.w, "conv3x3 input");
                std::vector<float> y(size_t(n.out_ch) * n.h * n.w);
                conv3x3_forward(x.data(), n.weight->v.data(), n.bias ? n.bias->v.data() : nullptr,
                                y.data(), n.in_ch, n.out_ch, n.h, n.w);
                return y;
            }
            case LayerKind::TConv2xSepSym: {
                require(n.weight && n.weight->size() == 4 && int(x.size()) == n.h * n.w,
                        "tconv input");
                std::vector<float> rowt(size_t(n.h) * n.out_w);
                tconv2x_rows_forward(x.data(), n.h, n.w, n.w, rowt.data(), n.out_w, n.weight->v.data());
                n.aux_cache = rowt;
                std::vector<float> y(size_t(n.out_h) * n.out_w);
                tconv2x_cols_forward(rowt.data(), n.h, n.out_w, y.data(), n.out_h, n.weight->v.data());
                return y;
            }
            case LayerKind::NNUpsample: {
                require(int(x.size()) == n.h * n.w, "nn-upsample input");
                std::vector<float> y(size_t(n.out_h) * n.out_w);
                nn_upsample_forward(x.data(), n.h, n.w, y.data(), n.out_h, n.out_w);
                return y;
            }
            case LayerKind::Softround: {
                std::vector<float> y(x.size());
                n.aux_cache.resize(x.size());
                softround_forward(x.data(), y.data(), n.aux_cache.data(), x.size(), n.temp);
                return y;
            }
            case LayerKind::AdditiveNoise: {
                std::vector<float> y(x.size());
                add_noise_forward(x.data(), y.data(), x.size(), n.noise_std, n.noise_stream);
                return y;
            }
            case LayerKind::LaplaceRate: {
                require(n.mu.size() == x.size() && n.sigma.size() == x.size(), "laplace params");
                std::vector<float> y(x.size());
                laplace_rate_forward(x.data(), n.mu.data(), n.sigma.data(), y.data(), x.size());
                return y;
            }
            case LayerKind::Mse: {
                require(n.target.size() == x.size(), "mse target size");
                return {float(mse_forward(x.data(), n.target.data(), x.size()))};
            }
        }
        throw ConfigError("pipeline: unknown layer kind");
    }

    std::vector<float> backward_node(LayerNode& n, const std::vector<float>& d) {
        const std::vector<float>& x = n.in_cache;
        std::vector<float> dx(x.size(), 0.0f);
        switch (n.kind) {
            case LayerKind::Dense: {
                const int m = n.weight->rows(), k = n.weight->cols();
                gemm_xwt(d.data(), n.weight->v.data(), nullptr, dx.data(), 1, m, k, true);
                gemm_add_dw(x.data(), d.data(), n.weight->g.data(),
                            n.bias ? n.bias->g.data() : nullptr, 1, k, m);
                break;
            }
            case LayerKind::Conv1x1: {
                const size_t npix = x.size() / n.in_ch;
                conv1x1_backward(x.data(), n.weight->v.data(), d.data(), dx.data(),
                                 n.weight->g.data(), n.bias ? n.bias->g.data() : nullptr,
                                 n.in_ch, n.out_ch, npix);
                break;
            }
            case LayerKind::Conv3x3: {
                conv3x3_backward(x.data(), n.weight->v.data(), d.data(), dx.data(),
                                 n.weight->g.data(), n.bias ? n.bias->g.data() : nullptr,
                                 n.in_ch, n.out_ch, n.h, n.w);
                break;
            }
            case LayerKind::TConv2xSepSym: {
                std::vector<float> drow(n.aux_cache.size(), 0.0f);
                tconv2x_cols_backward(n.aux_cache.data(), d.data(), n.h, n.out_w, n.out_h,
                                      n.weight->v.data(), drow.data(), n.weight->g.data());
                tconv2x_rows_backward(x.data(), drow.data(), n.h, n.w, n.w, n.out_w,
                                      n.weight->v.data(), dx.data(), n.weight->g.data());
                break;
            }
            case LayerKind::NNUpsample: {
                nn_upsample_backward(d.data(), n.out_h, n.out_w, dx.data(), n.h, n.w);
                break;
            }
            case LayerKind::Softround: {
                softround_backward(d.data(), n.aux_cache.data(), dx.data(), x.size(), n.temp);
                break;
            }
            case LayerKind::AdditiveNoise: {
                dx = d;
                break;
            }
            case LayerKind::LaplaceRate: {
                laplace_rate_backward(x.data(), n.mu.data(), n.sigma.data(), d.data(),
                                      dx.data(), nullptr, nullptr, x.size());
                break;
            }
            case LayerKind::Mse: {
                mse_backward(x.data(), n.target.data(), double(d[0]), dx.data(), x.size());
                break;
            }
        }
        return dx;
    }
};

}  // namespace coolcodec
