/*
 * Copyright (c) 2026, the shadowformer-cpp authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

#include "shadowformer/tensor.hpp"

namespace sf::nn {

/// A trainable tensor paired with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, std::vector<std::int64_t> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape))
    {
    }

    void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Parameter*>;

/// Initializes a weight tensor with a truncated normal (clipped at 2 sigma).
void init_trunc_normal(Tensor& t, Rng& rng, double stddev);

// ---------------------------------------------------------------------------
// Layers. Feature maps are (C, H, W) tensors; position-wise layers view them
// as (C, N) matrices with one column per spatial location. Each layer has
//   forward(x, Cache*)  - Cache may be null for inference,
//   backward(gy, Cache) - accumulates parameter grads, returns grad wrt x.
// ---------------------------------------------------------------------------

/// y = W x + b applied per column; x is (Cin, N).
class PointwiseLinear {
public:
    PointwiseLinear(std::string name, std::int64_t in, std::int64_t out);

    struct Cache {
        Tensor x;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    std::int64_t in_dim() const { return w.value.dim(1); }
    std::int64_t out_dim() const { return w.value.dim(0); }

    Parameter w;  // (out, in)
    Parameter b;  // (out)
};

/// k x k convolution via im2col; x is (Cin, H, W).
class Conv2d {
public:
    Conv2d(std::string name, std::int64_t in, std::int64_t out, std::int64_t k,
           std::int64_t stride, std::int64_t pad);

    struct Cache {
        Tensor cols;
        std::int64_t h = 0, w = 0;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void init_zero();
    void collect(ParamRefs& out);

    Parameter w;  // (out, in*k*k)
    Parameter b;  // (out)
    std::int64_t in_ch, out_ch, k, stride, pad;
};

/// 2x2 stride-2 transposed convolution: (Cin, H, W) -> (Cout, 2H, 2W).
class ConvTranspose2 {
public:
    ConvTranspose2(std::string name, std::int64_t in, std::int64_t out);

    struct Cache {
        Tensor x;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    Parameter w;  // (out*4, in)
    Parameter b;  // (out)
    std::int64_t in_ch, out_ch;
};

/// LayerNorm over the channel dimension at each spatial location.
class ChannelLayerNorm {
public:
    ChannelLayerNorm(std::string name, std::int64_t dim, double eps = 1e-6);

    struct Cache {
        Tensor xhat;     // (C, N)
        Tensor inv_std;  // (N)
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);

    void collect(ParamRefs& out);

    Parameter gamma, beta;  // (C)
    double eps;
};

/// Exact (erf-based) GELU.
struct GeluCache {
    Tensor x;
    Tensor phi;  // standard normal CDF of x
};
Tensor gelu(const Tensor& x, GeluCache* cache);
Tensor gelu_backward(const Tensor& gy, const GeluCache& cache);

/// Channel attention: squeeze (global average pool) and excite (two-layer
/// bottleneck with GELU then a sigmoid gate); output is the input scaled
/// per channel by the gate.
class SqueezeExcite {
public:
    SqueezeExcite(std::string name, std::int64_t dim, std::int64_t reduction);

    struct Cache {
        Tensor x;     // (C, N)
        Tensor gate;  // (C, 1)
        PointwiseLinear::Cache fc1_cache, fc2_cache;
        GeluCache gelu_cache;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    PointwiseLinear fc1, fc2;
};

// ---------------------------------------------------------------------------
// Window attention.
// ---------------------------------------------------------------------------

/// Column ordering for non-overlapping P x P windows over an H x W map.
struct WindowSpec {
    std::int64_t p = 0;                // window side (0 for synthetic specs)
    std::int64_t ny = 0, nx = 0;       // window grid
    std::int64_t n_windows = 0;
    std::int64_t n_tokens = 0;         // tokens per window
    std::vector<std::int64_t> gather;  // blocked index -> flat index
    std::int64_t windows() const { return n_windows; }
    std::int64_t tokens() const { return n_tokens; }

    /// A single window holding n tokens in storage order.
    static WindowSpec single(std::int64_t n);
};

WindowSpec make_window_spec(std::int64_t h, std::int64_t w, std::int64_t p);

/// Reorders map columns into window-blocked order (and back).
Tensor gather_cols(const Tensor& x, const std::vector<std::int64_t>& idx);
Tensor scatter_cols(const Tensor& xb, const std::vector<std::int64_t>& idx);

/// Binary patch-pair map: out[i][j] = m[i] XOR m[j]. Symmetric, zero
/// diagonal.
Tensor correlation_map(const Tensor& mask_vec);

/// Attention reweighting matrix sigma*corr + (1-sigma)*ones.
Tensor sia_reweight(const Tensor& corr, double sigma);

/// Windowed multi-head attention whose post-softmax map is scaled
/// elementwise by a per-window reweighting matrix (no row renormalization;
/// an all-ones reweighting reproduces vanilla window attention exactly).
class WindowAttention {
public:
    WindowAttention(std::string name, std::int64_t dim, std::int64_t heads);

    struct Cache {
        PointwiseLinear::Cache q_cache, k_cache, v_cache, o_cache;
        Tensor q, k, v;                  // (C, N) blocked order
        std::vector<Tensor> attn;        // per window*head, (Nw, Nw) post-softmax
        std::vector<Tensor> reweight;    // per window, (Nw, Nw)
    };

    /// x must be in window-blocked column order; `reweight` holds one
    /// (Nw, Nw) matrix per window.
    Tensor forward(const Tensor& x, const WindowSpec& spec,
                   const std::vector<Tensor>& reweight, Cache* cache) const;
    Tensor backward(const Tensor& gy, const WindowSpec& spec, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    std::int64_t heads() const { return heads_; }

    PointwiseLinear wq, wk, wv, wo;

private:
    std::int64_t heads_;
};

/// Single-window attention entry point used by tests and visualization:
/// tokens are (C, Nw) columns, corr is the window's correlation map.
Tensor sia_window(const WindowAttention& attn, const Tensor& tokens, const Tensor& corr,
                  double sigma);

}  // namespace sf::nn
