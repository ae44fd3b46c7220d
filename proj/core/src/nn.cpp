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

#include "shadowformer/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace sf::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using Vec = Eigen::VectorXd;
using VecMap = Eigen::Map<Vec>;
using ConstVecMap = Eigen::Map<const Vec>;

namespace {

MatMap as_mat(Tensor& t, std::int64_t rows, std::int64_t cols)
{
    return MatMap(t.data(), rows, cols);
}

ConstMatMap as_mat(const Tensor& t, std::int64_t rows, std::int64_t cols)
{
    return ConstMatMap(t.data(), rows, cols);
}

// Spatial column count of a (C, ...) tensor.
std::int64_t cols_of(const Tensor& t)
{
    return t.numel() / t.dim(0);
}

}  // namespace

void init_trunc_normal(Tensor& t, Rng& rng, double stddev)
{
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.truncated_normal(stddev);
}

// ---------------------------------------------------------------------------
// PointwiseLinear
// ---------------------------------------------------------------------------

PointwiseLinear::PointwiseLinear(std::string name, std::int64_t in, std::int64_t out)
    : w(name + ".w", {out, in}), b(name + ".b", {out})
{
}

Tensor PointwiseLinear::forward(const Tensor& x, Cache* cache) const
{
    const auto in = in_dim();
    const auto out = out_dim();
    if (x.dim(0) != in) throw ShapeError(cat(w.name, ": expected ", in, " rows, got ", x.dim(0)));
    const auto n = cols_of(x);

    std::vector<std::int64_t> out_shape = x.shape();
    out_shape[0] = out;
    Tensor y(out_shape);
    as_mat(y, out, n).noalias() = as_mat(w.value, out, in) * as_mat(x, in, n);
    as_mat(y, out, n).colwise() += ConstVecMap(b.value.data(), out);

    if (cache) cache->x = x;
    return y;
}

Tensor PointwiseLinear::backward(const Tensor& gy, const Cache& cache)
{
    const auto in = in_dim();
    const auto out = out_dim();
    const auto n = cols_of(gy);

    as_mat(w.grad, out, in).noalias() += as_mat(gy, out, n) * as_mat(cache.x, in, n).transpose();
    VecMap(b.grad.data(), out) += as_mat(gy, out, n).rowwise().sum();

    Tensor gx(cache.x.shape());
    as_mat(gx, in, n).noalias() = as_mat(w.value, out, in).transpose() * as_mat(gy, out, n);
    return gx;
}

void PointwiseLinear::init(Rng& rng, double stddev)
{
    init_trunc_normal(w.value, rng, stddev);
    b.value.fill(0.0);
}

void PointwiseLinear::collect(ParamRefs& out)
{
    out.push_back(&w);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::int64_t in, std::int64_t out, std::int64_t k_,
               std::int64_t stride_, std::int64_t pad_)
    : w(name + ".w", {out, in * k_ * k_}),
      b(name + ".b", {out}),
      in_ch(in),
      out_ch(out),
      k(k_),
      stride(stride_),
      pad(pad_)
{
}

namespace {

Tensor im2col(const Tensor& x, std::int64_t k, std::int64_t stride, std::int64_t pad,
              std::int64_t ho, std::int64_t wo)
{
    const auto c = x.dim(0);
    const auto h = x.dim(1);
    const auto w = x.dim(2);
    Tensor cols({c * k * k, ho * wo});
    for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                const auto row = (ci * k + ky) * k + kx;
                double* dst = cols.data() + row * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const auto iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        dst += wo;
                        continue;
                    }
                    const double* src = x.data() + (ci * h + iy) * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const auto ix = ox * stride + kx - pad;
                        *dst++ = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const Tensor& cols, std::int64_t c, std::int64_t h, std::int64_t w,
                std::int64_t k, std::int64_t stride, std::int64_t pad, std::int64_t ho,
                std::int64_t wo, Tensor& gx)
{
    for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                const auto row = (ci * k + ky) * k + kx;
                const double* src = cols.data() + row * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const auto iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        src += wo;
                        continue;
                    }
                    double* dst = gx.data() + (ci * h + iy) * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const auto ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                    src += wo;
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const
{
    if (x.ndim() != 3 || x.dim(0) != in_ch)
        throw ShapeError(cat(w.name, ": expected (", in_ch, ",H,W) input"));
    const auto h = x.dim(1);
    const auto wd = x.dim(2);
    const auto ho = (h + 2 * pad - k) / stride + 1;
    const auto wo = (wd + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError(cat(w.name, ": input too small for kernel"));

    Tensor cols = im2col(x, k, stride, pad, ho, wo);
    Tensor y({out_ch, ho, wo});
    as_mat(y, out_ch, ho * wo).noalias() =
        as_mat(w.value, out_ch, in_ch * k * k) * as_mat(cols, in_ch * k * k, ho * wo);
    as_mat(y, out_ch, ho * wo).colwise() += ConstVecMap(b.value.data(), out_ch);

    if (cache) {
        cache->cols = std::move(cols);
        cache->h = h;
        cache->w = wd;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy, const Cache& cache)
{
    const auto ho = gy.dim(1);
    const auto wo = gy.dim(2);
    const auto n = ho * wo;
    const auto kk = in_ch * k * k;

    as_mat(w.grad, out_ch, kk).noalias() +=
        as_mat(gy, out_ch, n) * as_mat(cache.cols, kk, n).transpose();
    VecMap(b.grad.data(), out_ch) += as_mat(gy, out_ch, n).rowwise().sum();

    Tensor gcols({kk, n});
    as_mat(gcols, kk, n).noalias() =
        as_mat(w.value, out_ch, kk).transpose() * as_mat(gy, out_ch, n);

    Tensor gx({in_ch, cache.h, cache.w});
    col2im_add(gcols, in_ch, cache.h, cache.w, k, stride, pad, ho, wo, gx);
    return gx;
}

void Conv2d::init(Rng& rng, double stddev)
{
    init_trunc_normal(w.value, rng, stddev);
    b.value.fill(0.0);
}

void Conv2d::init_zero()
{
    w.value.fill(0.0);
    b.value.fill(0.0);
}

void Conv2d::collect(ParamRefs& out)
{
    out.push_back(&w);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------
// ConvTranspose2
// ---------------------------------------------------------------------------

ConvTranspose2::ConvTranspose2(std::string name, std::int64_t in, std::int64_t out)
    : w(name + ".w", {out * 4, in}), b(name + ".b", {out}), in_ch(in), out_ch(out)
{
}

Tensor ConvTranspose2::forward(const Tensor& x, Cache* cache) const
{
    if (x.ndim() != 3 || x.dim(0) != in_ch)
        throw ShapeError(cat(w.name, ": expected (", in_ch, ",H,W) input"));
    const auto h = x.dim(1);
    const auto wd = x.dim(2);
    const auto n = h * wd;

    Tensor yblk({out_ch * 4, n});
    as_mat(yblk, out_ch * 4, n).noalias() = as_mat(w.value, out_ch * 4, in_ch) * as_mat(x, in_ch, n);

    Tensor y({out_ch, 2 * h, 2 * wd});
    for (std::int64_t co = 0; co < out_ch; ++co) {
        const double bias = b.value[co];
        for (std::int64_t a = 0; a < 2; ++a)
            for (std::int64_t bb = 0; bb < 2; ++bb) {
                const double* src = yblk.data() + ((co * 2 + a) * 2 + bb) * n;
                for (std::int64_t yy = 0; yy < h; ++yy)
                    for (std::int64_t xx = 0; xx < wd; ++xx)
                        y.at(co, 2 * yy + a, 2 * xx + bb) = src[yy * wd + xx] + bias;
            }
    }
    if (cache) cache->x = x;
    return y;
}

Tensor ConvTranspose2::backward(const Tensor& gy, const Cache& cache)
{
    const auto h = cache.x.dim(1);
    const auto wd = cache.x.dim(2);
    const auto n = h * wd;

    Tensor gyblk({out_ch * 4, n});
    for (std::int64_t co = 0; co < out_ch; ++co) {
        double bias_grad = 0.0;
        for (std::int64_t a = 0; a < 2; ++a)
            for (std::int64_t bb = 0; bb < 2; ++bb) {
                double* dst = gyblk.data() + ((co * 2 + a) * 2 + bb) * n;
                for (std::int64_t yy = 0; yy < h; ++yy)
                    for (std::int64_t xx = 0; xx < wd; ++xx) {
                        const double g = gy.at(co, 2 * yy + a, 2 * xx + bb);
                        dst[yy * wd + xx] = g;
                        bias_grad += g;
                    }
            }
        b.grad[co] += bias_grad;
    }

    as_mat(w.grad, out_ch * 4, in_ch).noalias() +=
        as_mat(gyblk, out_ch * 4, n) * as_mat(cache.x, in_ch, n).transpose();

    Tensor gx({in_ch, h, wd});
    as_mat(gx, in_ch, n).noalias() =
        as_mat(w.value, out_ch * 4, in_ch).transpose() * as_mat(gyblk, out_ch * 4, n);
    return gx;
}

void ConvTranspose2::init(Rng& rng, double stddev)
{
    init_trunc_normal(w.value, rng, stddev);
    b.value.fill(0.0);
}

void ConvTranspose2::collect(ParamRefs& out)
{
    out.push_back(&w);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------
// ChannelLayerNorm
// ---------------------------------------------------------------------------

ChannelLayerNorm::ChannelLayerNorm(std::string name, std::int64_t dim, double eps_)
    : gamma(name + ".gamma", {dim}), beta(name + ".beta", {dim}), eps(eps_)
{
    gamma.value.fill(1.0);
}

Tensor ChannelLayerNorm::forward(const Tensor& x, Cache* cache) const
{
    const auto c = x.dim(0);
    if (c != gamma.value.dim(0))
        throw ShapeError(cat(gamma.name, ": expected ", gamma.value.dim(0), " channels"));
    const auto n = cols_of(x);

    Tensor y(x.shape());
    Tensor xhat(x.shape());
    Tensor inv_std({n});
    const double* xd = x.data();
    double* yd = y.data();
    double* hd = xhat.data();
    for (std::int64_t j = 0; j < n; ++j) {
        double mu = 0.0;
        for (std::int64_t i = 0; i < c; ++i) mu += xd[i * n + j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t i = 0; i < c; ++i) {
            const double d = xd[i * n + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[j] = inv;
        for (std::int64_t i = 0; i < c; ++i) {
            const double h = (xd[i * n + j] - mu) * inv;
            hd[i * n + j] = h;
            yd[i * n + j] = gamma.value[i] * h + beta.value[i];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor ChannelLayerNorm::backward(const Tensor& gy, const Cache& cache)
{
    const auto c = gy.dim(0);
    const auto n = cols_of(gy);
    Tensor gx(gy.shape());
    const double* gd = gy.data();
    const double* hd = cache.xhat.data();
    double* od = gx.data();

    for (std::int64_t i = 0; i < c; ++i) {
        double gg = 0.0, gb = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            gg += gd[i * n + j] * hd[i * n + j];
            gb += gd[i * n + j];
        }
        gamma.grad[i] += gg;
        beta.grad[i] += gb;
    }

    for (std::int64_t j = 0; j < n; ++j) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::int64_t i = 0; i < c; ++i) {
            const double dh = gd[i * n + j] * gamma.value[i];
            mean_dh += dh;
            mean_dh_h += dh * hd[i * n + j];
        }
        mean_dh /= static_cast<double>(c);
        mean_dh_h /= static_cast<double>(c);
        const double inv = cache.inv_std[j];
        for (std::int64_t i = 0; i < c; ++i) {
            const double dh = gd[i * n + j] * gamma.value[i];
            od[i * n + j] = inv * (dh - mean_dh - hd[i * n + j] * mean_dh_h);
        }
    }
    return gx;
}

void ChannelLayerNorm::collect(ParamRefs& out)
{
    out.push_back(&gamma);
    out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// GELU
// ---------------------------------------------------------------------------

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& x, GeluCache* cache)
{
    Tensor y(x.shape());
    Tensor phi(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double p = 0.5 * std::erfc(-x[i] * kInvSqrt2);
        phi[i] = p;
        y[i] = x[i] * p;
    }
    if (cache) {
        cache->x = x;
        cache->phi = std::move(phi);
    }
    return y;
}

Tensor gelu_backward(const Tensor& gy, const GeluCache& cache)
{
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < gy.numel(); ++i) {
        const double xi = cache.x[i];
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
        gx[i] = gy[i] * (cache.phi[i] + xi * pdf);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// SqueezeExcite
// ---------------------------------------------------------------------------

SqueezeExcite::SqueezeExcite(std::string name, std::int64_t dim, std::int64_t reduction)
    : fc1(name + ".fc1", dim, std::max<std::int64_t>(1, dim / reduction)),
      fc2(name + ".fc2", std::max<std::int64_t>(1, dim / reduction), dim)
{
    if (dim < reduction)
        throw ArgumentError(cat(name, ": channel count ", dim, " below reduction ", reduction));
}

Tensor SqueezeExcite::forward(const Tensor& x, Cache* cache) const
{
    const auto c = x.dim(0);
    const auto n = cols_of(x);

    Tensor s({c, 1});
    for (std::int64_t i = 0; i < c; ++i) {
        double acc = 0.0;
        const double* row = x.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) acc += row[j];
        s[i] = acc / static_cast<double>(n);
    }

    Tensor z1 = fc1.forward(s, cache ? &cache->fc1_cache : nullptr);
    Tensor a1 = gelu(z1, cache ? &cache->gelu_cache : nullptr);
    Tensor z2 = fc2.forward(a1, cache ? &cache->fc2_cache : nullptr);

    Tensor gate({c, 1});
    for (std::int64_t i = 0; i < c; ++i) gate[i] = 1.0 / (1.0 + std::exp(-z2[i]));

    Tensor y(x.shape());
    for (std::int64_t i = 0; i < c; ++i) {
        const double g = gate[i];
        const double* row = x.data() + i * n;
        double* out = y.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) out[j] = row[j] * g;
    }

    if (cache) {
        cache->x = x;
        cache->gate = std::move(gate);
    }
    return y;
}

Tensor SqueezeExcite::backward(const Tensor& gy, const Cache& cache)
{
    const auto c = gy.dim(0);
    const auto n = cols_of(gy);

    Tensor ggate({c, 1});
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < c; ++i) {
        const double g = cache.gate[i];
        const double* gr = gy.data() + i * n;
        const double* xr = cache.x.data() + i * n;
        double* out = gx.data() + i * n;
        double acc = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            acc += gr[j] * xr[j];
            out[j] = gr[j] * g;
        }
        ggate[i] = acc;
    }

    Tensor gz2({c, 1});
    for (std::int64_t i = 0; i < c; ++i) {
        const double g = cache.gate[i];
        gz2[i] = ggate[i] * g * (1.0 - g);
    }

    Tensor ga1 = fc2.backward(gz2, cache.fc2_cache);
    Tensor gz1 = gelu_backward(ga1, cache.gelu_cache);
    Tensor gs = fc1.backward(gz1, cache.fc1_cache);

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < c; ++i) {
        const double add = gs[i] * inv_n;
        double* out = gx.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) out[j] += add;
    }
    return gx;
}

void SqueezeExcite::init(Rng& rng, double stddev)
{
    fc1.init(rng, stddev);
    fc2.init(rng, stddev);
}

void SqueezeExcite::collect(ParamRefs& out)
{
    fc1.collect(out);
    fc2.collect(out);
}

// ---------------------------------------------------------------------------
// Window handling
// ---------------------------------------------------------------------------

WindowSpec make_window_spec(std::int64_t h, std::int64_t w, std::int64_t p)
{
    if (p < 1 || h % p != 0 || w % p != 0)
        throw ShapeError(cat("window size ", p, " must divide the ", h, "x", w, " map"));
    WindowSpec spec;
    spec.p = p;
    spec.ny = h / p;
    spec.nx = w / p;
    spec.n_windows = spec.ny * spec.nx;
    spec.n_tokens = p * p;
    spec.gather.resize(static_cast<std::size_t>(h * w));
    std::int64_t out = 0;
    for (std::int64_t wy = 0; wy < spec.ny; ++wy)
        for (std::int64_t wx = 0; wx < spec.nx; ++wx)
            for (std::int64_t ty = 0; ty < p; ++ty)
                for (std::int64_t tx = 0; tx < p; ++tx)
                    spec.gather[static_cast<std::size_t>(out++)] = (wy * p + ty) * w + wx * p + tx;
    return spec;
}

WindowSpec WindowSpec::single(std::int64_t n)
{
    WindowSpec spec;
    spec.p = 0;
    spec.ny = 1;
    spec.nx = 1;
    spec.n_windows = 1;
    spec.n_tokens = n;
    spec.gather.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) spec.gather[static_cast<std::size_t>(i)] = i;
    return spec;
}

Tensor gather_cols(const Tensor& x, const std::vector<std::int64_t>& idx)
{
    const auto c = x.dim(0);
    const auto n = cols_of(x);
    if (static_cast<std::int64_t>(idx.size()) != n)
        throw ShapeError("gather_cols: index size mismatch");
    Tensor y({c, n});
    for (std::int64_t i = 0; i < c; ++i) {
        const double* src = x.data() + i * n;
        double* dst = y.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) dst[j] = src[idx[static_cast<std::size_t>(j)]];
    }
    return y;
}

Tensor scatter_cols(const Tensor& xb, const std::vector<std::int64_t>& idx)
{
    const auto c = xb.dim(0);
    const auto n = cols_of(xb);
    if (static_cast<std::int64_t>(idx.size()) != n)
        throw ShapeError("scatter_cols: index size mismatch");
    Tensor y({c, n});
    for (std::int64_t i = 0; i < c; ++i) {
        const double* src = xb.data() + i * n;
        double* dst = y.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) dst[idx[static_cast<std::size_t>(j)]] = src[j];
    }
    return y;
}

Tensor correlation_map(const Tensor& mask_vec)
{
    const auto n = mask_vec.numel();
    for (std::int64_t i = 0; i < n; ++i)
        if (mask_vec[i] != 0.0 && mask_vec[i] != 1.0)
            throw ArgumentError("correlation_map: mask entries must be 0 or 1");
    Tensor corr({n, n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            corr.at(i, j) = mask_vec[i] != mask_vec[j] ? 1.0 : 0.0;
    return corr;
}

Tensor sia_reweight(const Tensor& corr, double sigma)
{
    if (corr.ndim() != 2 || corr.dim(0) != corr.dim(1))
        throw ShapeError("sia_reweight: correlation map must be square");
    Tensor r(corr.shape());
    for (std::int64_t i = 0; i < corr.numel(); ++i) r[i] = sigma * corr[i] + (1.0 - sigma);
    return r;
}

// ---------------------------------------------------------------------------
// WindowAttention
// ---------------------------------------------------------------------------

WindowAttention::WindowAttention(std::string name, std::int64_t dim, std::int64_t heads)
    : wq(name + ".wq", dim, dim),
      wk(name + ".wk", dim, dim),
      wv(name + ".wv", dim, dim),
      wo(name + ".wo", dim, dim),
      heads_(heads)
{
    if (heads < 1 || dim % heads != 0)
        throw ArgumentError(cat(name, ": head count ", heads, " must divide dim ", dim));
}

Tensor WindowAttention::forward(const Tensor& x, const WindowSpec& spec,
                                const std::vector<Tensor>& reweight, Cache* cache) const
{
    const auto c = x.dim(0);
    const auto n = cols_of(x);
    const auto nw = spec.tokens();
    const auto n_windows = spec.windows();
    if (n != nw * n_windows) throw ShapeError("WindowAttention: columns do not match window spec");
    if (static_cast<std::int64_t>(reweight.size()) != n_windows)
        throw ShapeError("WindowAttention: one reweight matrix per window required");

    Tensor q = wq.forward(x, cache ? &cache->q_cache : nullptr);
    Tensor k = wk.forward(x, cache ? &cache->k_cache : nullptr);
    Tensor v = wv.forward(x, cache ? &cache->v_cache : nullptr);

    const auto dh = c / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor attn_out({c, n});
    auto qm = as_mat(q, c, n);
    auto km = as_mat(k, c, n);
    auto vm = as_mat(v, c, n);
    auto om = as_mat(attn_out, c, n);

    if (cache) cache->attn.clear();

    for (std::int64_t wi = 0; wi < n_windows; ++wi) {
        const auto& rw = reweight[static_cast<std::size_t>(wi)];
        if (rw.ndim() != 2 || rw.dim(0) != nw || rw.dim(1) != nw)
            throw ShapeError("WindowAttention: reweight matrix must be Nw x Nw");
        auto rm = as_mat(rw, nw, nw);
        const auto col0 = wi * nw;
        for (std::int64_t hix = 0; hix < heads_; ++hix) {
            const auto row0 = hix * dh;
            Mat scores = (qm.block(row0, col0, dh, nw).transpose() *
                          km.block(row0, col0, dh, nw)) *
                         scale;  // (Nw, Nw), row = query token
            // Row-stable softmax.
            for (std::int64_t r = 0; r < nw; ++r) {
                const double mx = scores.row(r).maxCoeff();
                double sum = 0.0;
                for (std::int64_t s = 0; s < nw; ++s) {
                    const double e = std::exp(scores(r, s) - mx);
                    scores(r, s) = e;
                    sum += e;
                }
                scores.row(r) /= sum;
            }
            Mat a_re = scores.cwiseProduct(rm);
            om.block(row0, col0, dh, nw).noalias() = vm.block(row0, col0, dh, nw) * a_re.transpose();
            if (cache) {
                Tensor a({nw, nw});
                as_mat(a, nw, nw) = scores;
                cache->attn.push_back(std::move(a));
            }
        }
    }

    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->reweight = reweight;
    }
    return wo.forward(attn_out, cache ? &cache->o_cache : nullptr);
}

Tensor WindowAttention::backward(const Tensor& gy, const WindowSpec& spec, const Cache& cache)
{
    const auto c = gy.dim(0);
    const auto n = cols_of(gy);
    const auto nw = spec.tokens();
    const auto n_windows = spec.windows();
    const auto dh = c / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor g_attn_out = wo.backward(gy, cache.o_cache);

    Tensor gq({c, n}), gk({c, n}), gv({c, n});
    auto gqm = as_mat(gq, c, n);
    auto gkm = as_mat(gk, c, n);
    auto gvm = as_mat(gv, c, n);
    auto gom = as_mat(g_attn_out, c, n);
    auto qm = as_mat(cache.q, c, n);
    auto km = as_mat(cache.k, c, n);
    auto vm = as_mat(cache.v, c, n);

    for (std::int64_t wi = 0; wi < n_windows; ++wi) {
        auto rm = as_mat(cache.reweight[static_cast<std::size_t>(wi)], nw, nw);
        const auto col0 = wi * nw;
        for (std::int64_t hix = 0; hix < heads_; ++hix) {
            const auto row0 = hix * dh;
            auto am = as_mat(cache.attn[static_cast<std::size_t>(wi * heads_ + hix)], nw, nw);
            Mat a_re = am.cwiseProduct(rm);

            // out = V A_re^T
            Mat g_out = gom.block(row0, col0, dh, nw);
            Mat g_a_re = g_out.transpose() * vm.block(row0, col0, dh, nw);  // (Nw, Nw)
            gvm.block(row0, col0, dh, nw).noalias() = g_out * a_re;

            Mat g_a = g_a_re.cwiseProduct(rm);
            // Softmax backward per row.
            Mat g_s(nw, nw);
            for (std::int64_t r = 0; r < nw; ++r) {
                const double dot = g_a.row(r).dot(am.row(r));
                g_s.row(r) =
                    am.row(r).cwiseProduct(g_a.row(r) - Eigen::RowVectorXd::Constant(nw, dot));
            }
            g_s *= scale;
            gqm.block(row0, col0, dh, nw).noalias() = km.block(row0, col0, dh, nw) * g_s.transpose();
            gkm.block(row0, col0, dh, nw).noalias() = qm.block(row0, col0, dh, nw) * g_s;
        }
    }

    Tensor gx = wq.backward(gq, cache.q_cache);
    Tensor gx2 = wk.backward(gk, cache.k_cache);
    Tensor gx3 = wv.backward(gv, cache.v_cache);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gx2[i] + gx3[i];
    return gx;
}

void WindowAttention::init(Rng& rng, double stddev)
{
    wq.init(rng, stddev);
    wk.init(rng, stddev);
    wv.init(rng, stddev);
    wo.init(rng, stddev);
}

void WindowAttention::collect(ParamRefs& out)
{
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

Tensor sia_window(const WindowAttention& attn, const Tensor& tokens, const Tensor& corr,
                  double sigma)
{
    if (tokens.ndim() != 2) throw ShapeError("sia_window: tokens must be (C, Nw)");
    const auto nw = tokens.dim(1);
    if (corr.ndim() != 2 || corr.dim(0) != nw || corr.dim(1) != nw)
        throw ShapeError("sia_window: correlation map must be Nw x Nw");

    const WindowSpec spec = WindowSpec::single(nw);
    std::vector<Tensor> rw;
    rw.push_back(sia_reweight(corr, sigma));
    return attn.forward(tokens, spec, rw, nullptr);
}

}  // namespace sf::nn
