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

#include "shadowformer/model.hpp"

#include <cmath>

namespace sf {

using nn::ParamRefs;

ModelConfig ModelConfig::small_preset()
{
    ModelConfig cfg;
    cfg.embed_dim = 24;
    cfg.depth = 2;
    return cfg;
}

ModelConfig ModelConfig::large_preset()
{
    ModelConfig cfg;
    cfg.embed_dim = 32;
    cfg.depth = 3;
    return cfg;
}

ModelConfig ModelConfig::toy_preset()
{
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.depth = 2;
    cfg.window = 8;
    return cfg;
}

void ModelConfig::validate() const
{
    if (embed_dim < 1) throw ArgumentError("embed_dim must be >= 1");
    if (depth < 1) throw ArgumentError("depth must be >= 1");
    if (window < 1) throw ArgumentError("window must be >= 1");
    if (sigma < 0.0 || sigma >= 1.0) throw ArgumentError(cat("sigma must be in [0,1), got ", sigma));
    if (heads < 1) throw ArgumentError("heads must be >= 1");
    if (bottleneck_dim() % heads != 0)
        throw ArgumentError(cat("bottleneck dim ", bottleneck_dim(), " not divisible by ", heads,
                                " heads"));
    if (encoder_attention == EncoderAttention::window && embed_dim % heads != 0)
        throw ArgumentError("embed_dim must be divisible by heads for window-attention stages");
    if (mlp_ratio <= 0.0) throw ArgumentError("mlp_ratio must be positive");
    if (se_reduction < 1) throw ArgumentError("se_reduction must be >= 1");
    if (blocks_per_stage < 1 || sim_blocks < 1)
        throw ArgumentError("block counts must be >= 1");
}

void ModelConfig::check_input(std::int64_t h, std::int64_t w) const
{
    const std::int64_t div = (std::int64_t{1} << depth) * window;
    if (h % div != 0 || w % div != 0) {
        const auto pad_h = (div - h % div) % div;
        const auto pad_w = (div - w % div) % div;
        throw ShapeError(cat("input ", h, "x", w, " must be divisible by 2^L*P = ", div,
                             "; pad height by ", pad_h, " and width by ", pad_w));
    }
}

Tensor pool_mask(const ShadowMask& mask, std::int64_t levels)
{
    const auto h = mask.height();
    const auto w = mask.width();
    const std::int64_t f = std::int64_t{1} << levels;
    if (h % f != 0 || w % f != 0)
        throw ShapeError(cat("mask ", h, "x", w, " not divisible by 2^", levels));
    const auto ho = h / f;
    const auto wo = w / f;
    Tensor m({ho, wo});
    for (std::int64_t y = 0; y < ho; ++y)
        for (std::int64_t x = 0; x < wo; ++x) {
            double v = 0.0;
            for (std::int64_t dy = 0; dy < f && v == 0.0; ++dy)
                for (std::int64_t dx = 0; dx < f; ++dx)
                    if (mask.data.at(y * f + dy, x * f + dx) != 0.0) {
                        v = 1.0;
                        break;
                    }
            m.at(y, x) = v;
        }
    return m;
}

namespace nn {

// ---------------------------------------------------------------------------
// FeedForward
// ---------------------------------------------------------------------------

FeedForward::FeedForward(std::string name, std::int64_t dim, double mlp_ratio)
    : ln(name + ".ln", dim),
      fc1(name + ".fc1", dim,
          std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(mlp_ratio * dim)))),
      fc2(name + ".fc2", fc1.out_dim(), dim)
{
}

Tensor FeedForward::forward(const Tensor& x, Cache* cache) const
{
    Tensor t = ln.forward(x, cache ? &cache->ln : nullptr);
    Tensor h = fc1.forward(t, cache ? &cache->fc1 : nullptr);
    Tensor g = gelu(h, cache ? &cache->act : nullptr);
    Tensor m = fc2.forward(g, cache ? &cache->fc2 : nullptr);
    for (std::int64_t i = 0; i < m.numel(); ++i) m[i] += x[i];
    return m;
}

Tensor FeedForward::backward(const Tensor& gy, const Cache& cache)
{
    Tensor gg = fc2.backward(gy, cache.fc2);
    Tensor gh = gelu_backward(gg, cache.act);
    Tensor gt = fc1.backward(gh, cache.fc1);
    Tensor gx = ln.backward(gt, cache.ln);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i];
    return gx;
}

void FeedForward::init(Rng& rng, double stddev)
{
    fc1.init(rng, stddev);
    fc2.init(rng, stddev);
}

void FeedForward::collect(ParamRefs& out)
{
    ln.collect(out);
    fc1.collect(out);
    fc2.collect(out);
}

// ---------------------------------------------------------------------------
// TransformerBlock
// ---------------------------------------------------------------------------

TransformerBlock::TransformerBlock(std::string name, Kind kind_, std::int64_t dim,
                                   const ModelConfig& cfg)
    : kind(kind_), ln1(name + ".ln1", dim), ff(name + ".ff", dim, cfg.mlp_ratio)
{
    if (kind != Kind::window) se.emplace(name + ".se", dim, cfg.se_reduction);
    if (kind != Kind::channel) attn.emplace(name + ".attn", dim, cfg.heads);
}

namespace {

std::vector<Tensor> all_ones_reweight(const WindowSpec& spec)
{
    std::vector<Tensor> rw;
    rw.reserve(static_cast<std::size_t>(spec.windows()));
    for (std::int64_t i = 0; i < spec.windows(); ++i)
        rw.push_back(Tensor::full({spec.tokens(), spec.tokens()}, 1.0));
    return rw;
}

}  // namespace

Tensor TransformerBlock::forward(const Tensor& x, const WindowSpec* spec,
                                 const std::vector<Tensor>* reweight, Cache* cache) const
{
    if (kind != Kind::channel && spec == nullptr)
        throw ArgumentError("window spec required for attention blocks");
    if (cache) cache->shape = x.shape();

    Tensor u = ln1.forward(x, cache ? &cache->ln1 : nullptr);
    Tensor branch;
    switch (kind) {
        case Kind::channel:
            branch = se->forward(u, cache ? &cache->se : nullptr);
            break;
        case Kind::window: {
            Tensor ub = gather_cols(u, spec->gather);
            std::vector<Tensor> ones;
            const std::vector<Tensor>* rw = reweight;
            if (!rw) {
                ones = all_ones_reweight(*spec);
                rw = &ones;
            }
            Tensor yb = attn->forward(ub, *spec, *rw, cache ? &cache->attn : nullptr);
            branch = scatter_cols(yb, spec->gather);
            break;
        }
        case Kind::sim: {
            if (!reweight) throw ArgumentError("sim block requires correlation reweighting");
            Tensor v = se->forward(u, cache ? &cache->se : nullptr);
            Tensor vb = gather_cols(v, spec->gather);
            Tensor yb = attn->forward(vb, *spec, *reweight, cache ? &cache->attn : nullptr);
            branch = scatter_cols(yb, spec->gather);
            break;
        }
    }
    branch.set_shape(x.shape());
    for (std::int64_t i = 0; i < branch.numel(); ++i) branch[i] += x[i];
    return ff.forward(branch, cache ? &cache->ff : nullptr);
}

Tensor TransformerBlock::backward(const Tensor& gy, const WindowSpec* spec, const Cache& cache)
{
    Tensor g_res = ff.backward(gy, cache.ff);  // grad at x + branch

    Tensor gu;
    switch (kind) {
        case Kind::channel:
            gu = se->backward(g_res, cache.se);
            break;
        case Kind::window: {
            Tensor gb = gather_cols(g_res, spec->gather);
            Tensor gub = attn->backward(gb, *spec, cache.attn);
            gu = scatter_cols(gub, spec->gather);
            break;
        }
        case Kind::sim: {
            Tensor gb = gather_cols(g_res, spec->gather);
            Tensor gvb = attn->backward(gb, *spec, cache.attn);
            Tensor gv = scatter_cols(gvb, spec->gather);
            gv.set_shape(cache.shape);
            gu = se->backward(gv, cache.se);
            break;
        }
    }
    gu.set_shape(cache.shape);
    Tensor gx = ln1.backward(gu, cache.ln1);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g_res[i];
    gx.set_shape(cache.shape);
    return gx;
}

void TransformerBlock::init(Rng& rng, double stddev)
{
    if (se) se->init(rng, stddev);
    if (attn) attn->init(rng, stddev);
    ff.init(rng, stddev);
}

void TransformerBlock::collect(ParamRefs& out)
{
    ln1.collect(out);
    if (se) se->collect(out);
    if (attn) attn->collect(out);
    ff.collect(out);
}

}  // namespace nn

// ---------------------------------------------------------------------------
// EncoderStage / DecoderStage
// ---------------------------------------------------------------------------

namespace {

nn::TransformerBlock::Kind stage_kind(const ModelConfig& cfg)
{
    return cfg.encoder_attention == ModelConfig::EncoderAttention::window
               ? nn::TransformerBlock::Kind::window
               : nn::TransformerBlock::Kind::channel;
}

// Stacks b below a: (Ca+Cb, H, W).
Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw ShapeError("concat_channels: spatial size mismatch");
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::int64_t c_top)
{
    Tensor top({c_top, x.dim(1), x.dim(2)});
    Tensor bottom({x.dim(0) - c_top, x.dim(1), x.dim(2)});
    std::copy(x.data(), x.data() + top.numel(), top.data());
    std::copy(x.data() + top.numel(), x.data() + x.numel(), bottom.data());
    return {std::move(top), std::move(bottom)};
}

}  // namespace

EncoderStage::EncoderStage(std::string name, std::int64_t dim, const ModelConfig& cfg)
    : down(name + ".down", dim, dim * 2, 4, 2, 1)
{
    for (std::int64_t i = 0; i < cfg.blocks_per_stage; ++i)
        blocks.emplace_back(cat(name, ".blk", i), stage_kind(cfg), dim, cfg);
}

std::pair<Tensor, Tensor> EncoderStage::forward(const Tensor& x, const nn::WindowSpec* spec,
                                                Cache* cache) const
{
    if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0)
        throw ShapeError(cat("encoder stage needs even spatial size, got ", x.dim(1), "x",
                             x.dim(2)));
    if (cache) cache->blocks.resize(blocks.size());
    Tensor h = x;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        h = blocks[i].forward(h, spec, nullptr, cache ? &cache->blocks[i] : nullptr);
    Tensor d = down.forward(h, cache ? &cache->down : nullptr);
    return {std::move(h), std::move(d)};
}

Tensor EncoderStage::backward(const Tensor& g_down, const Tensor& g_skip,
                              const nn::WindowSpec* spec, Cache& cache)
{
    Tensor g = down.backward(g_down, cache.down);
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += g_skip[i];
    for (std::size_t i = blocks.size(); i-- > 0;)
        g = blocks[i].backward(g, spec, cache.blocks[i]);
    return g;
}

void EncoderStage::init(Rng& rng, double stddev)
{
    for (auto& b : blocks) b.init(rng, stddev);
    down.init(rng, stddev);
}

void EncoderStage::collect(ParamRefs& out)
{
    for (auto& b : blocks) b.collect(out);
    down.collect(out);
}

DecoderStage::DecoderStage(std::string name, std::int64_t dim, const ModelConfig& cfg)
    : up(name + ".up", dim * 2, dim), fuse(name + ".fuse", dim * 2, dim)
{
    for (std::int64_t i = 0; i < cfg.blocks_per_stage; ++i)
        blocks.emplace_back(cat(name, ".blk", i), stage_kind(cfg), dim, cfg);
}

Tensor DecoderStage::forward(const Tensor& x, const Tensor& skip, const nn::WindowSpec* spec,
                             Cache* cache) const
{
    Tensor u = up.forward(x, cache ? &cache->up : nullptr);
    if (u.dim(0) != skip.dim(0) || u.dim(1) != skip.dim(1) || u.dim(2) != skip.dim(2))
        throw ShapeError(cat("decoder skip mismatch: got ", skip.dim(0), "x", skip.dim(1), "x",
                             skip.dim(2), ", expected ", u.dim(0), "x", u.dim(1), "x", u.dim(2)));
    Tensor c = concat_channels(u, skip);
    Tensor f = fuse.forward(c, cache ? &cache->fuse : nullptr);
    f.set_shape({u.dim(0), u.dim(1), u.dim(2)});
    if (cache) cache->blocks.resize(blocks.size());
    Tensor h = f;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        h = blocks[i].forward(h, spec, nullptr, cache ? &cache->blocks[i] : nullptr);
    return h;
}

std::pair<Tensor, Tensor> DecoderStage::backward(const Tensor& gy, const nn::WindowSpec* spec,
                                                 Cache& cache)
{
    Tensor g = gy;
    for (std::size_t i = blocks.size(); i-- > 0;)
        g = blocks[i].backward(g, spec, cache.blocks[i]);
    Tensor gc = fuse.backward(g, cache.fuse);
    gc.set_shape({gc.dim(0), gy.dim(1), gy.dim(2)});
    auto [gu, gskip] = split_channels(gc, gc.dim(0) / 2);
    Tensor gx = up.backward(gu, cache.up);
    return {std::move(gx), std::move(gskip)};
}

void DecoderStage::init(Rng& rng, double stddev)
{
    up.init(rng, stddev);
    fuse.init(rng, stddev);
    for (auto& b : blocks) b.init(rng, stddev);
}

void DecoderStage::collect(ParamRefs& out)
{
    up.collect(out);
    fuse.collect(out);
    for (auto& b : blocks) b.collect(out);
}

// ---------------------------------------------------------------------------
// ShadowFormerNet
// ---------------------------------------------------------------------------

struct ShadowFormerNet::NetCache {
    nn::Conv2d::Cache embed;
    std::vector<EncoderStage::Cache> enc;
    std::vector<nn::TransformerBlock::Cache> mid;
    std::vector<DecoderStage::Cache> dec;
    nn::Conv2d::Cache out;
    std::vector<std::int64_t> in_shape;
};

ShadowFormerNet::ShadowFormerNet(ShadowFormerNet&&) noexcept = default;
ShadowFormerNet& ShadowFormerNet::operator=(ShadowFormerNet&&) noexcept = default;
ShadowFormerNet::~ShadowFormerNet() = default;

ShadowFormerNet::ShadowFormerNet(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      embed_("embed", cfg.input_channels(), cfg.embed_dim, 3, 1, 1),
      out_conv_("out", cfg.embed_dim, 3, 3, 1, 1)
{
    cfg_.validate();
    for (std::int64_t l = 0; l < cfg.depth; ++l)
        enc_.emplace_back(cat("enc", l), cfg.embed_dim << l, cfg);

    const auto mid_kind = cfg.bottleneck == ModelConfig::Bottleneck::sim
                              ? nn::TransformerBlock::Kind::sim
                              : nn::TransformerBlock::Kind::channel;
    for (std::int64_t i = 0; i < cfg.sim_blocks; ++i)
        mid_.emplace_back(cat("mid", i), mid_kind, cfg.bottleneck_dim(), cfg);

    for (std::int64_t l = cfg.depth - 1; l >= 0; --l)
        dec_.emplace_back(cat("dec", l), cfg.embed_dim << l, cfg);

    Rng rng(seed);
    embed_.init(rng);
    for (auto& s : enc_) s.init(rng);
    for (auto& b : mid_) b.init(rng);
    for (auto& s : dec_) s.init(rng);
    out_conv_.init_zero();  // the initial network is the identity
}

std::vector<Tensor> ShadowFormerNet::bottleneck_reweight(const ShadowMask& mask) const
{
    const Tensor pooled = pool_mask(mask, cfg_.depth);
    const auto spec = nn::make_window_spec(pooled.dim(0), pooled.dim(1), cfg_.window);
    std::vector<Tensor> rw;
    rw.reserve(static_cast<std::size_t>(spec.windows()));
    const auto nw = spec.tokens();
    for (std::int64_t wi = 0; wi < spec.windows(); ++wi) {
        Tensor mvec({nw});
        for (std::int64_t t = 0; t < nw; ++t)
            mvec[t] = pooled[spec.gather[static_cast<std::size_t>(wi * nw + t)]];
        rw.push_back(nn::sia_reweight(nn::correlation_map(mvec), cfg_.sigma));
    }
    return rw;
}

Tensor ShadowFormerNet::forward_impl(const ImageTensor& img, const ShadowMask& mask,
                                     NetCache* cache) const
{
    img.validate();
    mask.validate();
    if (img.channels() != 3) throw ShapeError("network input must be a 3-channel image");
    const auto h = img.height();
    const auto w = img.width();
    if (mask.height() != h || mask.width() != w)
        throw ShapeError(cat("mask ", mask.height(), "x", mask.width(),
                             " does not match image ", h, "x", w));
    cfg_.check_input(h, w);

    // Assemble network input, optionally with the mask as a fourth channel.
    Tensor input({cfg_.input_channels(), h, w});
    std::copy(img.data.data(), img.data.data() + img.data.numel(), input.data());
    if (cfg_.concat_mask_input)
        std::copy(mask.data.data(), mask.data.data() + mask.data.numel(),
                  input.data() + img.data.numel());
    if (cache) cache->in_shape = input.shape();

    Tensor x = embed_.forward(input, cache ? &cache->embed : nullptr);

    // Per-resolution window specs (encoder stages only need them in the
    // window-attention ablation; the bottleneck always does).
    const bool window_stages = cfg_.encoder_attention == ModelConfig::EncoderAttention::window;
    std::vector<nn::WindowSpec> specs;
    for (std::int64_t l = 0; l <= cfg_.depth; ++l) {
        if (l == cfg_.depth || window_stages)
            specs.push_back(nn::make_window_spec(h >> l, w >> l, cfg_.window));
        else
            specs.emplace_back();
    }

    if (cache) cache->enc.resize(enc_.size());
    std::vector<Tensor> skips;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        const auto* spec = window_stages ? &specs[l] : nullptr;
        auto [skip, down] =
            enc_[l].forward(x, spec, cache ? &cache->enc[l] : nullptr);
        skips.push_back(std::move(skip));
        x = std::move(down);
    }

    // Bottleneck.
    std::vector<Tensor> reweight;
    if (cfg_.bottleneck == ModelConfig::Bottleneck::sim) reweight = bottleneck_reweight(mask);
    if (cache) cache->mid.resize(mid_.size());
    for (std::size_t i = 0; i < mid_.size(); ++i) {
        const auto* rw = cfg_.bottleneck == ModelConfig::Bottleneck::sim ? &reweight : nullptr;
        x = mid_[i].forward(x, &specs[static_cast<std::size_t>(cfg_.depth)], rw,
                            cache ? &cache->mid[i] : nullptr);
    }

    if (cache) cache->dec.resize(dec_.size());
    for (std::size_t i = 0; i < dec_.size(); ++i) {
        const auto l = static_cast<std::size_t>(cfg_.depth) - 1 - i;
        const auto* spec = window_stages ? &specs[l] : nullptr;
        x = dec_[i].forward(x, skips[l], spec, cache ? &cache->dec[i] : nullptr);
    }

    Tensor residual = out_conv_.forward(x, cache ? &cache->out : nullptr);
    for (std::int64_t i = 0; i < residual.numel(); ++i) residual[i] += img.data[i];
    return residual;
}

ImageTensor ShadowFormerNet::forward(const ImageTensor& img, const ShadowMask& mask) const
{
    ImageTensor out;
    out.data = forward_impl(img, mask, nullptr);
    return out;
}

Tensor ShadowFormerNet::forward_train(const ImageTensor& img, const ShadowMask& mask)
{
    if (!cache_) cache_ = std::make_unique<NetCache>();
    return forward_impl(img, mask, cache_.get());
}

Tensor ShadowFormerNet::backward(const Tensor& grad_out)
{
    if (!cache_) throw TrainingError("backward() without a prior forward_train()");
    NetCache& c = *cache_;
    const auto h = grad_out.dim(1);
    const auto w = grad_out.dim(2);

    const bool window_stages = cfg_.encoder_attention == ModelConfig::EncoderAttention::window;
    std::vector<nn::WindowSpec> specs;
    for (std::int64_t l = 0; l <= cfg_.depth; ++l) {
        if (l == cfg_.depth || window_stages)
            specs.push_back(nn::make_window_spec(h >> l, w >> l, cfg_.window));
        else
            specs.emplace_back();
    }

    Tensor g = out_conv_.backward(grad_out, c.out);

    std::vector<Tensor> g_skips(static_cast<std::size_t>(cfg_.depth));
    for (std::size_t i = dec_.size(); i-- > 0;) {
        const auto l = static_cast<std::size_t>(cfg_.depth) - 1 - i;
        const auto* spec = window_stages ? &specs[l] : nullptr;
        auto [gx, gskip] = dec_[i].backward(g, spec, c.dec[i]);
        g = std::move(gx);
        g_skips[l] = std::move(gskip);
    }

    for (std::size_t i = mid_.size(); i-- > 0;)
        g = mid_[i].backward(g, &specs[static_cast<std::size_t>(cfg_.depth)], c.mid[i]);

    for (std::size_t l = enc_.size(); l-- > 0;) {
        const auto* spec = window_stages ? &specs[l] : nullptr;
        g = enc_[l].backward(g, g_skips[l], spec, c.enc[l]);
    }

    Tensor g_input = embed_.backward(g, c.embed);

    // Residual connection: dL/dI_s = embedding-path grad + dL/dOutput.
    Tensor g_img({3, h, w});
    std::copy(g_input.data(), g_input.data() + g_img.numel(), g_img.data());
    for (std::int64_t i = 0; i < g_img.numel(); ++i) g_img[i] += grad_out[i];
    return g_img;
}

Tensor ShadowFormerNet::embed(const ImageTensor& img, const ShadowMask& mask) const
{
    img.validate();
    mask.validate();
    const auto h = img.height();
    const auto w = img.width();
    if (mask.height() != h || mask.width() != w) throw ShapeError("mask size mismatch");
    cfg_.check_input(h, w);
    Tensor input({cfg_.input_channels(), h, w});
    std::copy(img.data.data(), img.data.data() + img.data.numel(), input.data());
    if (cfg_.concat_mask_input)
        std::copy(mask.data.data(), mask.data.data() + mask.data.numel(),
                  input.data() + img.data.numel());
    return embed_.forward(input, nullptr);
}

ParamRefs ShadowFormerNet::parameters()
{
    ParamRefs out;
    embed_.collect(out);
    for (auto& s : enc_) s.collect(out);
    for (auto& b : mid_) b.collect(out);
    for (auto& s : dec_) s.collect(out);
    out_conv_.collect(out);
    return out;
}

std::int64_t ShadowFormerNet::param_count() const
{
    auto* self = const_cast<ShadowFormerNet*>(this);
    std::int64_t n = 0;
    for (const auto* p : self->parameters()) n += p->value.numel();
    return n;
}

void ShadowFormerNet::zero_grad()
{
    for (auto* p : parameters()) p->zero_grad();
}

ShadowFormerNet::AttentionMaps ShadowFormerNet::attention_maps(const ImageTensor& img,
                                                               const ShadowMask& mask,
                                                               std::int64_t block_index) const
{
    if (cfg_.bottleneck != ModelConfig::Bottleneck::sim)
        throw ArgumentError("attention maps require a shadow-interaction bottleneck");
    if (block_index < 0 || block_index >= static_cast<std::int64_t>(mid_.size()))
        throw ArgumentError(cat("bottleneck block index out of range: ", block_index));

    img.validate();
    mask.validate();
    const auto h = img.height();
    const auto w = img.width();
    cfg_.check_input(h, w);

    Tensor input({cfg_.input_channels(), h, w});
    std::copy(img.data.data(), img.data.data() + img.data.numel(), input.data());
    if (cfg_.concat_mask_input)
        std::copy(mask.data.data(), mask.data.data() + mask.data.numel(),
                  input.data() + img.data.numel());

    Tensor x = embed_.forward(input, nullptr);
    const bool window_stages = cfg_.encoder_attention == ModelConfig::EncoderAttention::window;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        nn::WindowSpec spec;
        if (window_stages)
            spec = nn::make_window_spec(h >> l, w >> l, cfg_.window);
        x = enc_[l].forward(x, window_stages ? &spec : nullptr, nullptr).second;
    }

    const auto mh = h >> cfg_.depth;
    const auto mw = w >> cfg_.depth;
    const auto spec = nn::make_window_spec(mh, mw, cfg_.window);
    const std::vector<Tensor> reweight = bottleneck_reweight(mask);

    AttentionMaps maps;
    maps.map_h = mh;
    maps.map_w = mw;
    maps.spec = spec;

    for (std::int64_t i = 0; i <= block_index; ++i) {
        if (i < block_index) {
            x = mid_[static_cast<std::size_t>(i)].forward(x, &spec, &reweight, nullptr);
            continue;
        }
        nn::TransformerBlock::Cache cache;
        const auto& block = mid_[static_cast<std::size_t>(i)];
        x = block.forward(x, &spec, &reweight, &cache);

        const auto nw = spec.tokens();
        const auto heads = block.attn->heads();
        for (std::int64_t wi = 0; wi < spec.windows(); ++wi) {
            Tensor avg({nw, nw});
            for (std::int64_t hd = 0; hd < heads; ++hd) {
                const Tensor& a = cache.attn.attn[static_cast<std::size_t>(wi * heads + hd)];
                const Tensor& rw = reweight[static_cast<std::size_t>(wi)];
                for (std::int64_t k = 0; k < avg.numel(); ++k) avg[k] += a[k] * rw[k];
            }
            for (std::int64_t k = 0; k < avg.numel(); ++k) avg[k] /= static_cast<double>(heads);
            maps.attn.push_back(std::move(avg));
        }
    }
    return maps;
}

}  // namespace sf
