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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shadowformer/image.hpp"
#include "shadowformer/nn.hpp"

namespace sf {

/// Network hyperparameters. The encoder doubles channels and halves the
/// spatial size at each of the `depth` stages, so stage l features are
/// (2^l * embed_dim, H/2^l, W/2^l).
struct ModelConfig {
    std::int64_t embed_dim = 32;  // C
    std::int64_t depth = 3;       // L (number of down/upsampling stages)
    std::int64_t window = 8;      // P, attention window side
    double sigma = 0.2;           // attention reweighting strength
    std::int64_t heads = 1;
    double mlp_ratio = 4.0;
    std::int64_t se_reduction = 4;
    std::int64_t blocks_per_stage = 2;
    std::int64_t sim_blocks = 2;
    bool concat_mask_input = true;  // mask appended as a fourth input channel

    /// Encoder/decoder block flavor: channel attention by default; window
    /// spatial attention is the ablation variant.
    enum class EncoderAttention { channel, window };
    /// Bottleneck flavor: shadow-interaction blocks by default; plain
    /// channel-attention blocks as the ablation. An unweighted-attention
    /// bottleneck is sigma = 0 of the sim flavor.
    enum class Bottleneck { sim, channel_only };
    EncoderAttention encoder_attention = EncoderAttention::channel;
    Bottleneck bottleneck = Bottleneck::sim;

    static ModelConfig small_preset();  // C=24, L=2
    static ModelConfig large_preset();  // C=32, L=3
    static ModelConfig toy_preset();    // C=16, L=2, P=8

    std::int64_t input_channels() const { return concat_mask_input ? 4 : 3; }
    std::int64_t bottleneck_dim() const { return embed_dim << depth; }

    void validate() const;
    /// Verifies H, W are divisible by 2^depth * window; the error names the
    /// padding that would be required.
    void check_input(std::int64_t h, std::int64_t w) const;

    bool operator==(const ModelConfig&) const = default;
};

/// Max-pools the mask by a factor 2^levels: a cell containing any shadow
/// pixel becomes a shadow patch.
Tensor pool_mask(const ShadowMask& mask, std::int64_t levels);

namespace nn {

/// LN -> two position-wise linear layers with GELU between -> residual.
class FeedForward {
public:
    FeedForward(std::string name, std::int64_t dim, double mlp_ratio);

    struct Cache {
        ChannelLayerNorm::Cache ln;
        PointwiseLinear::Cache fc1, fc2;
        GeluCache act;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gy, const Cache& cache);
    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    ChannelLayerNorm ln;
    PointwiseLinear fc1, fc2;
};

/// One pre-norm transformer block over a (C, H, W) map. Three flavors share
/// the residual + feed-forward skeleton and differ in the mixing branch:
///   channel: LN -> channel attention
///   window:  LN -> window attention (unweighted)
///   sim:     LN -> channel attention -> window attention reweighted by the
///            shadow/non-shadow correlation map
class TransformerBlock {
public:
    enum class Kind { channel, window, sim };

    TransformerBlock(std::string name, Kind kind, std::int64_t dim, const ModelConfig& cfg);

    struct Cache {
        ChannelLayerNorm::Cache ln1;
        SqueezeExcite::Cache se;
        WindowAttention::Cache attn;
        FeedForward::Cache ff;
        std::vector<std::int64_t> shape;
    };

    /// spec/reweight are required for the window and sim kinds; reweight may
    /// be null for the window kind (all-ones is used).
    Tensor forward(const Tensor& x, const WindowSpec* spec,
                   const std::vector<Tensor>* reweight, Cache* cache) const;
    Tensor backward(const Tensor& gy, const WindowSpec* spec, const Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(ParamRefs& out);

    Kind kind;
    ChannelLayerNorm ln1;
    std::optional<SqueezeExcite> se;
    std::optional<WindowAttention> attn;
    FeedForward ff;
};

}  // namespace nn

/// blocks_per_stage transformer blocks followed by a stride-2 4x4
/// convolution that doubles the channel count.
class EncoderStage {
public:
    EncoderStage(std::string name, std::int64_t dim, const ModelConfig& cfg);

    struct Cache {
        std::vector<nn::TransformerBlock::Cache> blocks;
        nn::Conv2d::Cache down;
    };

    /// Returns (skip, downsampled); `skip` is the pre-downsample feature.
    std::pair<Tensor, Tensor> forward(const Tensor& x, const nn::WindowSpec* spec,
                                      Cache* cache) const;
    /// g_down arrives from the next stage, g_skip from the decoder skip.
    Tensor backward(const Tensor& g_down, const Tensor& g_skip, const nn::WindowSpec* spec,
                    Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(nn::ParamRefs& out);

    std::vector<nn::TransformerBlock> blocks;
    nn::Conv2d down;
};

/// 2x2 transposed-convolution upsampling (halving channels), concatenation
/// with the encoder skip, 1x1 projection back to the stage width, then
/// blocks_per_stage transformer blocks.
class DecoderStage {
public:
    DecoderStage(std::string name, std::int64_t dim, const ModelConfig& cfg);

    struct Cache {
        nn::ConvTranspose2::Cache up;
        nn::PointwiseLinear::Cache fuse;
        std::vector<nn::TransformerBlock::Cache> blocks;
    };

    Tensor forward(const Tensor& x, const Tensor& skip, const nn::WindowSpec* spec,
                   Cache* cache) const;
    /// Returns (grad wrt x, grad wrt skip).
    std::pair<Tensor, Tensor> backward(const Tensor& gy, const nn::WindowSpec* spec,
                                       Cache& cache);

    void init(Rng& rng, double stddev = 0.02);
    void collect(nn::ParamRefs& out);

    nn::ConvTranspose2 up;
    nn::PointwiseLinear fuse;
    std::vector<nn::TransformerBlock> blocks;
};

/// The shadow-removal network: 3x3 embedding convolution, channel-attention
/// encoder, shadow-interaction bottleneck, decoder with skip connections,
/// and a zero-initialized output projection so that the initial model is
/// the identity (the network predicts a residual added to its input).
class ShadowFormerNet {
public:
    ShadowFormerNet(const ModelConfig& cfg, std::uint64_t seed);
    ShadowFormerNet(ShadowFormerNet&&) noexcept;
    ShadowFormerNet& operator=(ShadowFormerNet&&) noexcept;
    ~ShadowFormerNet();

    /// Inference forward; no activation caching, safe to call concurrently.
    /// Returns the unclamped restored image I_s + residual.
    ImageTensor forward(const ImageTensor& img, const ShadowMask& mask) const;

    /// Training forward; caches activations for backward().
    Tensor forward_train(const ImageTensor& img, const ShadowMask& mask);

    /// Propagates dLoss/dOutput, accumulating parameter gradients.
    /// Returns dLoss/dInputImage.
    Tensor backward(const Tensor& grad_out);

    /// Embedded feature X_0 (embed_dim, H, W).
    Tensor embed(const ImageTensor& img, const ShadowMask& mask) const;

    nn::ParamRefs parameters();
    std::int64_t param_count() const;
    void zero_grad();

    const ModelConfig& config() const { return cfg_; }

    /// Head-averaged reweighted attention matrices of one bottleneck block,
    /// for correlation-map visualization. `attn[w]` is (Nw, Nw).
    struct AttentionMaps {
        std::int64_t map_h = 0, map_w = 0;
        nn::WindowSpec spec;
        std::vector<Tensor> attn;
    };
    AttentionMaps attention_maps(const ImageTensor& img, const ShadowMask& mask,
                                 std::int64_t block_index) const;

private:
    struct NetCache;

    Tensor forward_impl(const ImageTensor& img, const ShadowMask& mask, NetCache* cache) const;
    std::vector<Tensor> bottleneck_reweight(const ShadowMask& mask) const;

    ModelConfig cfg_;
    nn::Conv2d embed_;
    std::vector<EncoderStage> enc_;
    std::vector<nn::TransformerBlock> mid_;
    std::vector<DecoderStage> dec_;  // stored deepest-first
    nn::Conv2d out_conv_;
    std::unique_ptr<NetCache> cache_;
};

}  // namespace sf
