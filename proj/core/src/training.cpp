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

#include "shadowformer/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace sf {

TrainConfig TrainConfig::full_scale()
{
    TrainConfig cfg;
    cfg.crop_size = 256;
    cfg.total_steps = 500000;
    cfg.batch_size = 4;
    return cfg;
}

void TrainConfig::validate() const
{
    if (lr_final > lr_init) throw ArgumentError("lr_final must be <= lr_init");
    if (total_steps < 0) throw ArgumentError("total_steps must be >= 0");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ArgumentError("betas must lie in [0,1)");
    if (weight_decay < 0) throw ArgumentError("weight_decay must be >= 0");
}

double l1_loss(const Tensor& pred, const Tensor& gt)
{
    if (!pred.same_shape(gt)) throw ShapeError("l1_loss: shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred[i] - gt[i]);
    return acc / static_cast<double>(pred.numel());
}

Tensor l1_loss_grad(const Tensor& pred, const Tensor& gt, double scale)
{
    if (!pred.same_shape(gt)) throw ShapeError("l1_loss_grad: shape mismatch");
    Tensor g(pred.shape());
    const double s = scale / static_cast<double>(pred.numel());
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - gt[i];
        g[i] = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
    }
    return g;
}

double cosine_lr(std::int64_t step, const TrainConfig& cfg)
{
    if (step < 0 || step > cfg.total_steps)
        throw ArgumentError(cat("step ", step, " outside [0, ", cfg.total_steps, "]"));
    if (cfg.total_steps == 0) return cfg.lr_init;
    const double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.lr_final +
           0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * t));
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

AdamW::AdamW(nn::ParamRefs params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay),
      clip_(cfg.grad_clip_norm)
{
    std::int64_t n = 0;
    for (const auto* p : params_) n += p->value.numel();
    m_.assign(static_cast<std::size_t>(n), 0.0);
    v_.assign(static_cast<std::size_t>(n), 0.0);
}

void AdamW::zero_grad()
{
    for (auto* p : params_) p->zero_grad();
}

void AdamW::step(double lr)
{
    if (clip_ > 0.0) {
        double sq = 0.0;
        for (const auto* p : params_)
            for (std::int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
        const double norm = std::sqrt(sq);
        if (norm > clip_) {
            const double scale = clip_ / norm;
            for (auto* p : params_)
                for (std::int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= scale;
        }
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto* p : params_) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i, ++k) {
            const double g = p->grad[i];
            m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
            v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g * g;
            const double mhat = m_[k] / bc1;
            const double vhat = v_[k] / bc2;
            p->value[i] =
                p->value[i] * (1.0 - lr * weight_decay_) - lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::restore(std::int64_t t, std::vector<double> m, std::vector<double> v)
{
    if (m.size() != m_.size() || v.size() != v_.size())
        throw ArgumentError("optimizer state size mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Steps and loop
// ---------------------------------------------------------------------------

double train_step(ShadowFormerNet& net, AdamW& opt, const std::vector<Triplet>& batch, double lr)
{
    if (batch.empty()) throw ArgumentError("empty batch");
    opt.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& item : batch) {
        Tensor out = net.forward_train(item.shadow, item.mask);
        loss += l1_loss(out, item.shadow_free.data) * inv_b;
        Tensor g = l1_loss_grad(out, item.shadow_free.data, inv_b);
        net.backward(g);
    }
    opt.step(lr);
    return loss;
}

std::vector<LossRecord> train_loop(ShadowFormerNet& net, BatchStream& stream,
                                   const TrainConfig& cfg, const CheckpointHook& hook)
{
    cfg.validate();
    AdamW opt(net.parameters(), cfg);
    std::vector<LossRecord> history;
    history.reserve(static_cast<std::size_t>(cfg.total_steps));

    for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
        const double lr = cosine_lr(step, cfg);
        const auto batch = stream.next();
        const double loss = train_step(net, opt, batch, lr);
        if (!std::isfinite(loss))
            throw TrainingError(cat("non-finite loss at step ", step));
        history.push_back({step, lr, loss});
        if (hook && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
            step + 1 < cfg.total_steps)
            hook(step + 1, net, opt, stream);
    }
    if (hook) hook(cfg.total_steps, net, opt, stream);
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

std::vector<double> extract_weights(ShadowFormerNet& net)
{
    std::vector<double> w;
    for (const auto* p : net.parameters())
        w.insert(w.end(), p->value.data(), p->value.data() + p->value.numel());
    return w;
}

Checkpoint snapshot(ShadowFormerNet& net, const AdamW* opt, std::int64_t step,
                    const BatchStream* stream)
{
    Checkpoint cp;
    cp.model = net.config();
    cp.step = step;
    cp.weights = extract_weights(net);
    if (opt) {
        cp.adam_t = opt->t();
        cp.adam_m = opt->moment1();
        cp.adam_v = opt->moment2();
    }
    if (stream) {
        cp.stream_seed = stream->seed();
        cp.stream_epoch = stream->epoch();
        cp.stream_pos = stream->position();
    }
    return cp;
}

namespace {

constexpr char kMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void put_i64(std::ofstream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_u64(std::ofstream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ofstream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_vec(std::ofstream& os, const std::vector<double>& v)
{
    put_i64(os, static_cast<std::int64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::int64_t get_i64(std::ifstream& is)
{
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::uint64_t get_u64(std::ifstream& is)
{
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::ifstream& is)
{
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::vector<double> get_vec(std::ifstream& is)
{
    const auto n = get_i64(is);
    if (n < 0) throw FormatError("corrupt checkpoint: negative array length");
    std::vector<double> v(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    return v;
}

std::string config_manifest(const ModelConfig& m, std::int64_t param_count, std::int64_t step)
{
    std::string s;
    s += cat("embed_dim: ", m.embed_dim, "\n");
    s += cat("depth: ", m.depth, "\n");
    s += cat("window: ", m.window, "\n");
    s += cat("sigma: ", m.sigma, "\n");
    s += cat("heads: ", m.heads, "\n");
    s += cat("mlp_ratio: ", m.mlp_ratio, "\n");
    s += cat("se_reduction: ", m.se_reduction, "\n");
    s += cat("blocks_per_stage: ", m.blocks_per_stage, "\n");
    s += cat("sim_blocks: ", m.sim_blocks, "\n");
    s += cat("concat_mask_input: ", m.concat_mask_input ? 1 : 0, "\n");
    s += cat("encoder_attention: ",
             m.encoder_attention == ModelConfig::EncoderAttention::channel ? "channel" : "window",
             "\n");
    s += cat("bottleneck: ",
             m.bottleneck == ModelConfig::Bottleneck::sim ? "sim" : "channel_only", "\n");
    s += cat("param_count: ", param_count, "\n");
    s += cat("step: ", step, "\n");
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(cat("cannot write checkpoint: ", path.string()));
    os.write(kMagic, 8);
    const auto& m = cp.model;
    put_i64(os, m.embed_dim);
    put_i64(os, m.depth);
    put_i64(os, m.window);
    put_f64(os, m.sigma);
    put_i64(os, m.heads);
    put_f64(os, m.mlp_ratio);
    put_i64(os, m.se_reduction);
    put_i64(os, m.blocks_per_stage);
    put_i64(os, m.sim_blocks);
    put_i64(os, m.concat_mask_input ? 1 : 0);
    put_i64(os, m.encoder_attention == ModelConfig::EncoderAttention::channel ? 0 : 1);
    put_i64(os, m.bottleneck == ModelConfig::Bottleneck::sim ? 0 : 1);
    put_i64(os, cp.step);
    put_vec(os, cp.weights);
    put_i64(os, cp.adam_t);
    put_vec(os, cp.adam_m);
    put_vec(os, cp.adam_v);
    put_u64(os, cp.stream_seed);
    put_i64(os, cp.stream_epoch);
    put_i64(os, cp.stream_pos);
    if (!os) throw IoError(cat("short write: ", path.string()));
    os.close();

    std::ofstream manifest(path.string() + ".txt");
    if (!manifest) throw IoError(cat("cannot write checkpoint manifest: ", path.string(), ".txt"));
    manifest << config_manifest(cp.model, static_cast<std::int64_t>(cp.weights.size()), cp.step);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(cat("cannot open checkpoint: ", path.string()));
    char magic[8] = {};
    is.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError(cat("not a checkpoint file: ", path.string()));

    Checkpoint cp;
    auto& m = cp.model;
    m.embed_dim = get_i64(is);
    m.depth = get_i64(is);
    m.window = get_i64(is);
    m.sigma = get_f64(is);
    m.heads = get_i64(is);
    m.mlp_ratio = get_f64(is);
    m.se_reduction = get_i64(is);
    m.blocks_per_stage = get_i64(is);
    m.sim_blocks = get_i64(is);
    m.concat_mask_input = get_i64(is) != 0;
    m.encoder_attention = get_i64(is) == 0 ? ModelConfig::EncoderAttention::channel
                                           : ModelConfig::EncoderAttention::window;
    m.bottleneck =
        get_i64(is) == 0 ? ModelConfig::Bottleneck::sim : ModelConfig::Bottleneck::channel_only;
    cp.step = get_i64(is);
    cp.weights = get_vec(is);
    cp.adam_t = get_i64(is);
    cp.adam_m = get_vec(is);
    cp.adam_v = get_vec(is);
    cp.stream_seed = get_u64(is);
    cp.stream_epoch = get_i64(is);
    cp.stream_pos = get_i64(is);
    if (!is) throw FormatError(cat("truncated checkpoint: ", path.string()));
    return cp;
}

void apply_checkpoint(ShadowFormerNet& net, const Checkpoint& cp)
{
    if (!(net.config() == cp.model))
        throw ArgumentError("checkpoint model configuration does not match the network");
    if (net.param_count() != static_cast<std::int64_t>(cp.weights.size()))
        throw ArgumentError(cat("checkpoint holds ", cp.weights.size(), " weights, network has ",
                                net.param_count()));
    std::size_t k = 0;
    for (auto* p : net.parameters())
        for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = cp.weights[k++];
}

ShadowFormerNet restore_network(const Checkpoint& cp)
{
    ShadowFormerNet net(cp.model, 0);
    apply_checkpoint(net, cp);
    return net;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history)
{
    std::ofstream os(path);
    if (!os) throw IoError(cat("cannot write loss history: ", path.string()));
    os << "step,lr,loss\n";
    char line[96];
    for (const auto& r : history) {
        std::snprintf(line, sizeof(line), "%lld,%.10e,%.10e\n", static_cast<long long>(r.step),
                      r.lr, r.loss);
        os << line;
    }
}

}  // namespace sf
