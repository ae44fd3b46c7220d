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

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "shadowformer/datasets.hpp"
#include "shadowformer/model.hpp"

namespace sf {

struct TrainConfig {
    double lr_init = 2e-4;
    double lr_final = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.02;
    double adam_eps = 1e-8;
    std::int64_t total_steps = 2000;
    std::int64_t batch_size = 4;
    std::int64_t crop_size = 64;
    std::uint64_t seed = 0;
    bool augment_flips = true;
    double grad_clip_norm = 0.0;  // 0 disables clipping
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only

    /// Full-scale settings (256 crop, long schedule); desk defaults stay above.
    static TrainConfig full_scale();

    void validate() const;
};

/// Mean absolute difference over all elements.
double l1_loss(const Tensor& pred, const Tensor& gt);

/// d(l1_loss)/d(pred), scaled by `scale`.
Tensor l1_loss_grad(const Tensor& pred, const Tensor& gt, double scale = 1.0);

/// lr(step) = lr_final + (lr_init - lr_final)/2 * (1 + cos(pi*step/total)).
double cosine_lr(std::int64_t step, const TrainConfig& cfg);

/// Adam with decoupled weight decay: the decay is applied directly to the
/// weights, not through the gradient.
class AdamW {
public:
    AdamW(nn::ParamRefs params, const TrainConfig& cfg);

    void zero_grad();
    void step(double lr);

    std::int64_t t() const { return t_; }
    const std::vector<double>& moment1() const { return m_; }
    const std::vector<double>& moment2() const { return v_; }
    void restore(std::int64_t t, std::vector<double> m, std::vector<double> v);

private:
    nn::ParamRefs params_;
    double beta1_, beta2_, eps_, weight_decay_, clip_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

/// One optimization step over a batch; returns the mean batch loss.
double train_step(ShadowFormerNet& net, AdamW& opt, const std::vector<Triplet>& batch,
                  double lr);

struct LossRecord {
    std::int64_t step;
    double lr;
    double loss;
};

/// Invoked after a step when a periodic or final checkpoint should be
/// written.
using CheckpointHook =
    std::function<void(std::int64_t step, ShadowFormerNet& net, const AdamW& opt,
                       const BatchStream& stream)>;

/// Runs `total_steps` steps of l1 training. Fully reproducible from the
/// configuration and stream seed. Throws TrainingError (naming the step) on
/// a non-finite loss.
std::vector<LossRecord> train_loop(ShadowFormerNet& net, BatchStream& stream,
                                   const TrainConfig& cfg,
                                   const CheckpointHook& hook = nullptr);

/// Serialized training state. save -> load -> save round-trips bitwise.
struct Checkpoint {
    ModelConfig model;
    std::int64_t step = 0;
    std::vector<double> weights;
    // Optimizer state; empty when the checkpoint holds only weights.
    std::int64_t adam_t = 0;
    std::vector<double> adam_m, adam_v;
    // Data-stream cursor.
    std::uint64_t stream_seed = 0;
    std::int64_t stream_epoch = 0;
    std::int64_t stream_pos = 0;
};

Checkpoint snapshot(ShadowFormerNet& net, const AdamW* opt, std::int64_t step,
                    const BatchStream* stream);

/// Writes the binary blob plus a plain-text sidecar `<path>.txt` listing
/// every model-config field, the parameter count, and the training step.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a network from the checkpoint and installs its weights; verifies
/// the parameter count.
ShadowFormerNet restore_network(const Checkpoint& cp);

/// Copies weights into an existing network; the configuration must be equal.
void apply_checkpoint(ShadowFormerNet& net, const Checkpoint& cp);

std::vector<double> extract_weights(ShadowFormerNet& net);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace sf
