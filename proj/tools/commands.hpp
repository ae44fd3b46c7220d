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

#include <cstdint>
#include <string>
#include <vector>

namespace sfcli {

struct SynthArgs {
    std::int64_t n = 8;
    std::int64_t size = 64;
    std::uint64_t seed = 0;
    std::string out;
    std::string split = "train";
    double feather = 0.0;
    double lsf_perturb = 0.0;
};

struct ModelArgs {
    std::string variant = "toy";  // small | large | toy
    double sigma = 0.2;
    std::int64_t window = 8;
    std::int64_t heads = 1;
    bool no_mask_channel = false;
};

struct TrainArgs {
    std::string dataset_root;
    std::string layout = "synthetic";
    std::string out = "run";
    std::uint64_t seed = 0;
    std::int64_t steps = 2000;
    std::int64_t batch = 4;
    std::int64_t crop = 64;
    double lr = 2e-4;
    double lr_final = 1e-6;
    double weight_decay = 0.02;
    double grad_clip = 0.0;
    bool no_augment = false;
    std::int64_t checkpoint_every = 0;
    ModelArgs model;
};

struct EvalArgs {
    std::string dataset_root;
    std::string layout = "synthetic";
    std::string split = "test";
    std::string checkpoint;
    std::string results;  // pre-computed result images; skips inference
    std::string out = "eval_out";
    std::string resolution = "original";  // "256" or "original"
    std::string rmse_mode = "mae";
};

struct InferArgs {
    std::string checkpoint;
    std::string image;
    std::string mask;
    std::string out = "restored.png";
    bool no_clamp = false;
};

struct AblateArgs {
    std::string dataset_root;
    std::string layout = "synthetic";
    std::string out = "ablation";
    std::uint64_t seed = 0;
    std::int64_t steps = 200;
    std::int64_t batch = 4;
    std::int64_t crop = 64;
    std::string variants = "1,2,3,4";
    ModelArgs model;
};

struct VizAttnArgs {
    std::string checkpoint;
    std::string image;
    std::string mask;
    std::string out = "viz";
    std::vector<std::string> points;  // "x,y"
    std::int64_t sim_block = -1;      // -1 = last
};

int cmd_synth(const SynthArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_infer(const InferArgs& args);
int cmd_ablate(const AblateArgs& args);
int cmd_viz_attn(const VizAttnArgs& args);

}  // namespace sfcli
