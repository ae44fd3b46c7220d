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

#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "commands.hpp"

namespace {

void add_model_options(CLI::App* cmd, sfcli::ModelArgs& args)
{
    cmd->add_option("--variant", args.variant, "Model preset: small, large, or toy")
        ->check(CLI::IsMember({"small", "large", "toy"}));
    cmd->add_option("--sigma", args.sigma, "Attention reweighting strength in [0,1)");
    cmd->add_option("--window", args.window, "Attention window size P");
    cmd->add_option("--heads", args.heads, "Attention heads");
    cmd->add_flag("--no-mask-channel", args.no_mask_channel,
                  "Do not append the mask as a fourth input channel");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"shadow removal: synthesis, training, evaluation, visualization"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Configuration file (key = value, [subcommand] sections)");
    app.allow_config_extras(false);

    sfcli::SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic shadow dataset");
    synth_cmd->add_option("--n", synth.n, "Number of triplets");
    synth_cmd->add_option("--size", synth.size, "Image side length");
    synth_cmd->add_option("--seed", synth.seed, "Base seed");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--split", synth.split, "Split folder prefix (train or test)")
        ->check(CLI::IsMember({"train", "test"}));
    synth_cmd->add_option("--feather", synth.feather, "Penumbra feather width in pixels");
    synth_cmd->add_option("--lsf-perturb", synth.lsf_perturb,
                          "Global illumination perturbation of the shadow-free image");

    sfcli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--dataset-root", train.dataset_root, "Dataset root directory")
        ->required();
    train_cmd->add_option("--layout", train.layout, "Dataset layout")
        ->check(CLI::IsMember({"istd", "istd_plus", "srd", "synthetic"}));
    train_cmd->add_option("--out", train.out, "Output directory (checkpoints, loss.csv)");
    train_cmd->add_option("--seed", train.seed, "Seed for all randomness");
    train_cmd->add_option("--steps", train.steps, "Total optimization steps");
    train_cmd->add_option("--batch", train.batch, "Batch size");
    train_cmd->add_option("--crop", train.crop, "Square crop size (0 = full images)");
    train_cmd->add_option("--lr", train.lr, "Initial learning rate");
    train_cmd->add_option("--lr-final", train.lr_final, "Final learning rate");
    train_cmd->add_option("--weight-decay", train.weight_decay, "Decoupled weight decay");
    train_cmd->add_option("--grad-clip", train.grad_clip, "Max gradient norm (0 = off)");
    train_cmd->add_flag("--no-augment", train.no_augment, "Disable flip augmentation");
    train_cmd->add_option("--checkpoint-every", train.checkpoint_every,
                          "Steps between periodic checkpoints (0 = final only)");
    add_model_options(train_cmd, train.model);

    sfcli::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate results on a test split");
    eval_cmd->add_option("--dataset-root", eval.dataset_root, "Dataset root directory")
        ->required();
    eval_cmd->add_option("--layout", eval.layout, "Dataset layout")
        ->check(CLI::IsMember({"istd", "istd_plus", "srd", "synthetic"}));
    eval_cmd->add_option("--split", eval.split, "Split to evaluate")
        ->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to run inference with");
    eval_cmd->add_option("--results", eval.results,
                         "Directory of precomputed result images (skips inference)");
    eval_cmd->add_option("--out", eval.out, "Output directory (results, report)");
    eval_cmd->add_option("--resolution", eval.resolution, "Metric resolution: 256 or original")
        ->check(CLI::IsMember({"256", "original"}));
    eval_cmd->add_option("--rmse-mode", eval.rmse_mode, "LAB error convention")
        ->check(CLI::IsMember({"mae", "rms"}));

    sfcli::InferArgs infer;
    auto* infer_cmd = app.add_subcommand("infer", "Restore a single image");
    infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint")->required();
    infer_cmd->add_option("--image", infer.image, "Shadow image (PNG/JPEG)")->required();
    infer_cmd->add_option("--mask", infer.mask, "Shadow mask image")->required();
    infer_cmd->add_option("--out", infer.out, "Output PNG path");
    infer_cmd->add_flag("--no-clamp", infer.no_clamp, "Keep the raw unclamped output");

    sfcli::AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare ablation variants");
    ablate_cmd->add_option("--dataset-root", ablate.dataset_root, "Dataset root directory")
        ->required();
    ablate_cmd->add_option("--layout", ablate.layout, "Dataset layout")
        ->check(CLI::IsMember({"istd", "istd_plus", "srd", "synthetic"}));
    ablate_cmd->add_option("--out", ablate.out, "Output directory");
    ablate_cmd->add_option("--seed", ablate.seed, "Shared seed for all variants");
    ablate_cmd->add_option("--steps", ablate.steps, "Training steps per variant");
    ablate_cmd->add_option("--batch", ablate.batch, "Batch size");
    ablate_cmd->add_option("--crop", ablate.crop, "Crop size");
    ablate_cmd->add_option("--variants", ablate.variants,
                           "Comma list of variants to run (1=SA enc/dec, 2=CA-only bottleneck, "
                           "3=unweighted bottleneck, 4=full)");
    add_model_options(ablate_cmd, ablate.model);

    sfcli::VizAttnArgs viz;
    auto* viz_cmd = app.add_subcommand("viz-attn", "Render attention heatmaps for key points");
    viz_cmd->add_option("--checkpoint", viz.checkpoint, "Checkpoint")->required();
    viz_cmd->add_option("--image", viz.image, "Shadow image")->required();
    viz_cmd->add_option("--mask", viz.mask, "Shadow mask image")->required();
    viz_cmd->add_option("--out", viz.out, "Output directory");
    viz_cmd->add_option("--point", viz.points, "Key point as x,y (repeatable)")->required();
    viz_cmd->add_option("--sim-block", viz.sim_block,
                        "Bottleneck block to visualize (default: last)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return sfcli::cmd_synth(synth);
        if (train_cmd->parsed()) return sfcli::cmd_train(train);
        if (eval_cmd->parsed()) return sfcli::cmd_eval(eval);
        if (infer_cmd->parsed()) return sfcli::cmd_infer(infer);
        if (ablate_cmd->parsed()) return sfcli::cmd_ablate(ablate);
        if (viz_cmd->parsed()) return sfcli::cmd_viz_attn(viz);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
