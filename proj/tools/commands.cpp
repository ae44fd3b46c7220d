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

#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "shadowformer/metrics.hpp"
#include "shadowformer/retinex.hpp"
#include "shadowformer/training.hpp"

namespace sfcli {

namespace fs = std::filesystem;
using namespace sf;

namespace {

ModelConfig build_model_config(const ModelArgs& args)
{
    ModelConfig cfg;
    if (args.variant == "small") {
        cfg = ModelConfig::small_preset();
    } else if (args.variant == "large") {
        cfg = ModelConfig::large_preset();
    } else if (args.variant == "toy") {
        cfg = ModelConfig::toy_preset();
    } else {
        throw ArgumentError(cat("unknown variant: ", args.variant));
    }
    cfg.sigma = args.sigma;
    cfg.window = args.window;
    cfg.heads = args.heads;
    cfg.concat_mask_input = !args.no_mask_channel;
    cfg.validate();
    return cfg;
}

DatasetSpec build_dataset_spec(const std::string& root, const std::string& layout, Split split)
{
    DatasetSpec spec;
    spec.root = root;
    spec.layout = layout_from_string(layout);
    spec.split = split;
    return spec;
}

// Runs inference over the records, writing one 8-bit PNG per record id.
void run_inference(const ShadowFormerNet& net, const std::vector<TripletRecord>& records,
                   const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    for (const auto& rec : records) {
        const Triplet t = load_triplet(rec);
        const ImageTensor restored = clamp_output(net.forward(t.shadow, t.mask));
        save_png(restored, out_dir / (rec.id + ".png"));
    }
}

std::int64_t resolution_of(const std::string& s)
{
    if (s == "original") return 0;
    if (s == "256") return 256;
    throw ArgumentError(cat("resolution must be 256 or original, got ", s));
}

}  // namespace

int cmd_synth(const SynthArgs& args)
{
    if (args.out.empty()) throw ArgumentError("--out is required");
    SceneParams params;
    params.feather_px = args.feather;
    params.lsf_perturbation = args.lsf_perturb;
    const DatasetManifest manifest =
        generate_dataset(args.n, args.size, args.size, args.seed, args.out, args.split, params);

    double cov_lo = 1.0, cov_hi = 0.0;
    for (const auto& item : manifest.items) {
        cov_lo = std::min(cov_lo, item.coverage);
        cov_hi = std::max(cov_hi, item.coverage);
    }
    std::cout << "wrote " << manifest.items.size() << " triplets (" << args.size << "x"
              << args.size << ") to " << args.out << " [split " << args.split << "]";
    if (!manifest.items.empty())
        std::cout << ", mask coverage " << cov_lo << " .. " << cov_hi;
    std::cout << "\n";
    return 0;
}

int cmd_train(const TrainArgs& args)
{
    if (args.dataset_root.empty()) throw ArgumentError("--dataset-root is required");
    const ModelConfig mcfg = build_model_config(args.model);

    TrainConfig tcfg;
    tcfg.lr_init = args.lr;
    tcfg.lr_final = args.lr_final;
    tcfg.weight_decay = args.weight_decay;
    tcfg.total_steps = args.steps;
    tcfg.batch_size = args.batch;
    tcfg.crop_size = args.crop;
    tcfg.seed = args.seed;
    tcfg.augment_flips = !args.no_augment;
    tcfg.grad_clip_norm = args.grad_clip;
    tcfg.checkpoint_every = args.checkpoint_every;
    tcfg.validate();

    const auto records =
        scan(build_dataset_spec(args.dataset_root, args.layout, Split::train));
    std::cout << "dataset: " << records.size() << " training triplets\n";

    ShadowFormerNet net(mcfg, derive_seed(args.seed, 1));
    std::cout << "model: variant " << args.model.variant << ", parameters " << net.param_count()
              << "\n";

    BatchStream stream(records, tcfg.batch_size, tcfg.crop_size, derive_seed(args.seed, 2),
                       tcfg.augment_flips);

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    const auto hook = [&](std::int64_t step, ShadowFormerNet& n, const AdamW& opt,
                          const BatchStream& s) {
        const Checkpoint cp = snapshot(n, &opt, step, &s);
        const fs::path path = step == tcfg.total_steps
                                  ? out_dir / "checkpoint.sfckpt"
                                  : out_dir / cat("checkpoint_step", step, ".sfckpt");
        save_checkpoint(path, cp);
    };
    const auto history = train_loop(net, stream, tcfg, hook);
    write_loss_csv(out_dir / "loss.csv", history);

    if (!history.empty()) {
        std::cout << "first loss " << history.front().loss << ", final loss "
                  << history.back().loss << "\n";
    }
    std::cout << "checkpoint: " << (out_dir / "checkpoint.sfckpt").string() << "\n";
    std::cout << "loss history: " << (out_dir / "loss.csv").string() << "\n";
    return 0;
}

int cmd_eval(const EvalArgs& args)
{
    if (args.dataset_root.empty()) throw ArgumentError("--dataset-root is required");
    const DatasetSpec spec = build_dataset_spec(
        args.dataset_root, args.layout, args.split == "train" ? Split::train : Split::test);
    const auto convention = rmse_convention_from_string(args.rmse_mode);
    const auto resolution = resolution_of(args.resolution);

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    fs::path results_dir;
    if (!args.results.empty()) {
        results_dir = args.results;
    } else {
        if (args.checkpoint.empty())
            throw ArgumentError("either --checkpoint or --results is required");
        const Checkpoint cp = load_checkpoint(args.checkpoint);
        const ShadowFormerNet net = restore_network(cp);
        results_dir = out_dir / "results";
        run_inference(net, scan(spec), results_dir);
    }

    const MetricsReport report = evaluate_dataset(results_dir, spec, convention, resolution);
    const std::string table = report.to_table();
    std::cout << table;

    std::ofstream(out_dir / "report.txt") << table;
    std::ofstream(out_dir / "report.csv") << report.to_csv();
    return 0;
}

int cmd_infer(const InferArgs& args)
{
    if (args.checkpoint.empty() || args.image.empty() || args.mask.empty())
        throw ArgumentError("--checkpoint, --image and --mask are required");
    const Checkpoint cp = load_checkpoint(args.checkpoint);
    const ShadowFormerNet net = restore_network(cp);

    const ImageTensor img = load_image(args.image);
    const ShadowMask mask = binarize_mask(load_image(args.mask));
    ImageTensor out = net.forward(img, mask);
    if (!args.no_clamp) out = clamp_output(out);
    save_png(out, args.out);
    std::cout << "wrote " << args.out << "\n";
    return 0;
}

int cmd_ablate(const AblateArgs& args)
{
    if (args.dataset_root.empty()) throw ArgumentError("--dataset-root is required");
    std::vector<int> wanted;
    {
        std::string v = args.variants;
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream is(v);
        int k;
        while (is >> k) {
            if (k < 1 || k > 4) throw ArgumentError(cat("variant out of range: ", k));
            wanted.push_back(k);
        }
        if (wanted.empty()) throw ArgumentError("--variants selected nothing");
    }

    const auto train_records =
        scan(build_dataset_spec(args.dataset_root, args.layout, Split::train));
    const DatasetSpec test_spec =
        build_dataset_spec(args.dataset_root, args.layout, Split::test);

    struct VariantResult {
        int id;
        std::string label;
        MetricsReport report;
    };
    std::vector<VariantResult> rows;

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    for (const int variant : wanted) {
        ModelConfig mcfg = build_model_config(args.model);
        std::string label;
        switch (variant) {
            case 1:
                mcfg.encoder_attention = ModelConfig::EncoderAttention::window;
                label = "(1) SA enc/dec + SIM";
                break;
            case 2:
                mcfg.bottleneck = ModelConfig::Bottleneck::channel_only;
                label = "(2) CA-only bottleneck";
                break;
            case 3:
                mcfg.sigma = 0.0;
                label = "(3) vanilla SA bottleneck";
                break;
            case 4:
                label = "(4) full model";
                break;
        }
        mcfg.validate();

        TrainConfig tcfg;
        tcfg.total_steps = args.steps;
        tcfg.batch_size = args.batch;
        tcfg.crop_size = args.crop;
        tcfg.seed = args.seed;
        tcfg.validate();

        std::cout << "training variant " << variant << ": " << label << "\n";
        ShadowFormerNet net(mcfg, derive_seed(args.seed, 1));
        BatchStream stream(train_records, tcfg.batch_size, tcfg.crop_size,
                           derive_seed(args.seed, 2), tcfg.augment_flips);
        const auto history = train_loop(net, stream, tcfg);

        const fs::path vdir = out_dir / cat("variant", variant);
        fs::create_directories(vdir);
        write_loss_csv(vdir / "loss.csv", history);
        save_checkpoint(vdir / "checkpoint.sfckpt", snapshot(net, nullptr, tcfg.total_steps, nullptr));

        const fs::path results = vdir / "results";
        run_inference(net, scan(test_spec), results);
        rows.push_back({variant, label,
                        evaluate_dataset(results, test_spec, RmseConvention::mae, 0)});
    }

    // Table-4-shaped comparison: rows x (S, NS, ALL) x (PSNR, SSIM).
    char buf[256];
    std::string table;
    table += "                               CA  SA  SIA |  S PSNR  S SSIM | NS PSNR NS SSIM |"
             " ALL PSNR ALL SSIM\n";
    std::string csv = "variant,ca,sa,sia,s_psnr,s_ssim,ns_psnr,ns_ssim,all_psnr,all_ssim\n";
    for (const auto& row : rows) {
        const bool ca = row.id != 1;
        const bool sa = row.id == 1 || row.id == 3;
        const bool sia = row.id == 1 || row.id == 4;
        std::snprintf(buf, sizeof(buf),
                      "%-30s %2s  %2s  %3s | %7.2f  %6.4f | %7.2f  %6.4f | %8.2f  %8.4f\n",
                      row.label.c_str(), ca ? "x" : "-", sa ? "x" : "-", sia ? "x" : "-",
                      row.report.shadow.psnr, row.report.shadow.ssim, row.report.nonshadow.psnr,
                      row.report.nonshadow.ssim, row.report.all.psnr, row.report.all.ssim);
        table += buf;
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.4f,%.6f,%.4f,%.6f,%.4f,%.6f\n", row.id,
                      ca ? 1 : 0, sa ? 1 : 0, sia ? 1 : 0, row.report.shadow.psnr,
                      row.report.shadow.ssim, row.report.nonshadow.psnr, row.report.nonshadow.ssim,
                      row.report.all.psnr, row.report.all.ssim);
        csv += buf;
    }
    std::cout << table;
    std::ofstream(out_dir / "ablation.txt") << table;
    std::ofstream(out_dir / "ablation.csv") << csv;
    return 0;
}

namespace {

// Simple piecewise-linear heat colormap on [0,1].
void heat_color(double v, double* r, double* g, double* b)
{
    const auto band = [](double x) { return std::clamp(x, 0.0, 1.0); };
    *r = band(1.5 - std::abs(4.0 * v - 3.0));
    *g = band(1.5 - std::abs(4.0 * v - 2.0));
    *b = band(1.5 - std::abs(4.0 * v - 1.0));
}

}  // namespace

int cmd_viz_attn(const VizAttnArgs& args)
{
    if (args.checkpoint.empty() || args.image.empty() || args.mask.empty())
        throw ArgumentError("--checkpoint, --image and --mask are required");
    if (args.points.empty()) throw ArgumentError("at least one --point x,y is required");

    const Checkpoint cp = load_checkpoint(args.checkpoint);
    const ShadowFormerNet net = restore_network(cp);
    const ModelConfig& cfg = net.config();

    const ImageTensor img = load_image(args.image);
    const ShadowMask mask = binarize_mask(load_image(args.mask));
    const auto h = img.height();
    const auto w = img.width();

    const std::int64_t block =
        args.sim_block < 0 ? cfg.sim_blocks - 1 : args.sim_block;
    const auto maps = net.attention_maps(img, mask, block);
    const auto p = cfg.window;
    const auto scale = std::int64_t{1} << cfg.depth;

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    int point_index = 0;
    for (const auto& spec_str : args.points) {
        long long px_in = 0, py_in = 0;
        if (std::sscanf(spec_str.c_str(), "%lld,%lld", &px_in, &py_in) != 2)
            throw ArgumentError(cat("point must be x,y: ", spec_str));
        const std::int64_t px = px_in;
        const std::int64_t py = py_in;
        if (px < 0 || px >= w || py < 0 || py >= h)
            throw ArgumentError(cat("point ", px, ",", py, " outside the ", w, "x", h, " image"));

        // Pixel -> bottleneck patch -> window and token inside it.
        const auto patch_x = px / scale;
        const auto patch_y = py / scale;
        const auto win = (patch_y / p) * maps.spec.nx + (patch_x / p);
        const auto token = (patch_y % p) * p + (patch_x % p);

        // Scatter the query's reweighted attention row over the bottleneck
        // grid (zero outside the window), normalized to [0,1].
        Tensor heat({maps.map_h, maps.map_w});
        const Tensor& attn = maps.attn[static_cast<std::size_t>(win)];
        double lo = 1e300, hi = -1e300;
        for (std::int64_t t = 0; t < maps.spec.tokens(); ++t) {
            const double v = attn.at(token, t);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (std::int64_t t = 0; t < maps.spec.tokens(); ++t) {
            const auto flat = maps.spec.gather[static_cast<std::size_t>(win * maps.spec.tokens() + t)];
            const double v = attn.at(token, t);
            heat[flat] = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        }

        // Upsample (nearest) and colorize; overlay on the input.
        ImageTensor heat_img = ImageTensor::zeros(3, h, w);
        ImageTensor overlay = ImageTensor::zeros(3, h, w);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double v = heat.at(y / scale, x / scale);
                double r, g, b;
                heat_color(v, &r, &g, &b);
                heat_img.data.at(0, y, x) = r;
                heat_img.data.at(1, y, x) = g;
                heat_img.data.at(2, y, x) = b;
                for (int c = 0; c < 3; ++c)
                    overlay.data.at(c, y, x) =
                        0.55 * img.data.at(c, y, x) + 0.45 * heat_img.data.at(c, y, x);
            }

        const std::string tag = cat("point", point_index++, "_", px, "x", py);
        save_png(heat_img, out_dir / (tag + "_heat.png"));
        save_png(overlay, out_dir / (tag + "_overlay.png"));
        std::cout << "wrote " << (out_dir / (tag + "_heat.png")).string() << " and overlay\n";
    }
    return 0;
}

}  // namespace sfcli
