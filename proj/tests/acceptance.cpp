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

// Acceptance suite. Runs every criterion (or a single one via
// --criterion N) and prints one PASS/FAIL line per criterion. Exit status
// is nonzero when any executed criterion fails.

#include <chrono>
#include <functional>
#include <cstring>
#include <iostream>
#include <optional>
#include <sstream>

#include "shadowformer/metrics.hpp"
#include "shadowformer/retinex.hpp"
#include "shadowformer/training.hpp"
#include "support/cli.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace sf;

namespace {

struct Outcome {
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1: sigma = 0 reduces SIA to vanilla window attention -------

Outcome criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t heads = 1 << rng.uniform_int(0, 2);  // 1, 2, 4
        const std::int64_t c = heads * rng.uniform_int(1, 32 / heads);
        const std::int64_t nw = rng.uniform_int(2, 64);
        nn::WindowAttention attn("attn", c, heads);
        attn.init(rng, 0.4);
        const Tensor tokens = oracle::random_tensor({c, nw}, rng);
        Tensor mvec({nw});
        for (std::int64_t i = 0; i < nw; ++i) mvec[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;

        const Tensor got = nn::sia_window(attn, tokens, nn::correlation_map(mvec), 0.0);
        const Tensor want = oracle::window_attention_ref(attn, tokens, nullptr);
        worst = std::max(worst, max_abs_diff(got, want));
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = worst < 1e-6 && elapsed < 10.0;
    o.detail = cat("max abs diff ", worst, " (< 1e-6), 100 windows in ", elapsed, " s (< 10 s)");
    return o;
}

// --- criterion 2: correlation map correctness ------------------------------

Outcome criterion2()
{
    Rng rng(202);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = rng.uniform_int(1, 64);
        Tensor m({n});
        Tensor flipped({n});
        for (std::int64_t i = 0; i < n; ++i) {
            m[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            flipped[i] = 1.0 - m[i];
        }
        const Tensor c = nn::correlation_map(m);
        const Tensor cf = nn::correlation_map(flipped);
        for (std::int64_t i = 0; i < n; ++i) {
            if (c.at(i, i) != 0.0) return {false, false, "nonzero diagonal"};
            for (std::int64_t j = 0; j < n; ++j) {
                const double brute = m[i] != m[j] ? 1.0 : 0.0;
                if (c.at(i, j) != brute) return {false, false, "mismatch vs XOR table"};
                if (c.at(i, j) != c.at(j, i)) return {false, false, "asymmetry"};
                if (c.at(i, j) != cf.at(i, j)) return {false, false, "complement variance"};
            }
        }
    }
    return {true, false, "1000 random vectors: exact XOR table, symmetric, zero diagonal, "
                         "complement-invariant"};
}

// --- criterion 3: gradient fidelity ----------------------------------------

double block_gradcheck(nn::TransformerBlock::Kind kind, std::uint64_t seed)
{
    Rng rng(seed);
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.window = 4;
    cfg.sigma = 0.2;
    nn::TransformerBlock block("blk", kind, 8, cfg);
    block.init(rng, 0.3);
    const auto spec = nn::make_window_spec(8, 4, 4);
    std::vector<Tensor> reweight;
    for (std::int64_t wi = 0; wi < spec.windows(); ++wi) {
        Tensor mvec({spec.tokens()});
        for (std::int64_t t = 0; t < spec.tokens(); ++t)
            mvec[t] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        reweight.push_back(nn::sia_reweight(nn::correlation_map(mvec), cfg.sigma));
    }
    Tensor x = oracle::random_tensor({8, 8, 4}, rng);
    const Tensor w = oracle::random_tensor({8, 8, 4}, rng);

    const auto* spec_ptr = kind == nn::TransformerBlock::Kind::channel ? nullptr : &spec;
    const auto* rw_ptr = kind == nn::TransformerBlock::Kind::sim ? &reweight : nullptr;

    nn::TransformerBlock::Cache cache;
    block.forward(x, spec_ptr, rw_ptr, &cache);
    Tensor gx = block.backward(w, spec_ptr, cache);

    nn::ParamRefs params;
    block.collect(params);
    std::vector<oracle::Coord> coords;
    for (auto* p : params)
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
            coords.push_back({&p->value[i], p->grad[i]});
    for (std::int64_t i = 0; i < x.numel(); ++i) coords.push_back({&x[i], gx[i]});

    const auto loss = [&] {
        const Tensor out = block.forward(x, spec_ptr, rw_ptr, nullptr);
        double acc = 0.0;
        for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * w[i];
        return acc;
    };
    return oracle::central_difference(loss, coords, 1e-5).rel_error;
}

double se_gradcheck(std::uint64_t seed)
{
    Rng rng(seed);
    nn::SqueezeExcite se("se", 8, 4);
    se.init(rng, 0.4);
    Tensor x = oracle::random_tensor({8, 12}, rng);
    const Tensor w = oracle::random_tensor({8, 12}, rng);

    nn::SqueezeExcite::Cache cache;
    se.forward(x, &cache);
    Tensor gx = se.backward(w, cache);

    nn::ParamRefs params;
    se.collect(params);
    std::vector<oracle::Coord> coords;
    for (auto* p : params)
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
            coords.push_back({&p->value[i], p->grad[i]});
    for (std::int64_t i = 0; i < x.numel(); ++i) coords.push_back({&x[i], gx[i]});

    const auto loss = [&] {
        const Tensor out = se.forward(x, nullptr);
        double acc = 0.0;
        for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * w[i];
        return acc;
    };
    return oracle::central_difference(loss, coords, 1e-5).rel_error;
}

Outcome criterion3()
{
    const auto t0 = std::chrono::steady_clock::now();

    const double ca = block_gradcheck(nn::TransformerBlock::Kind::channel, 301);
    const double se = se_gradcheck(302);
    const double sim = block_gradcheck(nn::TransformerBlock::Kind::sim, 303);

    // End-to-end toy model: C=8, L=1, P=4 on a 16x16 input.
    Rng rng(304);
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.window = 4;
    ShadowFormerNet net(cfg, 304);
    for (auto* p : net.parameters())
        if (p->name.rfind("out.", 0) == 0) nn::init_trunc_normal(p->value, rng, 0.02);

    ImageTensor img = oracle::random_image(3, 16, 16, rng);
    const ShadowMask mask = oracle::random_mask(16, 16, rng);
    const Tensor w = oracle::random_tensor({3, 16, 16}, rng);

    net.zero_grad();
    net.forward_train(img, mask);
    Tensor g_img = net.backward(w);

    auto params = net.parameters();
    Rng pick(305);
    auto coords = oracle::sample_param_coords(params, 1500, pick);
    for (std::int64_t i = 0; i < img.data.numel(); ++i)
        coords.push_back({&img.data[i], g_img[i]});

    const auto loss = [&] {
        const ImageTensor out = net.forward(img, mask);
        double acc = 0.0;
        for (std::int64_t i = 0; i < out.data.numel(); ++i) acc += out.data[i] * w[i];
        return acc;
    };
    const double e2e = oracle::central_difference(loss, coords, 1e-5).rel_error;

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = ca < 1e-4 && se < 1e-4 && sim < 1e-4 && e2e < 1e-3 && elapsed < 300.0;
    o.detail = cat("rel err: ca_block ", ca, ", channel_attention ", se, ", sim_block ", sim,
                   " (< 1e-4); end-to-end toy ", e2e, " (< 1e-3); ", elapsed, " s (< 300 s)");
    return o;
}

// --- criterion 4: encoder shape contract ------------------------------------

Outcome criterion4()
{
    std::ostringstream detail;
    bool ok = true;
    struct Preset {
        const char* name;
        ModelConfig cfg;
    };
    for (const auto& preset :
         {Preset{"small", ModelConfig::small_preset()}, Preset{"large", ModelConfig::large_preset()}}) {
        const auto& cfg = preset.cfg;
        Rng rng(404);
        Tensor x({cfg.embed_dim, 256, 256});
        for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
        for (std::int64_t l = 0; l < cfg.depth; ++l) {
            EncoderStage stage(cat("enc", l), cfg.embed_dim << l, cfg);
            Rng wrng(100 + static_cast<std::uint64_t>(l));
            stage.init(wrng, 0.02);
            auto [skip, down] = stage.forward(x, nullptr, nullptr);
            const std::vector<std::int64_t> want{cfg.embed_dim << (l + 1), 256 >> (l + 1),
                                                 256 >> (l + 1)};
            if (down.shape() != want) {
                ok = false;
                detail << preset.name << " stage " << l << " wrong shape; ";
            }
            x = std::move(down);
        }
        // Full forward at 256x256 returns 3x256x256.
        ShadowFormerNet net(cfg, 405);
        Rng irng(406);
        const ImageTensor img = oracle::random_image(3, 256, 256, irng);
        const ShadowMask mask = oracle::random_mask(256, 256, irng);
        const ImageTensor out = net.forward(img, mask);
        if (out.data.shape() != std::vector<std::int64_t>{3, 256, 256}) {
            ok = false;
            detail << preset.name << " forward shape wrong; ";
        }
    }
    if (ok)
        detail << "small and large presets: stage l gives 2^l*C x 256/2^l x 256/2^l, forward "
                  "returns 3x256x256";
    return {ok, false, detail.str()};
}

// --- criterion 5: parameter-count calibration --------------------------------

Outcome criterion5()
{
    ShadowFormerNet small(ModelConfig::small_preset(), 0);
    ShadowFormerNet large(ModelConfig::large_preset(), 0);
    const auto ns = small.param_count();
    const auto nl = large.param_count();
    const bool small_ok = ns >= 1'800'000 && ns <= 3'000'000;
    const bool large_ok = nl >= 7'000'000 && nl <= 11'600'000;
    Outcome o;
    o.pass = small_ok && large_ok;
    o.detail = cat("small preset ", ns, " (band [1.8M, 3.0M] vs reported 2.4M): ",
                   small_ok ? "in band" : "OUT OF BAND", "; large preset ", nl,
                   " (band [7.0M, 11.6M] vs reported 9.3M): ",
                   large_ok ? "in band" : "OUT OF BAND");
    return o;
}

// --- criterion 6: initialization identity ------------------------------------

Outcome criterion6()
{
    Rng rng(606);
    for (int trial = 0; trial < 4; ++trial) {
        ShadowFormerNet net(ModelConfig::toy_preset(), 600 + static_cast<std::uint64_t>(trial));
        const ImageTensor img = oracle::random_image(3, 64, 64, rng);
        const ShadowMask mask = oracle::random_mask(64, 64, rng);
        const ImageTensor out = net.forward(img, mask);
        if (!out.data.equals(img.data))
            return {false, false, "zero-initialized output projection did not reproduce the "
                                  "input bitwise"};
    }
    return {true, false, "forward(I_s) == I_s bitwise at initialization (4 random inputs)"};
}

// --- criterion 7: toy training efficacy ---------------------------------------

Outcome criterion7()
{
    const auto t0 = std::chrono::steady_clock::now();
    testutil::TmpDir tmp("accept7");

    generate_dataset(256, 64, 64, 0, tmp.path(), "train");
    generate_dataset(32, 64, 64, 1'000'000, tmp.path(), "test");

    DatasetSpec train_spec{tmp.path(), Layout::synthetic, Split::train, {}, 0.5};
    DatasetSpec test_spec{tmp.path(), Layout::synthetic, Split::test, {}, 0.5};

    ModelConfig mcfg = ModelConfig::toy_preset();  // C=16, L=2, P=8
    TrainConfig tcfg;                              // 2e-4 -> 1e-6 cosine, (0.9, 0.999), wd 0.02
    tcfg.total_steps = 2000;
    tcfg.batch_size = 4;
    tcfg.crop_size = 64;
    tcfg.seed = 0;

    ShadowFormerNet net(mcfg, derive_seed(0, 1));
    BatchStream stream(scan(train_spec), tcfg.batch_size, tcfg.crop_size, derive_seed(0, 2),
                       tcfg.augment_flips);
    const auto history = train_loop(net, stream, tcfg);

    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
        first += history[static_cast<std::size_t>(i)].loss / 100.0;
        last += history[history.size() - 100 + static_cast<std::size_t>(i)].loss / 100.0;
    }
    const double initial = history.front().loss;

    // Held-out shadow-region PSNR, model output vs raw input.
    double psnr_in = 0.0, psnr_out = 0.0;
    const auto test_records = scan(test_spec);
    for (const auto& rec : test_records) {
        const Triplet t = load_triplet(rec);
        const ImageTensor restored = clamp_output(net.forward(t.shadow, t.mask));
        psnr_in += psnr_region(t.shadow, t.shadow_free, t.mask, Region::shadow);
        psnr_out += psnr_region(restored, t.shadow_free, t.mask, Region::shadow);
    }
    psnr_in /= static_cast<double>(test_records.size());
    psnr_out /= static_cast<double>(test_records.size());

    const double elapsed = seconds_since(t0);
    const bool loss_ok = last < 0.5 * first;
    const bool psnr_ok = psnr_out >= psnr_in + 6.0;
    Outcome o;
    o.pass = loss_ok && psnr_ok && elapsed < 2700.0;
    o.detail = cat("step-0 loss ", initial, ", first-100 moving avg ", first, ", final-100 ", last,
                   " (need < 0.5x first-100): ", loss_ok ? "ok" : "FAIL",
                   "; held-out shadow PSNR ", psnr_in, " -> ", psnr_out,
                   " dB (need +6): ", psnr_ok ? "ok" : "FAIL", "; ", elapsed, " s (< 2700 s)");
    return o;
}

// --- criterion 8: metric recombination and oracles ----------------------------

Outcome criterion8()
{
    Rng rng(808);
    double worst_recomb = 0.0, worst_psnr = 0.0, worst_ssim = 0.0, worst_rmse = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const ImageTensor a = oracle::random_image(3, 16, 16, rng);
        const ImageTensor b = oracle::random_image(3, 16, 16, rng);
        ShadowMask m = oracle::random_mask(16, 16, rng);
        if (m.coverage() == 0.0 || m.coverage() == 1.0) m.data.at(0, 0) = 1.0 - m.data.at(0, 0);

        // Pixel-count-weighted S/NS MSEs recombine to ALL.
        auto mse_of = [&](Region r) {
            return 255.0 * 255.0 * std::pow(10.0, -psnr_region(a, b, m, r) / 10.0);
        };
        const double n_s = m.coverage() * 256.0;
        const double recomb =
            (mse_of(Region::shadow) * n_s + mse_of(Region::nonshadow) * (256.0 - n_s)) / 256.0;
        worst_recomb = std::max(worst_recomb, std::abs(recomb - mse_of(Region::all)));

        // Brute-force oracles per region.
        for (auto region : {Region::shadow, Region::nonshadow, Region::all}) {
            double sq = 0.0, l1 = 0.0, sq_lab = 0.0;
            std::int64_t count = 0;
            const Tensor la = srgb_to_lab(a);
            const Tensor lb = srgb_to_lab(b);
            for (std::int64_t y = 0; y < 16; ++y)
                for (std::int64_t x = 0; x < 16; ++x) {
                    const bool in_shadow = m.data.at(y, x) != 0.0;
                    if (region == Region::shadow && !in_shadow) continue;
                    if (region == Region::nonshadow && in_shadow) continue;
                    ++count;
                    for (int c = 0; c < 3; ++c) {
                        const double d = 255.0 * (a.data.at(c, y, x) - b.data.at(c, y, x));
                        sq += d * d;
                        const double dl = la.at(c, y, x) - lb.at(c, y, x);
                        l1 += std::abs(dl);
                        sq_lab += dl * dl;
                    }
                }
            const double want_psnr =
                10.0 * std::log10(255.0 * 255.0 / (sq / static_cast<double>(count * 3)));
            worst_psnr = std::max(
                worst_psnr, std::abs(want_psnr - psnr_region(a, b, m, region)));
            worst_rmse = std::max(
                worst_rmse,
                std::abs(l1 / static_cast<double>(count) -
                         rmse_lab_region(a, b, m, region, RmseConvention::mae)));
            worst_rmse = std::max(
                worst_rmse,
                std::abs(std::sqrt(sq_lab / static_cast<double>(count * 3)) -
                         rmse_lab_region(a, b, m, region, RmseConvention::rms)));
        }

        // SSIM vs the direct-convolution oracle.
        const Tensor ref = oracle::ssim_map_ref(a, b);
        worst_ssim = std::max(worst_ssim, max_abs_diff(ref, ssim_map(a, b)));
    }
    Outcome o;
    o.pass = worst_recomb < 1e-9 && worst_psnr < 1e-6 && worst_ssim < 1e-9 && worst_rmse < 1e-9;
    o.detail = cat("recombination ", worst_recomb, " (< 1e-9); psnr vs oracle ", worst_psnr,
                   " dB (< 1e-6); ssim map vs direct conv ", worst_ssim, "; rmse vs oracle ",
                   worst_rmse);
    return o;
}

// --- criterion 9 (optional): ISTD harness validation --------------------------

Outcome criterion9(const std::string& istd_root)
{
    if (istd_root.empty())
        return {true, true, "ISTD root not provided (set SF_ISTD_ROOT or --istd-root)"};

    DatasetSpec spec{istd_root, Layout::istd, Split::test, {}, 0.5};
    const MetricsReport report = evaluate_dataset(std::filesystem::path(istd_root) / "test_A",
                                                  spec, RmseConvention::mae, 256);
    const bool psnr_ok = std::abs(report.all.psnr - 20.56) <= 0.15;
    const bool ssim_ok = std::abs(report.all.ssim - 0.893) <= 0.005;
    const bool rmse_ok = std::abs(report.all.rmse - 10.88) <= 0.3;
    Outcome o;
    o.pass = psnr_ok && ssim_ok && rmse_ok;
    o.detail = cat("input-vs-gt at 256: ALL PSNR ", report.all.psnr, " (20.56 +/- 0.15), SSIM ",
                   report.all.ssim, " (0.893 +/- 0.005), RMSE ", report.all.rmse,
                   " (10.88 +/- 0.3, mae)");
    return o;
}

// --- criterion 10: CLI determinism ---------------------------------------------

Outcome criterion10()
{
    testutil::TmpDir tmp("accept10");
    const auto data = (tmp.path() / "data").string();
    auto r = testutil::run_cli("synth --n 12 --size 64 --seed 40 --out " + data);
    if (r.status != 0) return {false, false, "synth failed: " + r.output};
    r = testutil::run_cli("synth --n 4 --size 64 --seed 41 --split test --out " + data);
    if (r.status != 0) return {false, false, "synth (test) failed: " + r.output};

    const auto run1 = (tmp.path() / "run1").string();
    const auto run2 = (tmp.path() / "run2").string();
    const std::string train_cmd = "train --variant toy --seed 13 --dataset-root " + data +
                                  " --steps 40 --batch 4 --crop 64 --out ";
    r = testutil::run_cli(train_cmd + run1);
    if (r.status != 0) return {false, false, "train run 1 failed: " + r.output};
    r = testutil::run_cli(train_cmd + run2);
    if (r.status != 0) return {false, false, "train run 2 failed: " + r.output};

    const auto csv1 = testutil::read_file(std::filesystem::path(run1) / "loss.csv");
    const auto csv2 = testutil::read_file(std::filesystem::path(run2) / "loss.csv");
    const bool train_ok = !csv1.empty() && csv1 == csv2;

    const auto eval1 = (tmp.path() / "eval1").string();
    const auto eval2 = (tmp.path() / "eval2").string();
    const std::string eval_cmd = "eval --dataset-root " + data + " --checkpoint " +
                                 (std::filesystem::path(run1) / "checkpoint.sfckpt").string() +
                                 " --out ";
    r = testutil::run_cli(eval_cmd + eval1);
    if (r.status != 0) return {false, false, "eval run 1 failed: " + r.output};
    r = testutil::run_cli(eval_cmd + eval2);
    if (r.status != 0) return {false, false, "eval run 2 failed: " + r.output};

    const auto rep1 = testutil::read_file(std::filesystem::path(eval1) / "report.csv") +
                      testutil::read_file(std::filesystem::path(eval1) / "report.txt");
    const auto rep2 = testutil::read_file(std::filesystem::path(eval2) / "report.csv") +
                      testutil::read_file(std::filesystem::path(eval2) / "report.txt");
    const bool eval_ok = !rep1.empty() && rep1 == rep2;

    Outcome o;
    o.pass = train_ok && eval_ok;
    o.detail = cat("loss CSVs byte-identical: ", train_ok ? "yes" : "NO",
                   "; eval reports byte-identical: ", eval_ok ? "yes" : "NO");
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    int only = 0;
    std::string istd_root;
    if (const char* env = std::getenv("SF_ISTD_ROOT")) istd_root = env;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else if (std::strcmp(argv[i], "--istd-root") == 0 && i + 1 < argc) {
            istd_root = argv[++i];
        } else {
            std::cerr << "usage: acceptance [--criterion N] [--istd-root DIR]\n";
            return 2;
        }
    }

    struct Entry {
        int id;
        const char* title;
        std::function<Outcome()> run;
    };
    const std::vector<Entry> entries = {
        {1, "sigma=0 reduction to vanilla attention", criterion1},
        {2, "correlation-map correctness", criterion2},
        {3, "gradient fidelity (blocks and end-to-end)", criterion3},
        {4, "encoder/decoder shape contract", criterion4},
        {5, "parameter-count calibration", criterion5},
        {6, "initialization identity", criterion6},
        {7, "toy training efficacy", criterion7},
        {8, "metric recombination and oracles", criterion8},
        {9, "ISTD harness validation (optional)", [&] { return criterion9(istd_root); }},
        {10, "CLI determinism", criterion10},
    };

    bool all_pass = true;
    for (const auto& entry : entries) {
        if (only != 0 && entry.id != only) continue;
        Outcome o;
        try {
            o = entry.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = cat("exception: ", e.what());
        }
        const char* tag = o.skipped ? "SKIP" : (o.pass ? "PASS" : "FAIL");
        std::cout << "[" << tag << "] criterion " << entry.id << ": " << entry.title << " - "
                  << o.detail << "\n";
        if (!o.pass && !o.skipped) all_pass = false;
    }
    return all_pass ? 0 : 1;
}
