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

#include <doctest.h>

#include <cmath>

#include "shadowformer/metrics.hpp"
#include "shadowformer/retinex.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace sf;

namespace {

ShadowMask half_mask(std::int64_t h, std::int64_t w)
{
    ShadowMask m;
    m.data = Tensor({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w / 2; ++x) m.data.at(y, x) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("psnr: cap, closed form, masked oracle")
{
    Rng rng(1);
    const ImageTensor a = oracle::random_image(3, 16, 16, rng);
    const ShadowMask m = half_mask(16, 16);
    CHECK(psnr_region(a, a, m, Region::all) == 99.0);

    // Uniform difference of exactly 1/255 -> MSE 1 on the 8-bit scale.
    ImageTensor b = a;
    for (std::int64_t i = 0; i < b.data.numel(); ++i) b.data[i] += 1.0 / 255.0;
    const double want = 20.0 * std::log10(255.0);
    CHECK(psnr_region(a, b, m, Region::all) == doctest::Approx(want).epsilon(1e-9));

    // Brute-force masked oracle.
    const ImageTensor c = oracle::random_image(3, 16, 16, rng);
    for (auto region : {Region::shadow, Region::nonshadow, Region::all}) {
        double sq = 0.0;
        std::int64_t count = 0;
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                const bool in_shadow = m.data.at(y, x) != 0.0;
                if (region == Region::shadow && !in_shadow) continue;
                if (region == Region::nonshadow && in_shadow) continue;
                ++count;
                for (int ch = 0; ch < 3; ++ch) {
                    const double d = 255.0 * (a.data.at(ch, y, x) - c.data.at(ch, y, x));
                    sq += d * d;
                }
            }
        const double mse = sq / static_cast<double>(count * 3);
        const double want2 = 10.0 * std::log10(255.0 * 255.0 / mse);
        CHECK(psnr_region(a, c, m, region) == doctest::Approx(want2).epsilon(1e-9));
    }

    // Empty region errors.
    ShadowMask empty;
    empty.data = Tensor({16, 16});
    CHECK_THROWS_AS(psnr_region(a, c, empty, Region::shadow), RegionError);
}

TEST_CASE("psnr/ssim/rmse are symmetric in their arguments")
{
    Rng rng(2);
    const ImageTensor a = oracle::random_image(3, 20, 20, rng);
    const ImageTensor b = oracle::random_image(3, 20, 20, rng);
    const ShadowMask m = half_mask(20, 20);
    CHECK(psnr_region(a, b, m, Region::all) == doctest::Approx(psnr_region(b, a, m, Region::all)));
    CHECK(ssim_region(a, b, m, Region::all) == doctest::Approx(ssim_region(b, a, m, Region::all)));
    CHECK(rmse_lab_region(a, b, m, Region::all, RmseConvention::mae) ==
          doctest::Approx(rmse_lab_region(b, a, m, Region::all, RmseConvention::mae)));
}

TEST_CASE("ssim: self-similarity, anticorrelation, masked oracle")
{
    Rng rng(3);
    const ImageTensor a = oracle::random_image(3, 24, 24, rng);
    const ShadowMask m = half_mask(24, 24);
    CHECK(ssim_region(a, a, m, Region::all) == doctest::Approx(1.0).epsilon(1e-9));

    // Binary checkerboard vs its inverse anticorrelates.
    ImageTensor checker = ImageTensor::zeros(3, 24, 24);
    ImageTensor inverse = ImageTensor::zeros(3, 24, 24);
    for (std::int64_t y = 0; y < 24; ++y)
        for (std::int64_t x = 0; x < 24; ++x) {
            const double v = ((y + x) % 2 == 0) ? 1.0 : 0.0;
            for (int c = 0; c < 3; ++c) {
                checker.data.at(c, y, x) = v;
                inverse.data.at(c, y, x) = 1.0 - v;
            }
        }
    CHECK(ssim_region(checker, inverse, m, Region::all) < 0.0);

    // Region mean equals the masked mean of an independently convolved map.
    const ImageTensor b = oracle::random_image(3, 24, 24, rng);
    const Tensor ref = oracle::ssim_map_ref(a, b);
    const Tensor map = ssim_map(a, b);
    CHECK(max_abs_diff(ref, map) < 1e-9);
    for (auto region : {Region::shadow, Region::nonshadow, Region::all}) {
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::int64_t y = 0; y < ref.dim(0); ++y)
            for (std::int64_t x = 0; x < ref.dim(1); ++x) {
                const bool in_shadow = m.data.at(y + 5, x + 5) != 0.0;
                if (region == Region::shadow && !in_shadow) continue;
                if (region == Region::nonshadow && in_shadow) continue;
                acc += ref.at(y, x);
                ++count;
            }
        CHECK(ssim_region(a, b, m, region) ==
              doctest::Approx(acc / static_cast<double>(count)).epsilon(1e-9));
    }

    ImageTensor tiny = ImageTensor::zeros(3, 8, 8);
    CHECK_THROWS_AS(ssim_region(tiny, tiny, half_mask(8, 8), Region::all), ArgumentError);
}

TEST_CASE("rmse in lab: conventions and closed-form offset")
{
    Rng rng(4);
    const ImageTensor a = oracle::random_image(3, 12, 12, rng);
    const ShadowMask m = half_mask(12, 12);
    CHECK(rmse_lab_region(a, a, m, Region::all, RmseConvention::mae) == 0.0);
    CHECK(rmse_lab_region(a, a, m, Region::all, RmseConvention::rms) == 0.0);

    // Two grays differ by an L* offset (a*, b* stay within ~1e-5 of zero):
    // mae is the per-pixel L1 over channels, rms the root mean square over
    // elements. Closed forms from the per-channel LAB differences.
    ImageTensor g1 = ImageTensor::zeros(3, 12, 12);
    ImageTensor g2 = ImageTensor::zeros(3, 12, 12);
    g1.data.fill(0.4);
    g2.data.fill(0.5);
    const Tensor lab1 = srgb_to_lab(g1);
    const Tensor lab2 = srgb_to_lab(g2);
    double want_mae = 0.0, want_sq = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = lab1.at(c, 0, 0) - lab2.at(c, 0, 0);
        want_mae += std::abs(d);
        want_sq += d * d;
    }
    const double dl = std::abs(lab1.at(0, 0, 0) - lab2.at(0, 0, 0));
    CHECK(want_mae == doctest::Approx(dl).epsilon(1e-4));  // an L*-only offset
    CHECK(rmse_lab_region(g1, g2, m, Region::all, RmseConvention::mae) ==
          doctest::Approx(want_mae).epsilon(1e-12));
    CHECK(rmse_lab_region(g1, g2, m, Region::all, RmseConvention::rms) ==
          doctest::Approx(std::sqrt(want_sq / 3.0)).epsilon(1e-12));
    CHECK(std::sqrt(want_sq / 3.0) == doctest::Approx(dl / std::sqrt(3.0)).epsilon(1e-4));

    // Brute-force oracle for both conventions on random images.
    const ImageTensor b = oracle::random_image(3, 12, 12, rng);
    const Tensor la = srgb_to_lab(a);
    const Tensor lb = srgb_to_lab(b);
    double l1 = 0.0, sq = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < 12; ++y)
        for (std::int64_t x = 0; x < 12; ++x) {
            if (m.data.at(y, x) == 0.0) continue;
            ++count;
            for (int c = 0; c < 3; ++c) {
                const double d = la.at(c, y, x) - lb.at(c, y, x);
                l1 += std::abs(d);
                sq += d * d;
            }
        }
    CHECK(rmse_lab_region(a, b, m, Region::shadow, RmseConvention::mae) ==
          doctest::Approx(l1 / static_cast<double>(count)).epsilon(1e-9));
    CHECK(rmse_lab_region(a, b, m, Region::shadow, RmseConvention::rms) ==
          doctest::Approx(std::sqrt(sq / static_cast<double>(count * 3))).epsilon(1e-9));
}

TEST_CASE("region MSEs recombine to the ALL MSE exactly")
{
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageTensor a = oracle::random_image(3, 16, 16, rng);
        const ImageTensor b = oracle::random_image(3, 16, 16, rng);
        ShadowMask m = oracle::random_mask(16, 16, rng);
        if (m.coverage() == 0.0 || m.coverage() == 1.0) continue;

        auto mse_of_psnr = [](double psnr) { return 255.0 * 255.0 * std::pow(10.0, -psnr / 10.0); };
        const double mse_s = mse_of_psnr(psnr_region(a, b, m, Region::shadow));
        const double mse_ns = mse_of_psnr(psnr_region(a, b, m, Region::nonshadow));
        const double mse_all = mse_of_psnr(psnr_region(a, b, m, Region::all));

        const double n_s = m.coverage() * 256.0;
        const double n_ns = 256.0 - n_s;
        const double recombined = (mse_s * n_s + mse_ns * n_ns) / 256.0;
        CHECK(std::abs(recombined - mse_all) < 1e-9 * std::max(1.0, mse_all));
    }
}

TEST_CASE("evaluate_dataset: self comparison and disjoint-half recombination")
{
    testutil::TmpDir tmp("eval");
    generate_dataset(4, 32, 32, 50, tmp.path(), "test");
    DatasetSpec spec;
    spec.root = tmp.path();
    spec.layout = Layout::synthetic;
    spec.split = Split::test;

    // Ground truth evaluated against itself.
    const MetricsReport self =
        evaluate_dataset(tmp.path() / "test_C", spec, RmseConvention::mae, 0);
    CHECK(self.n_images == 4);
    CHECK(self.all.psnr == doctest::Approx(99.0));
    CHECK(self.all.ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self.all.rmse == doctest::Approx(0.0).epsilon(1e-12));

    // Shadow inputs as "results": shadow-region PSNR below non-shadow PSNR.
    const MetricsReport input =
        evaluate_dataset(tmp.path() / "test_A", spec, RmseConvention::mae, 0);
    CHECK(input.shadow.psnr < input.nonshadow.psnr);

    // Missing results are listed and abort.
    testutil::TmpDir empty("eval_missing");
    CHECK_THROWS_AS(evaluate_dataset(empty.path(), spec, RmseConvention::mae, 0), IoError);

    // The CSV/table mention the convention tag.
    CHECK(input.to_csv().find("mae") != std::string::npos);
    CHECK(input.to_table().find("mae") != std::string::npos);

    // Two disjoint half-set averages recombine to the full-set average.
    testutil::TmpDir half_a("eval_half_a");
    testutil::TmpDir half_b("eval_half_b");
    for (const char* sub : {"test_A", "test_B", "test_C"}) {
        std::filesystem::create_directories(half_a.path() / sub);
        std::filesystem::create_directories(half_b.path() / sub);
    }
    int idx = 0;
    for (const auto& rec : scan(spec)) {
        const auto& dst = (idx++ < 2) ? half_a : half_b;
        for (const auto& [src_dir, name] :
             std::vector<std::pair<std::filesystem::path, std::string>>{
                 {tmp.path() / "test_A", rec.id + ".png"},
                 {tmp.path() / "test_B", rec.id + ".png"},
                 {tmp.path() / "test_C", rec.id + ".png"}}) {
            const std::string sub = src_dir.filename().string();
            std::filesystem::copy_file(src_dir / name, dst.path() / sub / name);
        }
    }
    DatasetSpec sa = spec, sb = spec;
    sa.root = half_a.path();
    sb.root = half_b.path();
    const MetricsReport ra =
        evaluate_dataset(half_a.path() / "test_A", sa, RmseConvention::mae, 0);
    const MetricsReport rb =
        evaluate_dataset(half_b.path() / "test_A", sb, RmseConvention::mae, 0);
    const double combined =
        (ra.all.psnr * static_cast<double>(ra.n_images) + rb.all.psnr * static_cast<double>(rb.n_images)) /
        static_cast<double>(ra.n_images + rb.n_images);
    CHECK(combined == doctest::Approx(input.all.psnr).epsilon(1e-9));
}

TEST_CASE("evaluate_dataset resizes result and ground truth at --resolution 256")
{
    testutil::TmpDir tmp("eval256");
    generate_dataset(2, 32, 32, 70, tmp.path(), "test");
    DatasetSpec spec;
    spec.root = tmp.path();
    spec.layout = Layout::synthetic;
    spec.split = Split::test;

    // Results at a size different from the ground truth: only legal when a
    // fixed evaluation resolution is requested.
    testutil::TmpDir results("eval256_results");
    for (const auto& rec : scan(spec)) {
        const ImageTensor gt = load_image(rec.shadowfree_path);
        save_png(resize_bilinear(gt, 48, 48), results.path() / (rec.id + ".png"));
    }
    CHECK_THROWS_AS(evaluate_dataset(results.path(), spec, RmseConvention::mae, 0), ShapeError);

    const MetricsReport r = evaluate_dataset(results.path(), spec, RmseConvention::mae, 256);
    CHECK(r.n_images == 2);
    // Down-up-resampled ground truth stays close to itself but not equal.
    CHECK(r.all.psnr > 25.0);
    CHECK(r.all.psnr < 99.0);
}

TEST_CASE("evaluate_dataset is invariant to storage order")
{
    // Records are sorted by id during scan, so a directory holding the same
    // files written in reverse order yields a byte-identical report.
    testutil::TmpDir tmp("order");
    generate_dataset(3, 32, 32, 60, tmp.path(), "test");
    DatasetSpec spec;
    spec.root = tmp.path();
    spec.layout = Layout::synthetic;
    spec.split = Split::test;

    testutil::TmpDir reversed("order_rev");
    for (const char* sub : {"test_A", "test_B", "test_C"})
        std::filesystem::create_directories(reversed.path() / sub);
    const auto records = scan(spec);
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
        std::filesystem::copy_file(it->shadow_path,
                                   reversed.path() / "test_A" / (it->id + ".png"));
        std::filesystem::copy_file(it->mask_path,
                                   reversed.path() / "test_B" / (it->id + ".png"));
        std::filesystem::copy_file(it->shadowfree_path,
                                   reversed.path() / "test_C" / (it->id + ".png"));
    }
    DatasetSpec rev_spec = spec;
    rev_spec.root = reversed.path();
    const auto r1 = evaluate_dataset(tmp.path() / "test_A", spec, RmseConvention::rms, 0);
    const auto r2 =
        evaluate_dataset(reversed.path() / "test_A", rev_spec, RmseConvention::rms, 0);
    CHECK(r1.to_csv() == r2.to_csv());
}
