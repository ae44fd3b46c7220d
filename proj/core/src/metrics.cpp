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

#include "shadowformer/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace sf {

namespace {

constexpr double kPsnrCap = 99.0;

bool in_region(double mask_value, Region region)
{
    switch (region) {
        case Region::shadow: return mask_value != 0.0;
        case Region::nonshadow: return mask_value == 0.0;
        case Region::all: return true;
    }
    return false;
}

void check_pair(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask)
{
    if (!a.data.same_shape(b.data)) throw ShapeError("metric inputs must share shape");
    if (mask.height() != a.height() || mask.width() != a.width())
        throw ShapeError("mask size does not match images");
}

}  // namespace

RmseConvention rmse_convention_from_string(const std::string& s)
{
    if (s == "mae") return RmseConvention::mae;
    if (s == "rms") return RmseConvention::rms;
    throw ArgumentError(cat("unknown rmse convention: ", s));
}

std::string to_string(RmseConvention c) { return c == RmseConvention::mae ? "mae" : "rms"; }

std::string to_string(Region r)
{
    switch (r) {
        case Region::shadow: return "S";
        case Region::nonshadow: return "NS";
        case Region::all: return "ALL";
    }
    return "?";
}

double psnr_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                   Region region)
{
    check_pair(a, b, mask);
    const auto c = a.channels();
    const auto h = a.height();
    const auto w = a.width();
    double sq = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            if (!in_region(mask.data.at(y, x), region)) continue;
            ++count;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double d = 255.0 * (a.data.at(ch, y, x) - b.data.at(ch, y, x));
                sq += d * d;
            }
        }
    if (count == 0) throw RegionError(cat("empty ", to_string(region), " region"));
    const double mse = sq / static_cast<double>(count * c);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

// 11-tap Gaussian, sigma 1.5, normalized.
std::vector<double> ssim_kernel()
{
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = static_cast<double>(i - 5);
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable valid-mode Gaussian filter of one channel plane (h x w doubles).
Tensor filter_valid(const Tensor& plane, const std::vector<double>& k)
{
    const auto h = plane.dim(0);
    const auto w = plane.dim(1);
    const auto r = static_cast<std::int64_t>(k.size());
    Tensor horiz({h, w - r + 1});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x + r <= w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < r; ++i)
                acc += k[static_cast<std::size_t>(i)] * plane.at(y, x + i);
            horiz.at(y, x) = acc;
        }
    Tensor out({h - r + 1, w - r + 1});
    for (std::int64_t y = 0; y + r <= h; ++y)
        for (std::int64_t x = 0; x < w - r + 1; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < r; ++i)
                acc += k[static_cast<std::size_t>(i)] * horiz.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

}  // namespace

Tensor ssim_map(const ImageTensor& a, const ImageTensor& b)
{
    if (!a.data.same_shape(b.data)) throw ShapeError("ssim inputs must share shape");
    const auto c = a.channels();
    const auto h = a.height();
    const auto w = a.width();
    if (h < 11 || w < 11)
        throw ArgumentError(cat("ssim needs at least 11x11 images, got ", h, "x", w));

    const auto kernel = ssim_kernel();
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    Tensor map({h - 10, w - 10});
    Tensor pa({h, w}), pb({h, w}), paa({h, w}), pbb({h, w}), pab({h, w});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double va = 255.0 * a.data.at(ch, y, x);
                const double vb = 255.0 * b.data.at(ch, y, x);
                pa.at(y, x) = va;
                pb.at(y, x) = vb;
                paa.at(y, x) = va * va;
                pbb.at(y, x) = vb * vb;
                pab.at(y, x) = va * vb;
            }
        const Tensor mu_a = filter_valid(pa, kernel);
        const Tensor mu_b = filter_valid(pb, kernel);
        const Tensor s_aa = filter_valid(paa, kernel);
        const Tensor s_bb = filter_valid(pbb, kernel);
        const Tensor s_ab = filter_valid(pab, kernel);
        for (std::int64_t i = 0; i < map.numel(); ++i) {
            const double ma = mu_a[i];
            const double mb = mu_b[i];
            const double va = s_aa[i] - ma * ma;
            const double vb = s_bb[i] - mb * mb;
            const double vab = s_ab[i] - ma * mb;
            const double val = ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) /
                               ((ma * ma + mb * mb + c1) * (va + vb + c2));
            map[i] += val / static_cast<double>(c);
        }
    }
    return map;
}

double ssim_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                   Region region)
{
    check_pair(a, b, mask);
    const Tensor map = ssim_map(a, b);
    const auto mh = map.dim(0);
    const auto mw = map.dim(1);
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < mh; ++y)
        for (std::int64_t x = 0; x < mw; ++x) {
            if (!in_region(mask.data.at(y + 5, x + 5), region)) continue;
            acc += map.at(y, x);
            ++count;
        }
    if (count == 0) throw RegionError(cat("empty ", to_string(region), " region in SSIM map"));
    return acc / static_cast<double>(count);
}

double rmse_lab_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                       Region region, RmseConvention convention)
{
    check_pair(a, b, mask);
    const Tensor lab_a = srgb_to_lab(a);
    const Tensor lab_b = srgb_to_lab(b);
    const auto h = a.height();
    const auto w = a.width();

    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            if (!in_region(mask.data.at(y, x), region)) continue;
            ++count;
            for (std::int64_t ch = 0; ch < 3; ++ch) {
                const double d = lab_a.at(ch, y, x) - lab_b.at(ch, y, x);
                acc += convention == RmseConvention::mae ? std::abs(d) : d * d;
            }
        }
    if (count == 0) throw RegionError(cat("empty ", to_string(region), " region"));
    if (convention == RmseConvention::mae) return acc / static_cast<double>(count);
    return std::sqrt(acc / static_cast<double>(count * 3));
}

std::string MetricsReport::to_table() const
{
    char buf[256];
    std::string s;
    s += "              Shadow (S)              Non-Shadow (NS)         All Image (ALL)\n";
    s += "          PSNR    SSIM    RMSE     PSNR    SSIM    RMSE     PSNR    SSIM    RMSE\n";
    std::snprintf(buf, sizeof(buf),
                  "        %7.2f  %6.4f  %6.2f  %7.2f  %6.4f  %6.2f  %7.2f  %6.4f  %6.2f\n",
                  shadow.psnr, shadow.ssim, shadow.rmse, nonshadow.psnr, nonshadow.ssim,
                  nonshadow.rmse, all.psnr, all.ssim, all.rmse);
    s += buf;
    std::snprintf(buf, sizeof(buf), "        rmse convention: %s, images: %lld\n",
                  to_string(convention).c_str(), static_cast<long long>(n_images));
    s += buf;
    return s;
}

std::string MetricsReport::to_csv() const
{
    char buf[160];
    std::string s = "region,psnr,ssim,rmse,convention,n_images\n";
    const auto line = [&](const char* name, const RegionScores& r) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%s,%lld\n", name, r.psnr, r.ssim,
                      r.rmse, to_string(convention).c_str(), static_cast<long long>(n_images));
        s += buf;
    };
    line("S", shadow);
    line("NS", nonshadow);
    line("ALL", all);
    return s;
}

MetricsReport evaluate_dataset(const std::filesystem::path& results_dir, const DatasetSpec& spec,
                               RmseConvention convention, std::int64_t resolution)
{
    namespace fs = std::filesystem;
    const auto records = scan(spec);

    // Stem -> result path, extension-agnostic.
    std::map<std::string, fs::path> results;
    if (!fs::is_directory(results_dir))
        throw IoError(cat("results directory does not exist: ", results_dir.string()));
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string stem = entry.path().stem().string();
        std::transform(stem.begin(), stem.end(), stem.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        results[stem] = entry.path();
    }

    std::vector<std::string> missing;
    for (const auto& rec : records)
        if (!results.count(rec.id)) missing.push_back(rec.id);
    if (!missing.empty()) {
        std::string msg = cat("missing result images under ", results_dir.string(), ":");
        for (const auto& id : missing) msg += "\n  " + id;
        throw IoError(msg);
    }

    MetricsReport report;
    report.convention = convention;
    for (const auto& rec : records) {
        Triplet t = load_triplet(rec, spec.mask_threshold);
        ImageTensor out = load_image(results.at(rec.id));
        ImageTensor gt = t.shadow_free;
        ShadowMask mask = t.mask;
        if (resolution > 0) {
            out = resize_bilinear(out, resolution, resolution);
            gt = resize_bilinear(gt, resolution, resolution);
            mask = resize_nearest(mask, resolution, resolution);
        } else if (out.height() != gt.height() || out.width() != gt.width()) {
            throw ShapeError(cat(rec.id, ": result ", out.height(), "x", out.width(),
                                 " does not match ground truth ", gt.height(), "x", gt.width()));
        }

        const Region regions[3] = {Region::shadow, Region::nonshadow, Region::all};
        RegionScores* slots[3] = {&report.shadow, &report.nonshadow, &report.all};
        for (int i = 0; i < 3; ++i) {
            slots[i]->psnr += psnr_region(out, gt, mask, regions[i]);
            slots[i]->ssim += ssim_region(out, gt, mask, regions[i]);
            slots[i]->rmse += rmse_lab_region(out, gt, mask, regions[i], convention);
        }
        ++report.n_images;
    }

    const double inv = 1.0 / static_cast<double>(report.n_images);
    for (RegionScores* r : {&report.shadow, &report.nonshadow, &report.all}) {
        r->psnr *= inv;
        r->ssim *= inv;
        r->rmse *= inv;
    }
    return report;
}

}  // namespace sf
