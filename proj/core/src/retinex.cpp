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

#include "shadowformer/retinex.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace sf {

void RetinexScene::validate() const
{
    reflectance.validate();
    illum_shadow.validate();
    illum_nonshadow.validate();
    mask.validate();
    const auto h = reflectance.height();
    const auto w = reflectance.width();
    if (illum_shadow.height() != h || illum_shadow.width() != w ||
        illum_nonshadow.height() != h || illum_nonshadow.width() != w ||
        mask.height() != h || mask.width() != w) {
        throw ShapeError("RetinexScene fields must share HxW");
    }
    for (std::int64_t i = 0; i < illum_shadow.data.numel(); ++i) {
        if (illum_shadow.data[i] > illum_nonshadow.data[i])
            throw ArgumentError("RetinexScene requires L_s <= L_ns elementwise");
        if (illum_shadow.data[i] <= 0.0 || illum_nonshadow.data[i] <= 0.0)
            throw ArgumentError("RetinexScene illumination must be positive");
    }
}

std::pair<ImageTensor, ImageTensor> compose_shadow(const RetinexScene& scene)
{
    scene.validate();
    const auto h = scene.reflectance.height();
    const auto w = scene.reflectance.width();
    ImageTensor shadow = ImageTensor::zeros(3, h, w);
    ImageTensor shadow_free = ImageTensor::zeros(3, h, w);
    for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double r = scene.reflectance.data.at(c, y, x);
                const double ls = scene.illum_shadow.data.at(c, y, x);
                const double lns = scene.illum_nonshadow.data.at(c, y, x);
                const double m = scene.mask.data.at(y, x);
                const double s = m * ls * r + (1.0 - m) * lns * r;
                shadow.data.at(c, y, x) = std::clamp(s, 0.0, 1.0);
                shadow_free.data.at(c, y, x) = std::clamp(lns * r, 0.0, 1.0);
            }
        }
    }
    return {std::move(shadow), std::move(shadow_free)};
}

namespace {

// Separable blur with a simple normalized Gaussian kernel; edges clamp.
void gaussian_blur_inplace(Tensor& field, std::int64_t h, std::int64_t w, double sigma)
{
    const auto radius = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& k : kernel) k /= sum;

    Tensor tmp({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const auto xs = std::clamp<std::int64_t>(x + i, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * field.at(y, xs);
            }
            tmp.at(y, x) = acc;
        }
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const auto ys = std::clamp<std::int64_t>(y + i, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(ys, x);
            }
            field.at(y, x) = acc;
        }
}

// Smooth random field normalized into [lo, hi].
Tensor smooth_field(Rng& rng, std::int64_t h, std::int64_t w, double lo, double hi, double sigma)
{
    Tensor f({h, w});
    for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = rng.uniform();
    gaussian_blur_inplace(f, h, w, sigma);
    double mn = f[0], mx = f[0];
    for (std::int64_t i = 0; i < f.numel(); ++i) {
        mn = std::min(mn, f[i]);
        mx = std::max(mx, f[i]);
    }
    const double span = mx - mn;
    for (std::int64_t i = 0; i < f.numel(); ++i) {
        const double t = span > 0.0 ? (f[i] - mn) / span : 0.5;
        f[i] = lo + (hi - lo) * t;
    }
    return f;
}

struct Shape {
    bool ellipse;
    double cx, cy;
    // ellipse: semi-axes + rotation; polygon: vertices (convex, ccw order)
    double ax, ay, rot;
    std::vector<double> vx, vy;

    bool contains(double x, double y) const
    {
        if (ellipse) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double c = std::cos(rot), s = std::sin(rot);
            const double u = (dx * c + dy * s) / ax;
            const double v = (-dx * s + dy * c) / ay;
            return u * u + v * v <= 1.0;
        }
        const std::size_t n = vx.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            const double cross = (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
            if (cross < 0.0) return false;
        }
        return true;
    }
};

Shape random_shape(Rng& rng, std::int64_t h, std::int64_t w)
{
    Shape s;
    s.ellipse = rng.uniform() < 0.5;
    s.cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
    s.cy = rng.uniform(0.15, 0.85) * static_cast<double>(h);
    const double base = 0.5 * static_cast<double>(std::min(h, w));
    if (s.ellipse) {
        s.ax = rng.uniform(0.2, 0.6) * base;
        s.ay = rng.uniform(0.2, 0.6) * base;
        s.rot = rng.uniform(0.0, 3.14159265358979323846);
    } else {
        // Convex polygon: points on a randomized ellipse, in angular order.
        const auto k = rng.uniform_int(3, 6);
        const double ax = rng.uniform(0.25, 0.6) * base;
        const double ay = rng.uniform(0.25, 0.6) * base;
        const double phase = rng.uniform(0.0, 6.283185307179586);
        for (std::int64_t i = 0; i < k; ++i) {
            const double ang = phase + 6.283185307179586 * static_cast<double>(i) / static_cast<double>(k);
            s.vx.push_back(s.cx + ax * std::cos(ang));
            s.vy.push_back(s.cy + ay * std::sin(ang));
        }
    }
    return s;
}

Tensor rasterize_mask(Rng& rng, std::int64_t h, std::int64_t w, double* coverage_out)
{
    // Rejection-sample shape unions until 10-50% of pixels are covered; a
    // centered ellipse (~38% coverage) is the deterministic fallback.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const auto n_shapes = rng.uniform_int(1, 3);
        std::vector<Shape> shapes;
        for (std::int64_t i = 0; i < n_shapes; ++i) shapes.push_back(random_shape(rng, h, w));

        Tensor m({h, w});
        std::int64_t count = 0;
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                bool in = false;
                for (const auto& s : shapes)
                    if (s.contains(static_cast<double>(x), static_cast<double>(y))) {
                        in = true;
                        break;
                    }
                if (in) {
                    m.at(y, x) = 1.0;
                    ++count;
                }
            }
        const double cov = static_cast<double>(count) / static_cast<double>(h * w);
        if (cov >= 0.10 && cov <= 0.50) {
            *coverage_out = cov;
            return m;
        }
    }

    Shape fallback;
    fallback.ellipse = true;
    fallback.cx = static_cast<double>(w) / 2.0;
    fallback.cy = static_cast<double>(h) / 2.0;
    fallback.ax = 0.35 * static_cast<double>(w);
    fallback.ay = 0.35 * static_cast<double>(h);
    fallback.rot = 0.0;
    Tensor m({h, w});
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            if (fallback.contains(static_cast<double>(x), static_cast<double>(y))) {
                m.at(y, x) = 1.0;
                ++count;
            }
    *coverage_out = static_cast<double>(count) / static_cast<double>(h * w);
    return m;
}

// L1 distance (in pixels) to the nearest non-mask pixel, two-pass chamfer.
Tensor distance_to_boundary(const Tensor& mask, std::int64_t h, std::int64_t w)
{
    const double inf = 1e18;
    Tensor d({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            d.at(y, x) = mask.at(y, x) > 0.5 ? inf : 0.0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            if (y > 0) d.at(y, x) = std::min(d.at(y, x), d.at(y - 1, x) + 1.0);
            if (x > 0) d.at(y, x) = std::min(d.at(y, x), d.at(y, x - 1) + 1.0);
        }
    for (std::int64_t y = h - 1; y >= 0; --y)
        for (std::int64_t x = w - 1; x >= 0; --x) {
            if (y < h - 1) d.at(y, x) = std::min(d.at(y, x), d.at(y + 1, x) + 1.0);
            if (x < w - 1) d.at(y, x) = std::min(d.at(y, x), d.at(y, x + 1) + 1.0);
        }
    return d;
}

}  // namespace

RetinexScene sample_scene(std::int64_t h, std::int64_t w, std::uint64_t seed,
                          const SceneParams& params)
{
    if (h < 16 || w < 16) throw ArgumentError(cat("scene size must be >= 16x16, got ", h, "x", w));

    Rng rng(derive_seed(seed, 0x5ce9e));
    const double blur_sigma = static_cast<double>(std::min(h, w)) / 8.0;

    // Reflectance: smooth color fields modulated by a sinusoidal pattern.
    RetinexScene scene;
    scene.reflectance = ImageTensor::zeros(3, h, w);
    for (std::int64_t c = 0; c < 3; ++c) {
        Tensor f = smooth_field(rng, h, w, 0.1, 0.95, blur_sigma);
        const double fx = rng.uniform(0.5, 3.0);
        const double fy = rng.uniform(0.5, 3.0);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double amp = rng.uniform(0.1, 0.3);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double t = 0.5 + 0.5 * std::sin(6.283185307179586 *
                                                          (fx * static_cast<double>(x) / static_cast<double>(w) +
                                                           fy * static_cast<double>(y) / static_cast<double>(h)) +
                                                      phase);
                const double v = f.at(y, x) * (1.0 - amp + amp * t);
                scene.reflectance.data.at(c, y, x) = std::clamp(v, 0.05, 1.0);
            }
    }

    // Non-shadow illumination: smooth per-channel fields in [0.8, 1.0].
    scene.illum_nonshadow = ImageTensor::zeros(3, h, w);
    for (std::int64_t c = 0; c < 3; ++c) {
        Tensor f = smooth_field(rng, h, w, 0.8, 1.0, blur_sigma);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) scene.illum_nonshadow.data.at(c, y, x) = f.at(y, x);
    }

    double coverage = 0.0;
    Tensor mask = rasterize_mask(rng, h, w, &coverage);
    scene.mask.data = mask;

    // Shadow illumination: per-channel attenuation, optionally feathered
    // toward 1 near the inside of the mask border.
    double alpha[3];
    for (double& a : alpha) a = rng.uniform(0.2, 0.7);

    Tensor feather_gain({h, w});
    feather_gain.fill(0.0);
    if (params.feather_px > 0.0) {
        const Tensor dist = distance_to_boundary(mask, h, w);
        for (std::int64_t i = 0; i < dist.numel(); ++i) {
            const double t = std::min(dist[i] / params.feather_px, 1.0);
            feather_gain[i] = 1.0 - t;  // 1 at the border, 0 deep inside
        }
    }

    scene.illum_shadow = ImageTensor::zeros(3, h, w);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double a_eff = alpha[c] + (1.0 - alpha[c]) * feather_gain.at(y, x);
                scene.illum_shadow.data.at(c, y, x) = a_eff * scene.illum_nonshadow.data.at(c, y, x);
            }

    scene.validate();
    return scene;
}

DatasetManifest generate_dataset(std::int64_t n, std::int64_t h, std::int64_t w,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 const std::string& split, const SceneParams& params)
{
    if (n < 0) throw ArgumentError(cat("triplet count must be >= 0, got ", n));
    namespace fs = std::filesystem;
    std::error_code ec;
    const fs::path dir_a = out_dir / (split + "_A");
    const fs::path dir_b = out_dir / (split + "_B");
    const fs::path dir_c = out_dir / (split + "_C");
    for (const auto& d : {dir_a, dir_b, dir_c}) {
        fs::create_directories(d, ec);
        if (ec) throw IoError(cat("cannot create directory ", d.string(), ": ", ec.message()));
    }

    DatasetManifest manifest;
    manifest.split = split;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::uint64_t item_seed = seed + static_cast<std::uint64_t>(i);
        RetinexScene scene = sample_scene(h, w, item_seed, params);
        auto [shadow, shadow_free] = compose_shadow(scene);

        if (params.lsf_perturbation > 0.0) {
            // Perturbed shadow-free illumination, recomposed from the scene.
            Rng prng(derive_seed(item_seed, 0x1f5f));
            ImageTensor gt = ImageTensor::zeros(3, h, w);
            for (std::int64_t c = 0; c < 3; ++c) {
                const double factor = 1.0 - params.lsf_perturbation * prng.uniform();
                for (std::int64_t y = 0; y < h; ++y)
                    for (std::int64_t x = 0; x < w; ++x)
                        gt.data.at(c, y, x) = std::clamp(
                            factor * scene.illum_nonshadow.data.at(c, y, x) *
                                scene.reflectance.data.at(c, y, x),
                            0.0, 1.0);
            }
            shadow_free = gt;
        }

        char stem[24];
        std::snprintf(stem, sizeof(stem), "%06lld", static_cast<long long>(i));
        try {
            save_png(shadow, dir_a / (std::string(stem) + ".png"));
            save_png(scene.mask, dir_b / (std::string(stem) + ".png"));
            save_png(shadow_free, dir_c / (std::string(stem) + ".png"));
        } catch (const Error& e) {
            throw IoError(cat("while writing triplet ", stem, " under ", out_dir.string(), ": ",
                              e.what()));
        }
        manifest.items.push_back({i, item_seed, scene.mask.coverage()});
    }

    const fs::path manifest_path = out_dir / ("manifest_" + split + ".txt");
    std::ofstream mf(manifest_path);
    if (!mf) throw IoError(cat("cannot write manifest: ", manifest_path.string()));
    for (const auto& item : manifest.items) {
        mf << item.index << ',' << item.seed << ',' << std::setprecision(6) << std::fixed
           << item.coverage << '\n';
        mf << std::defaultfloat;
    }
    return manifest;
}

}  // namespace sf
