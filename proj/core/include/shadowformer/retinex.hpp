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
#include <string>
#include <utility>
#include <vector>

#include "shadowformer/image.hpp"

namespace sf {

/// Decomposed scene used to composite shadow / shadow-free pairs:
/// I = L * R with region-dependent illumination. The shadow-free
/// illumination is represented by illum_nonshadow.
struct RetinexScene {
    ImageTensor reflectance;      // R, 3xHxW in [0,1]
    ImageTensor illum_shadow;     // L_s, 3xHxW in (0,1]
    ImageTensor illum_nonshadow;  // L_ns, 3xHxW in (0,1]
    ShadowMask mask;              // 1 = shadow

    /// Checks shared sizes and elementwise L_s <= L_ns.
    void validate() const;
};

struct SceneParams {
    /// Penumbra width in pixels; 0 keeps a hard shadow boundary. Feathering
    /// raises the attenuation toward 1 inside the mask near its border, so
    /// pixels outside the mask are never affected.
    double feather_px = 0.0;
    /// Relative strength of a global illumination offset applied to the
    /// shadow-free image only (the non-shadow illumination of the composite
    /// may not exactly equal the shadow-free illumination in real scenes).
    /// 0 keeps them equal so the ground truth is exact.
    double lsf_perturbation = 0.0;
};

/// Composites (shadow, shadow_free):
///   shadow      = m * L_s * R + (1-m) * L_ns * R
///   shadow_free = L_ns * R
/// Outputs are clamped to [0,1].
std::pair<ImageTensor, ImageTensor> compose_shadow(const RetinexScene& scene);

/// Draws a deterministic random scene: smoothed color reflectance with
/// geometric texture, a mask covering 10-50% of pixels built from 1-3 convex
/// shapes, a smooth non-shadow illumination in [0.8,1.0], and per-channel
/// shadow attenuation in [0.2,0.7]. Identical seeds give identical scenes.
RetinexScene sample_scene(std::int64_t h, std::int64_t w, std::uint64_t seed,
                          const SceneParams& params = {});

struct ManifestItem {
    std::int64_t index;
    std::uint64_t seed;
    double coverage;
};

struct DatasetManifest {
    std::string split;
    std::vector<ManifestItem> items;
};

/// Writes n triplets in the ISTD directory layout ({split}_A shadow,
/// {split}_B mask, {split}_C shadow-free) plus a `manifest_{split}.txt` of
/// `index,seed,coverage` lines. Per-item seeds are seed+index. Re-running
/// with the same arguments reproduces identical files.
DatasetManifest generate_dataset(std::int64_t n, std::int64_t h, std::int64_t w,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 const std::string& split = "train",
                                 const SceneParams& params = {});

}  // namespace sf
