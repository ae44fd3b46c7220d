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
#include <utility>

#include "shadowformer/tensor.hpp"

namespace sf {

/// An image as a (channels, H, W) tensor with values in [0, 1].
/// Channel order is R, G, B for color images.
struct ImageTensor {
    Tensor data;

    ImageTensor() = default;
    explicit ImageTensor(Tensor t);

    static ImageTensor zeros(std::int64_t channels, std::int64_t h, std::int64_t w);

    std::int64_t channels() const { return data.dim(0); }
    std::int64_t height() const { return data.dim(1); }
    std::int64_t width() const { return data.dim(2); }

    /// Throws ShapeError / ArgumentError if the (C,H,W) contract is violated.
    void validate() const;
};

/// Binary shadow mask, (H, W) with values in {0, 1}; 1 marks shadow.
struct ShadowMask {
    Tensor data;

    ShadowMask() = default;
    explicit ShadowMask(Tensor t);

    std::int64_t height() const { return data.dim(0); }
    std::int64_t width() const { return data.dim(1); }

    /// Fraction of pixels equal to 1.
    double coverage() const;

    void validate() const;
};

/// Loads an 8- or 16-bit PNG or an 8-bit JPEG. Values are scaled to [0,1]
/// by the bit-depth maximum. Grayscale files load with one channel; palette
/// images expand to RGB; alpha channels are stripped. A warning is emitted
/// for JPEG inputs (lossy masks).
ImageTensor load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG; values are round(v*255) clamped to [0,255].
void save_png(const ImageTensor& img, const std::filesystem::path& path);
void save_png(const ShadowMask& mask, const std::filesystem::path& path);

/// Thresholds channel-mean intensity: output is 1 where mean > threshold.
ShadowMask binarize_mask(const ImageTensor& img, double threshold = 0.5);

/// sRGB (D65, 2 degree observer) -> CIELAB, computed in 64-bit.
/// Returns a (3,H,W) tensor with L in [0,100].
Tensor srgb_to_lab(const ImageTensor& img);

/// Bilinear resize with the align-corners-false convention. Resizing to the
/// identical size returns an exact copy.
ImageTensor resize_bilinear(const ImageTensor& img, std::int64_t h, std::int64_t w);

/// Nearest-neighbor resize for masks (same sampling convention).
ShadowMask resize_nearest(const ShadowMask& mask, std::int64_t h, std::int64_t w);

/// Clamps all values into [0, 1]; used on network output at inference.
ImageTensor clamp_output(const ImageTensor& img);

}  // namespace sf
