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

#include <string>

#include "shadowformer/datasets.hpp"
#include "shadowformer/image.hpp"

namespace sf {

enum class Region { shadow, nonshadow, all };

/// The literature's headline "RMSE" is a mean absolute error in CIELAB (the
/// per-pixel L1 norm over channels, averaged over region pixels); the rms
/// convention is the literal root-mean-square over region elements. Reports
/// always tag which convention produced their numbers.
enum class RmseConvention { mae, rms };

RmseConvention rmse_convention_from_string(const std::string& s);
std::string to_string(RmseConvention c);
std::string to_string(Region r);

/// PSNR over the region's pixels (all channels) on the 8-bit scale:
/// 10*log10(255^2 / MSE), capped at 99 dB when MSE is zero.
double psnr_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                   Region region);

/// Channel-averaged single-scale SSIM map (11x11 Gaussian window, sigma 1.5,
/// K1=0.01, K2=0.03, dynamic range 255, valid convolution). The map entry at
/// (y, x) corresponds to the window centered at (y+5, x+5).
Tensor ssim_map(const ImageTensor& a, const ImageTensor& b);

/// Mean of the SSIM map over positions whose center pixel lies in the
/// region.
double ssim_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                   Region region);

/// LAB-space error over the region under the given convention.
double rmse_lab_region(const ImageTensor& a, const ImageTensor& b, const ShadowMask& mask,
                       Region region, RmseConvention convention);

struct RegionScores {
    double psnr = 0.0;
    double ssim = 0.0;
    double rmse = 0.0;
};

struct MetricsReport {
    RegionScores shadow, nonshadow, all;
    std::int64_t n_images = 0;
    RmseConvention convention = RmseConvention::mae;

    /// Aligned table in the S | NS | ALL column order.
    std::string to_table() const;
    /// CSV lines `region,psnr,ssim,rmse,convention,n_images`.
    std::string to_csv() const;
};

/// Evaluates result images against a dataset's ground truth. Results are
/// matched to records by filename stem inside results_dir; a missing result
/// aborts with every missing stem listed. When `resolution` is positive,
/// result, ground truth, and mask are first resized to resolution^2
/// (bilinear for images, nearest for masks). Per-image metrics are averaged
/// arithmetically over the set.
MetricsReport evaluate_dataset(const std::filesystem::path& results_dir, const DatasetSpec& spec,
                               RmseConvention convention, std::int64_t resolution = 0);

}  // namespace sf
