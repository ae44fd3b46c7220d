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

#include "shadowformer/datasets.hpp"

#include <algorithm>
#include <cctype>

namespace sf {

namespace fs = std::filesystem;

Layout layout_from_string(const std::string& s)
{
    if (s == "istd") return Layout::istd;
    if (s == "istd_plus" || s == "istd+") return Layout::istd_plus;
    if (s == "srd") return Layout::srd;
    if (s == "synthetic") return Layout::synthetic;
    throw ArgumentError(cat("unknown dataset layout: ", s));
}

std::string to_string(Layout layout)
{
    switch (layout) {
        case Layout::istd: return "istd";
        case Layout::istd_plus: return "istd_plus";
        case Layout::srd: return "srd";
        case Layout::synthetic: return "synthetic";
    }
    return "?";
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool is_image_file(const fs::path& p)
{
    const std::string ext = lower(p.extension().string());
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Lowercased stem -> path, for extension-agnostic matching.
std::map<std::string, fs::path> index_dir(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw LayoutError(cat("missing dataset directory: ", dir.string()));
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        out[lower(entry.path().stem().string())] = entry.path();
    }
    return out;
}

std::vector<TripletRecord> match_dirs(const fs::path& shadow_dir, const fs::path& mask_dir,
                                      const fs::path& free_dir)
{
    const auto shadows = index_dir(shadow_dir);
    const auto masks = index_dir(mask_dir);
    const auto frees = index_dir(free_dir);

    std::vector<std::string> problems;
    std::vector<TripletRecord> records;
    for (const auto& [stem, path] : shadows) {
        const auto mi = masks.find(stem);
        const auto fi = frees.find(stem);
        if (mi == masks.end()) problems.push_back(cat(stem, ": no mask in ", mask_dir.string()));
        if (fi == frees.end())
            problems.push_back(cat(stem, ": no shadow-free image in ", free_dir.string()));
        if (mi == masks.end() || fi == frees.end()) continue;
        records.push_back({stem, path, mi->second, fi->second});
    }
    for (const auto& [stem, path] : masks)
        if (!shadows.count(stem)) problems.push_back(cat(stem, ": mask without shadow image"));
    for (const auto& [stem, path] : frees)
        if (!shadows.count(stem))
            problems.push_back(cat(stem, ": shadow-free image without shadow image"));

    if (!problems.empty()) {
        std::string msg = "unmatched dataset entries:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw LayoutError(msg);
    }
    std::sort(records.begin(), records.end(),
              [](const TripletRecord& a, const TripletRecord& b) { return a.id < b.id; });
    return records;
}

}  // namespace

std::vector<TripletRecord> scan(const DatasetSpec& spec)
{
    if (!fs::exists(spec.root))
        throw LayoutError(cat("dataset root does not exist: ", spec.root.string()));
    const std::string split = to_string(spec.split);

    std::vector<TripletRecord> records;
    switch (spec.layout) {
        case Layout::istd:
        case Layout::istd_plus:
        case Layout::synthetic:
            records = match_dirs(spec.root / (split + "_A"), spec.root / (split + "_B"),
                                 spec.root / (split + "_C"));
            break;
        case Layout::srd: {
            const fs::path base = spec.root / split;
            const fs::path mask_dir =
                spec.srd_mask_dir.empty() ? base / "mask" : spec.srd_mask_dir;
            records = match_dirs(base / "shadow", mask_dir, base / "shadow_free");
            break;
        }
    }
    if (records.empty())
        throw LayoutError(cat("no triplets found under ", spec.root.string(), " (layout ",
                              to_string(spec.layout), ", split ", split, ")"));
    return records;
}

Triplet load_triplet(const TripletRecord& record, double mask_threshold)
{
    Triplet t;
    t.id = record.id;
    t.shadow = load_image(record.shadow_path);
    t.shadow_free = load_image(record.shadowfree_path);
    ImageTensor mask_img = load_image(record.mask_path);

    if (t.shadow.height() != t.shadow_free.height() || t.shadow.width() != t.shadow_free.width())
        throw ShapeError(cat(record.id, ": shadow and shadow-free sizes differ"));

    ShadowMask mask = binarize_mask(mask_img, mask_threshold);
    if (mask.height() != t.shadow.height() || mask.width() != t.shadow.width())
        mask = resize_nearest(mask, t.shadow.height(), t.shadow.width());
    t.mask = std::move(mask);
    return t;
}

BatchStream::BatchStream(std::vector<TripletRecord> records, std::int64_t batch_size,
                         std::int64_t crop_size, std::uint64_t seed, bool augment,
                         double mask_threshold)
    : records_(std::move(records)),
      batch_size_(batch_size),
      crop_(crop_size),
      seed_(seed),
      augment_(augment),
      mask_threshold_(mask_threshold)
{
    if (records_.empty()) throw ArgumentError("BatchStream requires a non-empty record list");
    if (batch_size_ < 1) throw ArgumentError("batch size must be >= 1");
    reshuffle();
}

void BatchStream::reshuffle()
{
    order_.resize(records_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
    Rng rng(derive_seed(derive_seed(seed_, 0x9e7a), static_cast<std::uint64_t>(epoch_)));
    for (std::size_t i = order_.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order_[i - 1], order_[j]);
    }
}

void BatchStream::seek(std::int64_t epoch, std::int64_t position)
{
    epoch_ = epoch;
    pos_ = position;
    reshuffle();
}

namespace {

Tensor crop3(const Tensor& t, std::int64_t y0, std::int64_t x0, std::int64_t size)
{
    Tensor out({t.dim(0), size, size});
    for (std::int64_t c = 0; c < t.dim(0); ++c)
        for (std::int64_t y = 0; y < size; ++y)
            for (std::int64_t x = 0; x < size; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
    return out;
}

Tensor crop2(const Tensor& t, std::int64_t y0, std::int64_t x0, std::int64_t size)
{
    Tensor out({size, size});
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) out.at(y, x) = t.at(y0 + y, x0 + x);
    return out;
}

void flip3(Tensor& t, bool horizontal, bool vertical)
{
    const auto c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (horizontal)
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w / 2; ++x)
                    std::swap(t.at(ci, y, x), t.at(ci, y, w - 1 - x));
    if (vertical)
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t y = 0; y < h / 2; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    std::swap(t.at(ci, y, x), t.at(ci, h - 1 - y, x));
}

void flip2(Tensor& t, bool horizontal, bool vertical)
{
    const auto h = t.dim(0), w = t.dim(1);
    if (horizontal)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w / 2; ++x) std::swap(t.at(y, x), t.at(y, w - 1 - x));
    if (vertical)
        for (std::int64_t y = 0; y < h / 2; ++y)
            for (std::int64_t x = 0; x < w; ++x) std::swap(t.at(y, x), t.at(h - 1 - y, x));
}

}  // namespace

Triplet BatchStream::fetch(std::int64_t index_in_epoch)
{
    const auto record_idx = order_[static_cast<std::size_t>(index_in_epoch)];
    const TripletRecord& rec = records_[static_cast<std::size_t>(record_idx)];
    auto it = cache_.find(rec.id);
    if (it == cache_.end())
        it = cache_.emplace(rec.id, load_triplet(rec, mask_threshold_)).first;
    Triplet item = it->second;

    Rng rng(derive_seed(derive_seed(seed_ ^ 0xA06C57ULL, static_cast<std::uint64_t>(epoch_)),
                        static_cast<std::uint64_t>(index_in_epoch)));

    if (crop_ > 0) {
        const auto h = item.shadow.height();
        const auto w = item.shadow.width();
        if (crop_ > h || crop_ > w)
            throw ArgumentError(cat("crop ", crop_, " exceeds image ", h, "x", w, " for record ",
                                    rec.id));
        const auto y0 = rng.uniform_int(0, h - crop_);
        const auto x0 = rng.uniform_int(0, w - crop_);
        item.shadow.data = crop3(item.shadow.data, y0, x0, crop_);
        item.shadow_free.data = crop3(item.shadow_free.data, y0, x0, crop_);
        item.mask.data = crop2(item.mask.data, y0, x0, crop_);
    }
    if (augment_) {
        const bool fh = rng.uniform() < 0.5;
        const bool fv = rng.uniform() < 0.5;
        flip3(item.shadow.data, fh, fv);
        flip3(item.shadow_free.data, fh, fv);
        flip2(item.mask.data, fh, fv);
    }
    return item;
}

std::vector<Triplet> BatchStream::next()
{
    std::vector<Triplet> batch;
    batch.reserve(static_cast<std::size_t>(batch_size_));
    for (std::int64_t i = 0; i < batch_size_; ++i) {
        if (pos_ >= static_cast<std::int64_t>(order_.size())) {
            pos_ = 0;
            ++epoch_;
            reshuffle();
        }
        batch.push_back(fetch(pos_++));
    }
    return batch;
}

}  // namespace sf
