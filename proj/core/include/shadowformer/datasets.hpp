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
#include <map>
#include <string>
#include <vector>

#include "shadowformer/image.hpp"

namespace sf {

enum class Layout { istd, istd_plus, srd, synthetic };
enum class Split { train, test };

Layout layout_from_string(const std::string& s);
std::string to_string(Layout layout);
std::string to_string(Split split);

struct DatasetSpec {
    std::filesystem::path root;
    Layout layout = Layout::synthetic;
    Split split = Split::train;
    /// SRD only: directory of externally predicted masks. Defaults to
    /// root/{split}/mask when empty.
    std::filesystem::path srd_mask_dir;
    double mask_threshold = 0.5;
};

struct TripletRecord {
    std::string id;
    std::filesystem::path shadow_path;
    std::filesystem::path mask_path;
    std::filesystem::path shadowfree_path;
};

/// Lists matching (shadow, mask, shadow-free) triplets.
/// ISTD/ISTD+/synthetic roots hold {split}_A / {split}_B / {split}_C; SRD
/// roots hold {split}/shadow, {split}/shadow_free and a mask directory.
/// Stems are matched case-insensitively and extension-agnostically; records
/// come back sorted by id. Unmatched stems raise a LayoutError naming them.
std::vector<TripletRecord> scan(const DatasetSpec& spec);

struct Triplet {
    std::string id;
    ImageTensor shadow;
    ShadowMask mask;
    ImageTensor shadow_free;
};

/// Loads and binarizes one record; SRD masks that do not match the image
/// size are resized with nearest-neighbor.
Triplet load_triplet(const TripletRecord& record, double mask_threshold = 0.5);

/// Deterministic epoch-shuffled batch stream with co-registered random
/// crops and optional horizontal/vertical flips. Every record is visited
/// exactly once per epoch; decoded images are cached in memory.
class BatchStream {
public:
    BatchStream(std::vector<TripletRecord> records, std::int64_t batch_size,
                std::int64_t crop_size, std::uint64_t seed, bool augment,
                double mask_threshold = 0.5);

    std::vector<Triplet> next();

    std::int64_t epoch() const { return epoch_; }
    std::int64_t position() const { return pos_; }
    std::uint64_t seed() const { return seed_; }
    /// Restores the cursor (used when resuming from a checkpoint).
    void seek(std::int64_t epoch, std::int64_t position);

private:
    Triplet fetch(std::int64_t index_in_epoch);
    void reshuffle();

    std::vector<TripletRecord> records_;
    std::vector<std::int64_t> order_;
    std::map<std::string, Triplet> cache_;
    std::int64_t batch_size_;
    std::int64_t crop_;
    std::uint64_t seed_;
    bool augment_;
    double mask_threshold_;
    std::int64_t epoch_ = 0;
    std::int64_t pos_ = 0;
};

}  // namespace sf
