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

#include <benchmark/benchmark.h>

#include "shadowformer/metrics.hpp"
#include "shadowformer/model.hpp"
#include "shadowformer/training.hpp"

namespace {

using namespace sf;

ImageTensor bench_image(std::int64_t size, std::uint64_t seed)
{
    Rng rng(seed);
    ImageTensor img = ImageTensor::zeros(3, size, size);
    for (std::int64_t i = 0; i < img.data.numel(); ++i) img.data[i] = rng.uniform();
    return img;
}

ShadowMask bench_mask(std::int64_t size, std::uint64_t seed)
{
    Rng rng(seed);
    ShadowMask m;
    m.data = Tensor({size, size});
    for (std::int64_t i = 0; i < m.data.numel(); ++i)
        m.data[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    return m;
}

void ForwardToy64(benchmark::State& state)
{
    ShadowFormerNet net(ModelConfig::toy_preset(), 0);
    const auto img = bench_image(64, 1);
    const auto mask = bench_mask(64, 2);
    for (auto _ : state) {
        auto out = net.forward(img, mask);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(ForwardToy64)->Unit(benchmark::kMillisecond);

void ForwardSmall256(benchmark::State& state)
{
    ShadowFormerNet net(ModelConfig::small_preset(), 0);
    const auto img = bench_image(256, 3);
    const auto mask = bench_mask(256, 4);
    for (auto _ : state) {
        auto out = net.forward(img, mask);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(ForwardSmall256)->Unit(benchmark::kMillisecond);

void TrainStepToy(benchmark::State& state)
{
    ShadowFormerNet net(ModelConfig::toy_preset(), 0);
    TrainConfig cfg;
    AdamW opt(net.parameters(), cfg);
    std::vector<Triplet> batch;
    for (int i = 0; i < 4; ++i) {
        Triplet t;
        t.id = "bench";
        t.shadow = bench_image(64, 10 + i);
        t.shadow_free = bench_image(64, 20 + i);
        t.mask = bench_mask(64, 30 + i);
        batch.push_back(std::move(t));
    }
    for (auto _ : state) {
        const double loss = train_step(net, opt, batch, 1e-4);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(TrainStepToy)->Unit(benchmark::kMillisecond);

void WindowAttention64Tokens(benchmark::State& state)
{
    Rng rng(5);
    nn::WindowAttention attn("attn", 64, 1);
    attn.init(rng);
    Tensor tokens({64, 64});
    for (std::int64_t i = 0; i < tokens.numel(); ++i) tokens[i] = rng.uniform(-1.0, 1.0);
    Tensor mvec({64});
    for (std::int64_t i = 0; i < 64; ++i) mvec[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const Tensor corr = nn::correlation_map(mvec);
    for (auto _ : state) {
        auto out = nn::sia_window(attn, tokens, corr, 0.2);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(WindowAttention64Tokens)->Unit(benchmark::kMicrosecond);

void SrgbToLab256(benchmark::State& state)
{
    const auto img = bench_image(256, 6);
    for (auto _ : state) {
        auto lab = srgb_to_lab(img);
        benchmark::DoNotOptimize(lab.data());
    }
}
BENCHMARK(SrgbToLab256)->Unit(benchmark::kMillisecond);

void SsimMap256(benchmark::State& state)
{
    const auto a = bench_image(256, 7);
    const auto b = bench_image(256, 8);
    for (auto _ : state) {
        auto map = ssim_map(a, b);
        benchmark::DoNotOptimize(map.data());
    }
}
BENCHMARK(SsimMap256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
