#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gevo/numkernel.hpp"
#include "gevo/rng.hpp"

namespace gevo {

// Images are stored (N, C, H, W); vector datasets (N, D).
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int classes = 0;
    std::string split = "all";

    int size() const { return static_cast<int>(labels.size()); }
    std::vector<int> sample_shape() const;
    std::uint64_t digest() const;

    Tensor gather(std::span<const int> indices) const;
    std::vector<int> gather_labels(std::span<const int> indices) const;
    Dataset subset(std::span<const int> indices, std::string tag) const;
};

void validate(const Dataset& d);

// Each class gets a seed-derived template with entries in [0,1]; samples are
// template + noise * N(0,1), clamped to [0,1]. n must be a multiple of
// `classes`; samples cycle through the classes.
Dataset gen_synthetic(int classes, int n, std::vector<int> sample_shape, double noise, std::uint64_t seed);

// Standard CIFAR-10 binary batches: 3073-byte records of
// [label][1024 R][1024 G][1024 B], pixels scaled by 1/255.
Dataset load_cifar10_binary(std::span<const std::string> paths);
Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes);

// Seeded shuffle, then the first round(ratio * N) records go to the first set.
std::pair<Dataset, Dataset> split(const Dataset& d, double ratio, std::uint64_t seed);

// Mini-batch index lists covering [0, n); shuffled when rng is given.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng* rng);

}  // namespace gevo
