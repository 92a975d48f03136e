#include "gevo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "gevo/error.hpp"
#include "gevo/hash.hpp"

namespace gevo {

namespace {

constexpr int kCifarSide = 32;
constexpr int kCifarPixels = kCifarSide * kCifarSide;
constexpr int kCifarRecord = 1 + 3 * kCifarPixels;
constexpr int kCifarClasses = 10;

}  // namespace

std::vector<int> Dataset::sample_shape() const {
    return std::vector<int>(images.shape().begin() + 1, images.shape().end());
}

std::uint64_t Dataset::digest() const {
    Hasher h;
    h.u32(static_cast<std::uint32_t>(classes));
    for (int d : images.shape()) h.u32(static_cast<std::uint32_t>(d));
    for (float v : images.values()) h.f32(v);
    for (int y : labels) h.u32(static_cast<std::uint32_t>(y));
    return h.digest();
}

Tensor Dataset::gather(std::span<const int> indices) const {
    auto shape = images.shape();
    const std::size_t stride = images.size() / static_cast<std::size_t>(shape[0]);
    shape[0] = static_cast<int>(indices.size());
    Tensor out(shape);
    float* dst = out.data();
    for (int idx : indices) {
        if (idx < 0 || idx >= size()) throw ValidationError("dataset index out of range");
        const float* src = images.data() + static_cast<std::size_t>(idx) * stride;
        dst = std::copy(src, src + stride, dst);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const int> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int idx : indices) out.push_back(labels.at(static_cast<std::size_t>(idx)));
    return out;
}

Dataset Dataset::subset(std::span<const int> indices, std::string tag) const {
    return Dataset{gather(indices), gather_labels(indices), classes, std::move(tag)};
}

void validate(const Dataset& d) {
    if (d.size() == 0) throw ValidationError("dataset is empty");
    if (d.images.rank() < 2 || d.images.dim(0) != d.size()) throw ValidationError("dataset image/label count mismatch");
    for (int y : d.labels)
        if (y < 0 || y >= d.classes) throw ValidationError("dataset label out of range");
}

Dataset gen_synthetic(int classes, int n, std::vector<int> sample_shape, double noise, std::uint64_t seed) {
    if (classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
    if (n <= 0 || n % classes != 0) {
        throw ValidationError("synthetic sample count " + std::to_string(n) + " must be a positive multiple of " +
                              std::to_string(classes));
    }
    if (noise < 0.0) throw ValidationError("noise must be non-negative");
    const std::size_t per = shape_numel(sample_shape);
    std::vector<std::vector<float>> templates(static_cast<std::size_t>(classes), std::vector<float>(per));
    for (int c = 0; c < classes; ++c) {
        Rng rng = derive_rng(seed, static_cast<std::uint64_t>(c));
        for (auto& v : templates[c]) v = static_cast<float>(uniform01(rng));
    }
    std::vector<int> shape{n};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Dataset d{Tensor(shape), std::vector<int>(static_cast<std::size_t>(n)), classes, "all"};
    Rng rng = derive_rng(seed, 0xda7aULL);
    for (int i = 0; i < n; ++i) {
        const int c = i % classes;
        d.labels[i] = c;
        float* dst = d.images.data() + static_cast<std::size_t>(i) * per;
        for (std::size_t k = 0; k < per; ++k) {
            const double v = templates[c][k] + noise * standard_normal(rng);
            dst[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return d;
}

Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
        throw FormatError("CIFAR-10 data length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                          std::to_string(kCifarRecord));
    }
    const int n = static_cast<int>(bytes.size() / kCifarRecord);
    Dataset d{Tensor({n, 3, kCifarSide, kCifarSide}), std::vector<int>(static_cast<std::size_t>(n)), kCifarClasses,
              "all"};
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + static_cast<std::size_t>(i) * kCifarRecord;
        if (rec[0] >= kCifarClasses) {
            throw FormatError("CIFAR-10 record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
        }
        d.labels[i] = rec[0];
        float* dst = d.images.data() + static_cast<std::size_t>(i) * 3 * kCifarPixels;
        for (int k = 0; k < 3 * kCifarPixels; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
    }
    return d;
}

Dataset load_cifar10_binary(std::span<const std::string> paths) {
    if (paths.empty()) throw ValidationError("no CIFAR-10 files given");
    std::vector<std::uint8_t> all;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open CIFAR-10 file " + path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
            throw FormatError(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                              std::to_string(kCifarRecord));
        }
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    return parse_cifar10_binary(all);
}

std::pair<Dataset, Dataset> split(const Dataset& d, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0,1)");
    const int first = static_cast<int>(std::llround(ratio * d.size()));
    if (first <= 0 || first >= d.size()) throw ValidationError("split leaves one side empty");
    std::vector<int> order(static_cast<std::size_t>(d.size()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = derive_rng(seed, 0x5b117ULL);
    shuffle(std::span<int>(order), rng);
    std::span<const int> all(order);
    return {d.subset(all.first(static_cast<std::size_t>(first)), "train"),
            d.subset(all.subspan(static_cast<std::size_t>(first)), "val")};
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng* rng) {
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (rng) shuffle(std::span<int>(order), *rng);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace gevo
