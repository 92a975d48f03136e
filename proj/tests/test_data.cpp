#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "gevo/data.hpp"
#include "gevo/error.hpp"

using namespace gevo;

namespace {

// Two records: label 3 with pixel bytes i % 256, label 9 with 255 - (i % 256).
std::vector<std::uint8_t> cifar_fixture() {
    std::vector<std::uint8_t> bytes;
    bytes.push_back(3);
    for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(i % 256));
    bytes.push_back(9);
    for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(255 - i % 256));
    return bytes;
}

std::string write_temp(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path.string();
}

}  // namespace

TEST_CASE("CIFAR-10 fixture round-trips exact pixel values") {
    const auto bytes = cifar_fixture();
    const std::string path = write_temp("gevo_cifar_fixture.bin", bytes);
    const std::vector<std::string> paths{path};
    const Dataset d = load_cifar10_binary(paths);
    REQUIRE(d.size() == 2);
    CHECK(d.classes == 10);
    CHECK(d.labels == std::vector<int>{3, 9});
    CHECK(d.images.shape() == std::vector<int>{2, 3, 32, 32});
    for (int i = 0; i < 3072; ++i) {
        CHECK(d.images[i] == static_cast<float>(i % 256) / 255.0f);
        CHECK(d.images[3072 + i] == static_cast<float>(255 - i % 256) / 255.0f);
    }
    // Channel planes are preserved: the first green pixel is byte 1024.
    CHECK(d.images[1024] == static_cast<float>(1024 % 256) / 255.0f);
    std::filesystem::remove(path);
}

TEST_CASE("CIFAR-10 errors") {
    auto bytes = cifar_fixture();
    SUBCASE("truncated file") {
        bytes.pop_back();
        const std::string path = write_temp("gevo_cifar_truncated.bin", bytes);
        const std::vector<std::string> paths{path};
        CHECK_THROWS_AS(load_cifar10_binary(paths), FormatError);
        std::filesystem::remove(path);
    }
    SUBCASE("bad label") {
        bytes[3073] = 10;
        CHECK_THROWS_AS(parse_cifar10_binary(bytes), FormatError);
    }
    SUBCASE("missing file") {
        const std::vector<std::string> paths{"/nonexistent/gevo.bin"};
        CHECK_THROWS_AS(load_cifar10_binary(paths), FormatError);
    }
    SUBCASE("standard file length") {
        CHECK(30730000 % 3073 == 0);
        CHECK(30730000 / 3073 == 10000);
    }
}

TEST_CASE("synthetic generator") {
    SUBCASE("same seed gives the same digest") {
        const Dataset a = gen_synthetic(4, 40, {3, 8, 8}, 0.1, 5);
        const Dataset b = gen_synthetic(4, 40, {3, 8, 8}, 0.1, 5);
        CHECK(a.digest() == b.digest());
        CHECK(a.digest() != gen_synthetic(4, 40, {3, 8, 8}, 0.1, 6).digest());
    }
    SUBCASE("exact balance and bounds") {
        const Dataset d = gen_synthetic(3, 30, {5}, 0.5, 1);
        std::map<int, int> counts;
        for (int l : d.labels) ++counts[l];
        CHECK(counts == std::map<int, int>{{0, 10}, {1, 10}, {2, 10}});
        for (float v : d.images.values()) CHECK((v >= 0.0f && v <= 1.0f));
        CHECK_THROWS_AS(gen_synthetic(3, 31, {5}, 0.5, 1), ValidationError);
        CHECK_THROWS_AS(gen_synthetic(1, 10, {5}, 0.5, 1), ValidationError);
    }
    SUBCASE("noise 0 is separable by nearest template") {
        const Dataset d = gen_synthetic(5, 50, {2, 4, 4}, 0.0, 9);
        const std::size_t dim = 32;
        // Templates recovered as class means.
        std::vector<std::vector<double>> mean(5, std::vector<double>(dim, 0.0));
        for (int i = 0; i < d.size(); ++i)
            for (std::size_t k = 0; k < dim; ++k) mean[d.labels[i]][k] += d.images[i * dim + k] / 10.0;
        int correct = 0;
        for (int i = 0; i < d.size(); ++i) {
            int best = -1;
            double best_dist = 1e300;
            for (int c = 0; c < 5; ++c) {
                double dist = 0;
                for (std::size_t k = 0; k < dim; ++k) {
                    const double diff = d.images[i * dim + k] - mean[c][k];
                    dist += diff * diff;
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c;
                }
            }
            correct += best == d.labels[i];
        }
        CHECK(correct == d.size());
    }
}

TEST_CASE("split") {
    SUBCASE("50,000 at 0.8 gives 40,000 / 10,000") {
        const Dataset d = gen_synthetic(10, 50000, {1}, 0.1, 2);
        const auto [train, val] = split(d, 0.8, 3);
        CHECK(train.size() == 40000);
        CHECK(val.size() == 10000);
    }
    SUBCASE("disjoint, exhaustive and deterministic") {
        // Unique values make every record identifiable.
        Dataset d;
        d.classes = 2;
        d.images = Tensor({101, 1});
        for (int i = 0; i < 101; ++i) {
            d.images[i] = static_cast<float>(i);
            d.labels.push_back(i % 2);
        }
        const auto [a, b] = split(d, 0.7, 11);
        std::vector<float> all;
        for (float v : a.images.values()) all.push_back(v);
        for (float v : b.images.values()) all.push_back(v);
        std::sort(all.begin(), all.end());
        REQUIRE(all.size() == 101);
        for (int i = 0; i < 101; ++i) CHECK(all[i] == static_cast<float>(i));
        for (int i = 0; i < a.size(); ++i) CHECK(a.labels[i] == static_cast<int>(a.images[i]) % 2);

        const auto [a2, b2] = split(d, 0.7, 11);
        CHECK(a.digest() == a2.digest());
        CHECK(b.digest() == b2.digest());
        const auto [a3, b3] = split(d, 0.7, 12);
        CHECK(a.digest() != a3.digest());
    }
    SUBCASE("degenerate sides") {
        const Dataset d = gen_synthetic(2, 4, {1}, 0.1, 2);
        CHECK_THROWS_AS(split(d, 0.0, 1), ValidationError);
        CHECK_THROWS_AS(split(d, 0.05, 1), ValidationError);
        CHECK_THROWS_AS(split(d, 1.0, 1), ValidationError);
    }
}

TEST_CASE("batches") {
    const auto plain = make_batches(10, 4, nullptr);
    REQUIRE(plain.size() == 3);
    CHECK(plain[2] == std::vector<int>{8, 9});
    Rng r1(4), r2(4);
    CHECK(make_batches(100, 32, &r1) == make_batches(100, 32, &r2));
    Rng r3(4);
    std::vector<int> seen;
    for (const auto& b : make_batches(100, 32, &r3)) seen.insert(seen.end(), b.begin(), b.end());
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 100; ++i) CHECK(seen[i] == i);
}
