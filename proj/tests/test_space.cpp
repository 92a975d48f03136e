#include <map>
#include <set>

#include "doctest.h"
#include "gevo/error.hpp"
#include "gevo/space.hpp"
#include "test_util.hpp"

using namespace gevo;

namespace {

// Counts valid blocks by trying every assignment of {0..K} to the 14
// strictly-lower cells of the hidden rows (cells elsewhere are forced to 0
// and covered by the codec tests).
std::uint64_t brute_force_full(int k) {
    std::vector<std::pair<int, int>> cells;
    for (int r = 2; r < 6; ++r)
        for (int c = 0; c < r; ++c) cells.emplace_back(r, c);
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < cells.size(); ++i) total *= static_cast<std::uint64_t>(k + 1);
    std::uint64_t valid = 0;
    for (std::uint64_t code = 0; code < total; ++code) {
        BlockGenome g;
        std::uint64_t rest = code;
        for (const auto& [r, c] : cells) {
            g.at(r, c) = static_cast<OpCode>(rest % static_cast<std::uint64_t>(k + 1));
            rest /= static_cast<std::uint64_t>(k + 1);
        }
        if (!find_violation(g, k)) ++valid;
    }
    return valid;
}

// Same enumeration, exploiting that every invariant constrains one row only:
// count each row's valid assignments with the other rows held at a valid
// reference, then multiply.
std::uint64_t brute_force_by_rows(int k) {
    BlockGenome reference;
    for (int r = 2; r < 6; ++r) reference.at(r, 0) = reference.at(r, 1) = 1;
    std::uint64_t product = 1;
    for (int r = 2; r < 6; ++r) {
        std::uint64_t combos = 1;
        for (int c = 0; c < r; ++c) combos *= static_cast<std::uint64_t>(k + 1);
        std::uint64_t valid = 0;
        for (std::uint64_t code = 0; code < combos; ++code) {
            BlockGenome g = reference;
            std::uint64_t rest = code;
            for (int c = 0; c < r; ++c) {
                g.at(r, c) = static_cast<OpCode>(rest % static_cast<std::uint64_t>(k + 1));
                rest /= static_cast<std::uint64_t>(k + 1);
            }
            if (!find_violation(g, k)) ++valid;
        }
        product *= valid;
    }
    return product;
}

std::uint64_t topology_key(const BlockGenome& g) {
    std::uint64_t key = 0;
    for (int r = 2; r < 6; ++r)
        for (int c = 0; c < r; ++c) key = key * 2 + (g.at(r, c) != 0 ? 1 : 0);
    return key;
}

}  // namespace

TEST_CASE("op sets") {
    const OpSet conv = OpSet::by_name("conv5");
    CHECK(conv.size() == 5);
    CHECK(conv.at(1).kind == OpKind::Zero);
    CHECK(conv.at(3).kind == OpKind::Conv3x3Relu);
    CHECK_FALSE(conv.vector_mode());
    const OpSet vec = OpSet::by_name("vec4");
    CHECK(vec.size() == 4);
    CHECK(vec.vector_mode());
    CHECK(OpSet::by_name("conv5", 1).size() == 1);
    CHECK_THROWS_AS(OpSet::by_name("resnet"), ConfigError);
    CHECK_THROWS_AS(OpSet::by_name("vec4", 7), ConfigError);
    CHECK_THROWS_AS(conv.at(6), ValidationError);
}

TEST_CASE("block counts match exhaustive enumeration") {
    CHECK(brute_force_full(1) == 180);
    CHECK(count_block_genomes(1) == 180);
    CHECK(brute_force_full(2) == count_block_genomes(2));
    CHECK(brute_force_by_rows(1) == 180);
    CHECK(brute_force_by_rows(2) == count_block_genomes(2));
    CHECK(brute_force_by_rows(3) == count_block_genomes(3));
    CHECK(count_block_genomes(4) == 11796480);
    CHECK_THROWS_AS(count_block_genomes(0), ValidationError);
}

TEST_CASE("K=4 count cross-checked by topology x op-assignment enumeration") {
    // 180 topologies (enumerated above) times all 4^8 op fillings of one of
    // them, each verified valid and distinct.
    BlockGenome topo;
    for (int r = 2; r < 6; ++r) topo.at(r, 0) = topo.at(r, 1) = 1;
    const auto es = edges(topo);
    std::set<BlockGenome> distinct;
    for (int code = 0; code < 65536; ++code) {
        BlockGenome g = topo;
        int rest = code;
        for (const auto& e : es) {
            g.at(e.dest, e.src) = static_cast<OpCode>(1 + rest % 4);
            rest /= 4;
        }
        REQUIRE_FALSE(find_violation(g, 4));
        distinct.insert(g);
    }
    CHECK(BigInt(180) * distinct.size() == count_block_genomes(4));

    // Every sampled K=4 block is valid and lands on one of the 180 topologies.
    const OpSet ops = OpSet::by_name("conv5", 4);
    Rng rng(99);
    std::set<std::uint64_t> topologies;
    for (int i = 0; i < 20000; ++i) {
        const auto g = random_block(ops, rng);
        REQUIRE_FALSE(find_violation(g, 4));
        topologies.insert(topology_key(g));
    }
    CHECK(topologies.size() == 180);
}

TEST_CASE("random_block is uniform over topologies") {
    const OpSet ops = OpSet::by_name("conv5", 1);
    Rng rng(2024);
    std::map<std::uint64_t, long> counts;
    const int samples = 100000;
    for (int i = 0; i < samples; ++i) {
        const auto g = random_block(ops, rng);
        for (const auto& e : edges(g)) REQUIRE(e.op == 1);
        ++counts[topology_key(g)];
    }
    REQUIRE(counts.size() == 180);
    std::vector<long> observed;
    for (const auto& [k, c] : counts) observed.push_back(c);
    // chi-square 0.99 quantile at 179 degrees of freedom.
    CHECK(testutil::chi_square_uniform(observed) < 225.93);
}

TEST_CASE("random_block is deterministic per seed") {
    const OpSet ops = OpSet::by_name("conv5");
    Rng a(7), b(7);
    CHECK(random_block(ops, a) == random_block(ops, b));
}

TEST_CASE("complete_network preserves the prefix") {
    const OpSet ops = OpSet::by_name("conv5");
    const SkeletonSpec sk(5);
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        NetworkGenome partial = random_network(sk, ops, rng);
        const int keep = trial % 6;
        partial.blocks.resize(static_cast<std::size_t>(keep));
        const NetworkGenome full = complete_network(partial, ops, rng);
        REQUIRE(full.complete());
        CHECK(prefix_hash(full, keep) == prefix_hash(partial, keep));
        CHECK_NOTHROW(validate(full, ops.size()));
    }
    const NetworkGenome done = random_network(sk, ops, rng);
    CHECK(complete_network(done, ops, rng) == done);
}

TEST_CASE("complete_network respects restricted positions") {
    const OpSet ops = OpSet::by_name("conv5");
    Rng rng(4);
    const BlockGenome only = random_block(ops, rng);
    PruneState prune(3);
    prune[1] = std::vector<BlockGenome>{only};
    for (int i = 0; i < 50; ++i) {
        const auto n = complete_network(NetworkGenome{.blocks = {}, .skeleton = SkeletonSpec(3)}, ops, rng, &prune);
        CHECK(n.blocks[1] == only);
    }
    prune[2] = std::vector<BlockGenome>{};
    CHECK_THROWS_AS(complete_network(NetworkGenome{.blocks = {}, .skeleton = SkeletonSpec(3)}, ops, rng, &prune),
                    ValidationError);
}

TEST_CASE("reduction ratio uses exact rationals") {
    const auto three = SpaceStats::from_counts({180, 180, 180});
    auto r = reduction_ratio(three, 10, 1);
    CHECK(r.ratio == Rational(1, 18));
    CHECK_FALSE(r.clamped);

    const auto eight = SpaceStats::from_counts(std::vector<BigInt>(8, 100));
    CHECK(reduction_ratio(eight, 10, 2).ratio == Rational(1, 100));

    // P_num equal to C_j leaves the pruned prefix unreduced.
    CHECK(reduction_ratio(eight, 100, 3).ratio == 1);

    auto clamped = reduction_ratio(SpaceStats::from_counts({5, 180}), 10, 1);
    CHECK(clamped.clamped);
    CHECK(clamped.ratio == 1);

    CHECK_THROWS_AS(reduction_ratio(three, 10, 0), ValidationError);
    CHECK_THROWS_AS(reduction_ratio(three, 0, 1), ValidationError);
    CHECK(three.total == BigInt(180) * 180 * 180);
    CHECK(three.total.str() == "5832000");
}

TEST_CASE("space stats reflect restricted sets") {
    const OpSet ops = OpSet::by_name("conv5", 1);
    Rng rng(8);
    PruneState prune(3);
    prune[0] = std::vector<BlockGenome>{random_block(ops, rng), random_block(ops, rng)};
    const auto s = space_stats(SkeletonSpec(3), ops, &prune);
    CHECK(s.pruned_total == 2 * 180 * 180);
    CHECK(s.reduction_ratio == Rational(2, 180));
}

TEST_CASE("parameter counting") {
    const OpSet ops = OpSet::by_name("conv5");
    const NetShape shape{.input = {3, 8, 8}, .width = 8, .classes = 4};
    const SkeletonSpec sk(3);

    // Every edge identity (code 2): only stem, preprocessors, projections and
    // the classifier carry weights.
    NetworkGenome n{.blocks = {}, .skeleton = sk};
    BlockGenome ident;
    for (int r = 2; r < 6; ++r) ident.at(r, 0) = ident.at(r, 1) = 2;
    n.blocks.assign(3, ident);

    const std::int64_t stem = 8 * 3 * 9 + 8;
    // Block widths 8, 16, 32 (reductions at 1 and 2); inputs per block:
    // b0: stem, stem; b1: stem, b0; b2: b0, b1.
    const std::int64_t pre = (8 * 8 + 8) * 2 + (16 * 8 + 16) * 2 + (32 * 8 + 32) + (32 * 16 + 32);
    const std::int64_t proj = (4 * 8 * 8 + 8) + (4 * 16 * 16 + 16) + (4 * 32 * 32 + 32);
    const std::int64_t head = 4 * 32 + 4;
    CHECK(param_count(n, ops, shape) == stem + pre + proj + head);

    // Swap one edge of block 1 (width 16) to a 3x3 conv.
    NetworkGenome m = n;
    m.blocks[1].at(3, 0) = 3;
    CHECK(param_count(m, ops, shape) - param_count(n, ops, shape) == 9 * 16 * 16 + 16);
    m.blocks[0].at(2, 1) = 4;  // conv1x1 at width 8
    CHECK(param_count(m, ops, shape) - param_count(n, ops, shape) == 9 * 16 * 16 + 16 + 8 * 8 + 8);
    CHECK(param_count(m, ops, shape) == param_count(m, ops, shape));

    // The zero op is parameter-free too.
    NetworkGenome z = n;
    z.blocks[2].at(5, 0) = 1;
    CHECK(param_count(z, ops, shape) == param_count(n, ops, shape));
}

TEST_CASE("vector-mode layout keeps width") {
    const OpSet ops = OpSet::by_name("vec4");
    const NetShape shape{.input = {10}, .width = 6, .classes = 3};
    const SkeletonSpec sk(2);
    CHECK(block_geometry(shape, sk, ops, 1).width == 6);
    Rng rng(1);
    const auto n = random_network(sk, ops, rng);
    std::int64_t expected = 6 * 10 + 6 + (3 * 6 + 3);
    for (const auto& b : n.blocks) {
        expected += 2 * (6 * 6 + 6) + (24 * 6 + 6);
        for (const auto& e : edges(b))
            if (is_parametric(ops.at(e.op).kind)) expected += 6 * 6 + 6;
    }
    CHECK(param_count(n, ops, shape) == expected);
}

TEST_CASE("shape validation") {
    const OpSet conv = OpSet::by_name("conv5");
    CHECK_NOTHROW(validate_shape(NetShape{}, SkeletonSpec(3), conv));
    CHECK_THROWS_AS(validate_shape(NetShape{.input = {3, 6, 6}, .width = 8, .classes = 4}, SkeletonSpec(3), conv),
                    ConfigError);
    CHECK_THROWS_AS(validate_shape(NetShape{.input = {3, 8, 4}, .width = 8, .classes = 4}, SkeletonSpec(3), conv),
                    ConfigError);
    CHECK_THROWS_AS(validate_shape(NetShape{.input = {12}, .width = 8, .classes = 4}, SkeletonSpec(3), conv),
                    ConfigError);
}
