#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gevo/data.hpp"
#include "gevo/error.hpp"
#include "gevo/evaluators.hpp"

using namespace gevo;

namespace {

// Independent enumeration of every valid block over a single op: each
// hidden row picks an unordered pair of earlier nodes.
std::vector<BlockGenome> all_blocks_k1() {
    std::vector<BlockGenome> out{BlockGenome{}};
    for (int r = 2; r <= 5; ++r) {
        std::vector<BlockGenome> next;
        for (const auto& partial : out) {
            for (int a = 0; a < r; ++a) {
                for (int b = a + 1; b < r; ++b) {
                    BlockGenome g = partial;
                    g.at(r, a) = 1;
                    g.at(r, b) = 1;
                    next.push_back(g);
                }
            }
        }
        out = std::move(next);
    }
    return out;
}

// Same surrogate formula, written out longhand.
double oracle_score(const NetworkGenome& g, const NetworkGenome& t) {
    std::vector<double> m;
    for (int j = 0; j < g.size(); ++j) {
        int same = 0;
        for (int r = 2; r <= 5; ++r)
            for (int c = 0; c < r; ++c) same += g.blocks[j].matrix[r][c] == t.blocks[j].matrix[r][c];
        m.push_back(same / 14.0);
    }
    double sim = 0;
    for (double v : m) sim += v;
    sim /= static_cast<double>(m.size());
    double pair = m[0];
    if (m.size() > 1) {
        pair = 0;
        for (std::size_t j = 0; j + 1 < m.size(); ++j) pair += m[j] * m[j + 1];
        pair /= static_cast<double>(m.size() - 1);
    }
    return 0.2 + 0.6 * sim + 0.2 * pair;
}

BlockGenome with_op(BlockGenome g, OpCode op) {
    for (auto& row : g.matrix)
        for (auto& v : row)
            if (v) v = op;
    return g;
}

ModelSpec small_model(int blocks, int ops = 0) {
    return {SkeletonSpec(blocks), OpSet::by_name("conv5", ops), NetShape{}};
}

double variance(const std::vector<double>& xs) {
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double v = 0;
    for (double x : xs) v += (x - mean) * (x - mean);
    return v / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST_CASE("surrogate: the planted target is the unique maximum of the K=1, B=2 landscape") {
    const auto blocks = all_blocks_k1();
    REQUIRE(blocks.size() == 180);
    const ModelSpec model = small_model(2, 1);
    const Surrogate s(model, 17);
    const NetworkGenome& target = s.target();
    CHECK(s.score(target) == 1.0);

    int at_max = 0;
    double best_other = 0;
    NetworkGenome g{.blocks = {BlockGenome{}, BlockGenome{}}, .skeleton = model.skeleton};
    for (const auto& a : blocks) {
        for (const auto& b : blocks) {
            g.blocks[0] = a;
            g.blocks[1] = b;
            const double v = s.score(g);
            CHECK_MESSAGE(std::abs(v - oracle_score(g, target)) < 1e-15, "score mismatch");
            if (v == 1.0) {
                ++at_max;
                CHECK(g == target);
            } else {
                best_other = std::max(best_other, v);
            }
        }
    }
    CHECK(at_max == 1);
    CHECK(best_other < 1.0);
}

TEST_CASE("surrogate: target depends on seed and is reproducible") {
    const ModelSpec model = small_model(3);
    CHECK(Surrogate(model, 5).target() == Surrogate(model, 5).target());
    CHECK_FALSE(Surrogate(model, 5).target() == Surrogate(model, 6).target());
    validate(Surrogate(model, 5).target(), model.opset.size());
}

TEST_CASE("surrogate: single-entry flips toward the target never lower the score") {
    const ModelSpec model = small_model(3);
    const Surrogate s(model, 3);
    Rng rng(99);
    int strictly_up = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        NetworkGenome g = random_network(model.skeleton, model.opset, rng);
        // Collect mismatched lower-triangular hidden cells.
        std::vector<std::pair<int, std::pair<int, int>>> cells;
        for (int j = 0; j < g.size(); ++j)
            for (int r = 2; r <= 5; ++r)
                for (int c = 0; c < r; ++c)
                    if (g.blocks[j].at(r, c) != s.target().blocks[j].at(r, c)) cells.push_back({j, {r, c}});
        if (cells.empty()) continue;
        const auto& [j, rc] = cells[uniform_index(rng, cells.size())];
        const double before = s.score(g);
        g.blocks[j].at(rc.first, rc.second) = s.target().blocks[j].at(rc.first, rc.second);
        const double after = s.score(g);
        CHECK(after >= before);
        strictly_up += after > before;
    }
    CHECK(strictly_up > 900);
}

TEST_CASE("surrogate: B=1 uses the single block as its pair term") {
    const ModelSpec model = small_model(1);
    const Surrogate s(model, 8);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const NetworkGenome g = random_network(model.skeleton, model.opset, rng);
        const double m = Surrogate::block_match(g.blocks[0], s.target().blocks[0]);
        CHECK(s.score(g) == doctest::Approx(0.2 + 0.6 * m + 0.2 * m).epsilon(1e-15));
    }
}

TEST_CASE("surrogate assessment: sample counts, sizes and variance decay") {
    const ModelSpec model = small_model(3);
    const Surrogate s(model, 11);
    Rng rng(21);
    const NetworkGenome full = random_network(model.skeleton, model.opset, rng);

    SUBCASE("complete genome collapses to one sample") {
        const auto p = assess_surrogate(s, model, full, 8, rng);
        CHECK(p.n_samples == 1);
        CHECK(p.exp_acc == s.score(full));
        CHECK(p.exp_size == static_cast<double>(param_count(full, model.opset, model.shape)));
    }
    SUBCASE("partial genome averages M completions") {
        NetworkGenome partial = full;
        partial.blocks.resize(1);
        Rng a(5), b(5);
        const auto p = assess_surrogate(s, model, partial, 4, a);
        CHECK(p.n_samples == 4);
        double acc = 0, size = 0;
        for (int k = 0; k < 4; ++k) {
            const NetworkGenome c = complete_network(partial, model.opset, b);
            acc += s.score(c);
            size += static_cast<double>(param_count(c, model.opset, model.shape));
        }
        CHECK(p.exp_acc == doctest::Approx(acc / 4).epsilon(1e-14));
        CHECK(p.exp_size == doctest::Approx(size / 4).epsilon(1e-14));
    }
    SUBCASE("variance shrinks roughly as 1/M") {
        NetworkGenome partial = full;
        partial.blocks.resize(1);
        std::vector<double> var;
        for (int m : {1, 8, 64}) {
            std::vector<double> xs;
            for (int rep = 0; rep < 300; ++rep) xs.push_back(assess_surrogate(s, model, partial, m, rng).exp_acc);
            var.push_back(variance(xs));
        }
        CHECK(var[1] < var[0]);
        CHECK(var[2] < var[1]);
        CHECK(var[0] / var[1] > 4.0);
        CHECK(var[1] / var[2] > 4.0);
    }
    SUBCASE("bad inputs") {
        CHECK_THROWS_AS(assess_surrogate(s, model, full, 0, rng), ValidationError);
        NetworkGenome empty{.blocks = {}, .skeleton = model.skeleton};
        CHECK_THROWS_AS(assess_surrogate(s, model, empty, 1, rng), ValidationError);
        NetworkGenome partial = full;
        partial.blocks.resize(2);
        CHECK_THROWS_AS(s.score(partial), ValidationError);
    }
}

TEST_CASE("scratch training: determinism and capacity sanity") {
    const ModelSpec model = small_model(3);
    const Dataset all = gen_synthetic(4, 800, {3, 8, 8}, 0.3, 12);
    const auto [train, val] = split(all, 0.8, 3);
    Rng rng(7);
    const NetworkGenome base = random_network(model.skeleton, model.opset, rng);
    const ScratchOptions opts{.epochs = 5};

    NetworkGenome zero = base, conv = base;
    for (auto& b : zero.blocks) b = with_op(b, 1);  // zero op everywhere
    for (auto& b : conv.blocks) b = with_op(b, 3);  // conv3x3 everywhere

    const auto z = assess_scratch(model, zero, train, val, opts, 1);
    CHECK(std::abs(z.exp_acc - 0.25) <= 0.05);

    const auto c1 = assess_scratch(model, conv, train, val, opts, 1);
    const auto c2 = assess_scratch(model, conv, train, val, opts, 1);
    CHECK(c1 == c2);
    CHECK(c1.exp_acc >= 0.9);
    CHECK(c1.n_samples == 1);
    CHECK(c1.exp_size == static_cast<double>(param_count(conv, model.opset, model.shape)));

    const auto other = assess_scratch(model, base, train, val, opts, 2);
    CHECK(other.exp_acc >= 0.0);
    CHECK(other.exp_acc <= 1.0);

    NetworkGenome partial = base;
    partial.blocks.resize(1);
    CHECK_THROWS_AS(assess_scratch(model, partial, train, val, opts, 1), ValidationError);
}

TEST_CASE("evaluators share one contract") {
    const ModelSpec model = small_model(2);
    const Dataset all = gen_synthetic(4, 200, {3, 8, 8}, 0.3, 12);
    const auto [train, val] = split(all, 0.8, 3);
    const SuperNet net = init_supernet(model.skeleton, model.opset, model.shape, 4);

    SharedWeightEvaluator shared(net, val, 1, 32);
    SurrogateEvaluator surrogate(model, 9);
    ScratchEvaluator scratch(model, train, val, ScratchOptions{.epochs = 1});
    std::vector<Evaluator*> all_evals{&shared, &surrogate, &scratch};
    CHECK(shared.kind() == "shared");
    CHECK(surrogate.kind() == "surrogate");
    CHECK(scratch.kind() == "scratch");

    Rng g(31);
    const NetworkGenome full = random_network(model.skeleton, model.opset, g);
    NetworkGenome partial = full;
    partial.blocks.resize(1);
    const double full_size = static_cast<double>(param_count(full, model.opset, model.shape));

    for (Evaluator* e : all_evals) {
        CAPTURE(e->kind());
        Rng rng(1);
        const auto pf = e->assess(full, 3, rng);
        CHECK(pf.n_samples == 1);
        CHECK(pf.exp_size == full_size);
        CHECK(pf.exp_acc >= 0.0);
        CHECK(pf.exp_acc <= 1.0);
        validate(pf);

        const auto pp = e->assess(partial, 2, rng);
        CHECK(pp.n_samples == 2);
        CHECK(pp.exp_size > 0.0);
        validate(pp);
    }

    // Shared-weight and surrogate draw completions identically, so their
    // sizes agree exactly for the same generator state.
    Rng a(77), b(77);
    CHECK(shared.assess(partial, 4, a).exp_size == surrogate.assess(partial, 4, b).exp_size);
}
