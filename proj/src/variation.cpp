#include "gevo/variation.hpp"

#include <unordered_set>

#include "gevo/error.hpp"

namespace gevo {

namespace {

void require_stage(const NetworkGenome& n, int stage, const char* op) {
    if (stage < 1 || n.size() != stage) {
        throw ValidationError(std::string(op) + ": genome has " + std::to_string(n.size()) +
                              " blocks but stage is " + std::to_string(stage));
    }
}

std::pair<int, int> row_sources(const BlockGenome& g, int node) {
    int first = -1, second = -1;
    for (int src = 0; src < node; ++src) {
        if (g.at(node, src) == 0) continue;
        (first < 0 ? first : second) = src;
    }
    return {first, second};
}

}  // namespace

void crossover_block(BlockGenome& a, BlockGenome& b, double rate, Rng& rng) {
    for (int node = kFirstHiddenNode; node < kOutputNode; ++node) {
        if (bernoulli(rng, rate)) std::swap(a.matrix[node], b.matrix[node]);
    }
}

std::pair<NetworkGenome, NetworkGenome> crossover(const NetworkGenome& p1, const NetworkGenome& p2, int stage,
                                                  double rate, Rng& rng) {
    if (p1.size() != p2.size()) throw ValidationError("crossover: parents differ in length");
    require_stage(p1, stage, "crossover");
    std::pair<NetworkGenome, NetworkGenome> children{p1, p2};
    crossover_block(children.first.blocks[stage - 1], children.second.blocks[stage - 1], rate, rng);
    return children;
}

bool mutate_connection_block(BlockGenome& g, Rng& rng) {
    // Node 2 only has the two block inputs as predecessors, so it can never
    // be re-sourced.
    std::vector<int> movable;
    for (int node = kFirstHiddenNode; node < kOutputNode; ++node)
        if (node > 2) movable.push_back(node);
    if (movable.empty()) return false;
    const int node = movable[uniform_index(rng, movable.size())];
    const auto [s0, s1] = row_sources(g, node);
    const int old_src = bernoulli(rng, 0.5) ? s0 : s1;
    std::vector<int> options;
    for (int src = 0; src < node; ++src)
        if (src != s0 && src != s1) options.push_back(src);
    const int new_src = options[uniform_index(rng, options.size())];
    g.at(node, new_src) = g.at(node, old_src);
    g.at(node, old_src) = 0;
    return true;
}

bool mutate_operation_block(BlockGenome& g, int op_count, Rng& rng) {
    if (op_count <= 1) return false;
    const auto es = edges(g);
    const Edge& e = es[uniform_index(rng, es.size())];
    // Uniform over the K-1 codes other than the current one.
    auto code = static_cast<int>(1 + uniform_index(rng, static_cast<std::uint64_t>(op_count - 1)));
    if (code >= e.op) ++code;
    g.at(e.dest, e.src) = static_cast<OpCode>(code);
    return true;
}

NetworkGenome mutate_connection(const NetworkGenome& n, int stage, Rng& rng) {
    require_stage(n, stage, "mutate_connection");
    NetworkGenome out = n;
    mutate_connection_block(out.blocks[stage - 1], rng);
    return out;
}

NetworkGenome mutate_operation(const NetworkGenome& n, int stage, int op_count, Rng& rng) {
    require_stage(n, stage, "mutate_operation");
    NetworkGenome out = n;
    mutate_operation_block(out.blocks[stage - 1], op_count, rng);
    return out;
}

Population generate_offspring(const Population& pop, int stage, const VariationParams& params, int op_count,
                              Rng& rng) {
    if (pop.empty()) throw ValidationError("generate_offspring: empty population");
    for (const auto& ind : pop) require_stage(ind.genome, stage, "generate_offspring");

    std::unordered_set<std::uint64_t> seen;
    for (const auto& ind : pop) seen.insert(ind.id);

    auto pick_block = [&](const NetworkGenome& g) {
        return params.scope == VariationScope::LatestBlock ? stage - 1
                                                           : static_cast<int>(uniform_index(rng, g.blocks.size()));
    };

    Population offspring;
    offspring.reserve(pop.size());
    while (offspring.size() < pop.size()) {
        NetworkGenome child;
        for (int attempt = 0;; ++attempt) {
            const std::size_t i = uniform_index(rng, pop.size());
            std::size_t j = i;
            if (pop.size() > 1) {
                j = uniform_index(rng, pop.size() - 1);
                if (j >= i) ++j;
            }
            child = pop[i].genome;
            if (bernoulli(rng, params.crossover_rate)) {
                NetworkGenome other = pop[j].genome;
                if (params.scope == VariationScope::LatestBlock) {
                    crossover_block(child.blocks[stage - 1], other.blocks[stage - 1], params.swap_rate, rng);
                } else {
                    for (int b = 0; b < stage; ++b) crossover_block(child.blocks[b], other.blocks[b], params.swap_rate, rng);
                }
            }
            if (bernoulli(rng, params.mutation_rate)) mutate_connection_block(child.blocks[pick_block(child)], rng);
            if (bernoulli(rng, params.mutation_rate)) mutate_operation_block(child.blocks[pick_block(child)], op_count, rng);
            if (!seen.contains(canonical_hash(child)) || attempt >= params.retries) break;
        }
        auto ind = Individual::of(std::move(child));
        seen.insert(ind.id);
        offspring.push_back(std::move(ind));
    }
    return offspring;
}

}  // namespace gevo
