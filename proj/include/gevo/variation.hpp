#pragma once

#include <utility>

#include "gevo/genome.hpp"
#include "gevo/rng.hpp"
#include "gevo/selection.hpp"

namespace gevo {

// Which blocks the operators may touch. Growth search only edits the newest
// block; the flat baseline edits any block.
enum class VariationScope { LatestBlock, AllBlocks };

struct VariationParams {
    double crossover_rate = 0.9;  // probability an offspring comes from crossover
    double mutation_rate = 0.2;   // probability of each mutation kind
    double swap_rate = 0.5;       // per hidden-node row swap probability inside crossover
    int retries = 3;              // regeneration attempts for duplicate offspring
    VariationScope scope = VariationScope::LatestBlock;
};

// Swaps whole hidden-node rows (both edges and their ops) of block stage-1
// between the parents, each with probability `rate`.
std::pair<NetworkGenome, NetworkGenome> crossover(const NetworkGenome& p1, const NetworkGenome& p2, int stage,
                                                  double rate, Rng& rng);

// Re-sources one edge of a hidden node in block stage-1 to another valid
// predecessor, keeping its op code.
NetworkGenome mutate_connection(const NetworkGenome& n, int stage, Rng& rng);

// Replaces the op of one edge in block stage-1 with a different code.
NetworkGenome mutate_operation(const NetworkGenome& n, int stage, int op_count, Rng& rng);

// Block-level forms used by both scopes.
void crossover_block(BlockGenome& a, BlockGenome& b, double rate, Rng& rng);
bool mutate_connection_block(BlockGenome& g, Rng& rng);
bool mutate_operation_block(BlockGenome& g, int op_count, Rng& rng);

// Produces pop.size() offspring of length `stage`. Duplicates of any genome
// in pop or among earlier offspring are regenerated up to params.retries
// times, then admitted.
Population generate_offspring(const Population& pop, int stage, const VariationParams& params, int op_count,
                              Rng& rng);

}  // namespace gevo
