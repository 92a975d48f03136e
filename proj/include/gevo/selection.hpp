#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gevo/genome.hpp"

namespace gevo {

// Expected accuracy and model size of a (possibly partial) genome over its
// sampled completions.
struct PotentialEstimate {
    double exp_acc = 0.0;
    double exp_size = 1.0;
    int n_samples = 1;

    friend bool operator==(const PotentialEstimate&, const PotentialEstimate&) = default;
};

void validate(const PotentialEstimate& p);

struct Individual {
    NetworkGenome genome;
    std::optional<PotentialEstimate> potential;
    int front = -1;
    std::uint64_t id = 0;

    static Individual of(NetworkGenome genome);
    const PotentialEstimate& fitness() const;  // throws when unevaluated
};

using Population = std::vector<Individual>;

std::string id_hex(std::uint64_t id);

// Maximize exp_acc, minimize exp_size.
bool dominates(const PotentialEstimate& a, const PotentialEstimate& b);
bool dominates(const Individual& a, const Individual& b);

// Fast nondominated sorting; fronts hold indices into `pop`, each front in
// ascending index order.
std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Individual> pop);

// Crowding distance of each member of `front` (parallel to it). Boundary
// points of either objective get +infinity.
std::vector<double> crowding_distance(std::span<const Individual> pop, std::span<const std::size_t> front);

struct SelectionOptions {
    // Within the front that does not fit whole, reserve half of the remaining
    // slots (rounded up) for its most accurate members before crowding fill.
    bool protection = true;
};

// Keeps whole fronts while they fit, then fills from the next front. Output
// has exactly min(p_num, pop.size()) members with `front` set to their rank
// within the output.
Population environmental_select(Population pop, std::size_t p_num, const SelectionOptions& options = {});

// Reassigns `front` of every member by sorting the population itself.
void assign_fronts(Population& pop);

}  // namespace gevo
