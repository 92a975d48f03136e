#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gevo/config.hpp"
#include "gevo/engine.hpp"

namespace gevo {

// Tie-corrected Kendall tau-b, O(n log n). Throws ValidationError for
// mismatched lengths, n < 2, non-finite values or an all-tied list.
double kendall_tau(std::span<const double> a, std::span<const double> b);

struct StudyModel {
    std::uint64_t id = 0;
    bool from_population = false;  // otherwise a random fill
    double pruned_acc = 0.0;       // shared weights of the pruned search supernet
    double oneshot_acc = 0.0;      // shared weights of the uniformly trained supernet
    double scratch_acc = 0.0;
};

struct StudySeed {
    std::uint64_t seed = 0;
    std::vector<StudyModel> models;  // ordered by genome id
    double tau_pruned = 0.0;
    double tau_oneshot = 0.0;
    std::int64_t pruned_steps = 0;   // SGD steps taken by each supernet
    std::int64_t oneshot_steps = 0;
};

struct StudyReport {
    std::vector<StudySeed> seeds;

    int pruned_wins() const;  // seeds with tau_pruned >= tau_oneshot
    double mean_tau_pruned() const;
    double mean_tau_oneshot() const;
    // seed,variant,genome_id,shared_acc,scratch_acc,tau[,oneshot_acc]: one
    // "pruned" and one "oneshot" tau row per seed, one "model" row per study
    // genome (shared_acc from the pruned supernet, oneshot_acc appended).
    std::string to_csv() const;
};

using StudyLog = std::function<void(const std::string&)>;

// One seed of the ranking study: search, one-shot baseline with the same
// step budget, N study genomes, scratch ground truth, both taus.
StudySeed rank_study_seed(const RunConfig& config, std::uint64_t seed, const Dataset& train, const Dataset& val,
                          const StudyLog& log = {});

// Seeds search.seed .. search.seed + study.seeds - 1.
StudyReport rank_study(const RunConfig& config, const Dataset& train, const Dataset& val, const StudyLog& log = {});

struct BruteForceResult {
    std::uint64_t networks = 0;
    NetworkGenome best;
    double best_score = 0.0;
    bool best_is_target = false;
    // Score at rank ceil(1% of the landscape): genomes scoring at least this
    // are in the top 1%.
    double top1_threshold = 0.0;
    std::vector<double> scores;  // sorted descending
};

// Exhaustive surrogate landscape; refuses spaces above `limit` networks.
BruteForceResult brute_force_surrogate(const ModelSpec& model, std::uint64_t surrogate_seed,
                                       std::uint64_t limit = 5'000'000);

// All valid blocks over `op_count` ops, in lexicographic matrix order.
std::vector<BlockGenome> enumerate_blocks(int op_count);

}  // namespace gevo
