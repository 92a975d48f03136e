#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "gevo/data.hpp"
#include "gevo/genome.hpp"
#include "gevo/numkernel.hpp"
#include "gevo/selection.hpp"
#include "gevo/space.hpp"

namespace gevo {

// Everything needed to realize a genome as a network.
struct ModelSpec {
    SkeletonSpec skeleton;
    OpSet opset;
    NetShape shape;
};

struct TrainSchedule {
    double lr_max = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    int batch_size = 32;
    double grad_clip = 5.0;        // global gradient-norm cap; 0 disables
    std::int64_t total_steps = 1;  // cosine horizon
    std::int64_t step = 0;         // advanced by every SGD step
};

struct TrainReport {
    std::vector<double> epoch_loss;
    std::int64_t steps = 0;
};

class PathTape;

// Forward pass of one complete path. Parameters are looked up in `store`;
// when `tape` is given, activations are retained for backward_path.
Tensor forward_path(const ModelSpec& model, const ParamStore& store, const NetworkGenome& path, const Tensor& x,
                    PathTape* tape);
// Gradients of every parameter used by the taped path.
GradMap backward_path(const ModelSpec& model, const ParamStore& store, const PathTape& tape, const Tensor& grad_logits);

class PathTape {
public:
    PathTape();
    ~PathTape();
    PathTape(PathTape&&) noexcept;
    PathTape& operator=(PathTape&&) noexcept;

    struct State;
    State& state() { return *state_; }
    const State& state() const { return *state_; }

private:
    std::unique_ptr<State> state_;
};

// One SGD step on a single path. Returns the batch loss.
double train_step(const ModelSpec& model, ParamStore& store, const NetworkGenome& path, const Tensor& x,
                  std::span<const int> labels, TrainSchedule& schedule);

// Forward-only accuracy over the first n_batches fixed-order mini-batches
// (n_batches <= 0 means all).
double evaluate_store(const ModelSpec& model, const ParamStore& store, const NetworkGenome& path, const Dataset& data,
                      int n_batches, int batch_size);

// Fresh parameters for exactly the keys of one path.
ParamStore init_path_store(const ModelSpec& model, const NetworkGenome& path, std::uint64_t seed);

class SuperNet {
public:
    ModelSpec model;
    ParamStore store;
    PruneState prune;
    std::uint64_t seed = 0;

    const SkeletonSpec& skeleton() const { return model.skeleton; }
    std::uint64_t digest() const;
};

SuperNet init_supernet(const SkeletonSpec& skeleton, const OpSet& opset, const NetShape& shape, std::uint64_t seed);

// Warm-up mode (pop == nullptr): a uniform random network respecting the
// prune state. Interval mode: a population member's first `stage` blocks
// completed at random.
NetworkGenome sample_path(const SuperNet& s, const Population* pop, int stage, Rng& rng);

// Throws ValidationError if the path is incomplete or leaves the pruned space.
void check_path_allowed(const SuperNet& s, const NetworkGenome& path);

TrainReport train_supernet(SuperNet& s, const Dataset& data, int epochs, const Population* pop, int stage,
                           TrainSchedule& schedule, Rng& rng);

double evaluate_path(const SuperNet& s, const NetworkGenome& path, const Dataset& val, int n_batches, int batch_size);

struct PruneReport {
    int pruned_blocks = 0;
    std::vector<std::size_t> restricted_sizes;
    std::size_t dropped_params = 0;
    SpaceStats stats;          // after pruning
    ReductionRatio nominal;    // P_num^i * prod C_j / prod C_j
};

// Restricts blocks 0..b-1 (b = genome length of pop) to the block genomes
// present in pop and drops every edge parameter no allowed path can reach.
PruneReport prune(SuperNet& s, const Population& pop, std::int64_t p_num);

// Versioned binary checkpoint: "GEVO", version, skeleton, op set, shape,
// seed, prune state, then key-sorted parameter records (key, shape,
// little-endian float32 values followed by momentum buffer).
void write_supernet(std::ostream& out, const SuperNet& s);
SuperNet read_supernet(std::istream& in);
void save_supernet(const std::string& path, const SuperNet& s);
SuperNet load_supernet(const std::string& path);

inline constexpr std::uint32_t kSupernetFormatVersion = 1;

}  // namespace gevo
