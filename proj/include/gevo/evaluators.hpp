#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "gevo/data.hpp"
#include "gevo/selection.hpp"
#include "gevo/supernet.hpp"

namespace gevo {

// Common contract: estimate the potential of a genome with `stage` blocks by
// averaging over `samples` random completions to the full skeleton. A
// complete genome has a single completion, so samples collapses to 1.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual std::string kind() const = 0;
    virtual PotentialEstimate assess(const NetworkGenome& partial, int samples, Rng& rng) = 0;
};

// Inherited-weight accuracy on the validation set. Holds references: the
// supernet and data must outlive the evaluator.
PotentialEstimate assess_shared_weight(const SuperNet& s, const NetworkGenome& partial, int samples,
                                       const Dataset& val, int n_batches, int batch_size, Rng& rng);

class SharedWeightEvaluator final : public Evaluator {
public:
    SharedWeightEvaluator(const SuperNet& s, const Dataset& val, int n_batches, int batch_size)
        : s_(s), val_(val), n_batches_(n_batches), batch_size_(batch_size) {}
    std::string kind() const override { return "shared"; }
    PotentialEstimate assess(const NetworkGenome& partial, int samples, Rng& rng) override {
        return assess_shared_weight(s_, partial, samples, val_, n_batches_, batch_size_, rng);
    }

private:
    const SuperNet& s_;
    const Dataset& val_;
    int n_batches_;
    int batch_size_;
};

// Deterministic stand-in for accuracy with a planted optimum: a hidden target
// network derived from the seed. Per block j, m_j is the fraction of the 14
// lower-triangular hidden-node cells that equal the target's;
//   acc = 0.2 + 0.6 * mean_j m_j + 0.2 * mean_j m_j * m_{j+1}
// (the pair term is m_0 for a single block). acc = 1 exactly at the target.
class Surrogate {
public:
    Surrogate(const ModelSpec& model, std::uint64_t seed);

    const NetworkGenome& target() const { return target_; }
    double score(const NetworkGenome& full) const;
    static double block_match(const BlockGenome& a, const BlockGenome& b);

private:
    ModelSpec model_;
    NetworkGenome target_;
};

PotentialEstimate assess_surrogate(const Surrogate& surrogate, const ModelSpec& model, const NetworkGenome& partial,
                                   int samples, Rng& rng, const PruneState* prune = nullptr);

class SurrogateEvaluator final : public Evaluator {
public:
    SurrogateEvaluator(const ModelSpec& model, std::uint64_t seed) : model_(model), surrogate_(model, seed) {}
    std::string kind() const override { return "surrogate"; }
    PotentialEstimate assess(const NetworkGenome& partial, int samples, Rng& rng) override {
        return assess_surrogate(surrogate_, model_, partial, samples, rng);
    }
    const Surrogate& surrogate() const { return surrogate_; }

private:
    ModelSpec model_;
    Surrogate surrogate_;
};

struct ScratchOptions {
    int epochs = 10;
    double lr_max = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    int batch_size = 32;
    int eval_batch_size = 256;
    double grad_clip = 5.0;
};

// Standalone training from fresh key-seeded parameters (SGD + cosine over
// the whole run), then accuracy on the full validation set.
PotentialEstimate assess_scratch(const ModelSpec& model, const NetworkGenome& full, const Dataset& train,
                                 const Dataset& val, const ScratchOptions& opts, std::uint64_t seed);

class ScratchEvaluator final : public Evaluator {
public:
    ScratchEvaluator(const ModelSpec& model, const Dataset& train, const Dataset& val, ScratchOptions opts)
        : model_(model), train_(train), val_(val), opts_(opts) {}
    std::string kind() const override { return "scratch"; }
    PotentialEstimate assess(const NetworkGenome& partial, int samples, Rng& rng) override;

private:
    ModelSpec model_;
    const Dataset& train_;
    const Dataset& val_;
    ScratchOptions opts_;
};

}  // namespace gevo
