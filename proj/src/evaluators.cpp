#include "gevo/evaluators.hpp"

#include "gevo/error.hpp"

namespace gevo {

namespace {

int effective_samples(const NetworkGenome& partial, int samples) {
    if (partial.size() < 1 || partial.size() > partial.skeleton.blocks())
        throw ValidationError("assess: genome length " + std::to_string(partial.size()) + " out of range");
    if (samples < 1) throw ValidationError("assess: need at least one sample");
    return partial.complete() ? 1 : samples;
}

}  // namespace

PotentialEstimate assess_shared_weight(const SuperNet& s, const NetworkGenome& partial, int samples,
                                       const Dataset& val, int n_batches, int batch_size, Rng& rng) {
    const int m = effective_samples(partial, samples);
    double acc = 0.0, size = 0.0;
    for (int k = 0; k < m; ++k) {
        const NetworkGenome path = complete_network(partial, s.model.opset, rng, &s.prune);
        acc += evaluate_path(s, path, val, n_batches, batch_size);
        size += static_cast<double>(param_count(path, s.model.opset, s.model.shape));
    }
    return {acc / m, size / m, m};
}

Surrogate::Surrogate(const ModelSpec& model, std::uint64_t seed) : model_(model) {
    Rng rng = derive_rng(seed, 0x7375727267617465ULL);  // "surrgate"
    target_ = random_network(model.skeleton, model.opset, rng);
}

double Surrogate::block_match(const BlockGenome& a, const BlockGenome& b) {
    int same = 0, cells = 0;
    for (int r = kFirstHiddenNode; r < kOutputNode; ++r) {
        for (int c = 0; c < r; ++c) {
            same += a.at(r, c) == b.at(r, c);
            ++cells;
        }
    }
    return static_cast<double>(same) / cells;
}

double Surrogate::score(const NetworkGenome& full) const {
    if (!full.complete()) throw ValidationError("surrogate score needs a complete genome");
    const int B = full.size();
    std::vector<double> m(static_cast<std::size_t>(B));
    double sim = 0.0;
    for (int j = 0; j < B; ++j) {
        m[j] = block_match(full.blocks[j], target_.blocks[j]);
        sim += m[j];
    }
    sim /= B;
    double pair = m[0];
    if (B > 1) {
        pair = 0.0;
        for (int j = 0; j + 1 < B; ++j) pair += m[j] * m[j + 1];
        pair /= B - 1;
    }
    return 0.2 + 0.6 * sim + 0.2 * pair;
}

PotentialEstimate assess_surrogate(const Surrogate& surrogate, const ModelSpec& model, const NetworkGenome& partial,
                                   int samples, Rng& rng, const PruneState* prune) {
    const int m = effective_samples(partial, samples);
    double acc = 0.0, size = 0.0;
    for (int k = 0; k < m; ++k) {
        const NetworkGenome full = complete_network(partial, model.opset, rng, prune);
        acc += surrogate.score(full);
        size += static_cast<double>(param_count(full, model.opset, model.shape));
    }
    return {acc / m, size / m, m};
}

PotentialEstimate assess_scratch(const ModelSpec& model, const NetworkGenome& full, const Dataset& train,
                                 const Dataset& val, const ScratchOptions& opts, std::uint64_t seed) {
    if (!full.complete()) throw ValidationError("scratch training needs a complete genome");
    if (opts.epochs < 1) throw ValidationError("scratch training needs at least one epoch");
    validate(train);
    ParamStore store = init_path_store(model, full, seed);
    Rng rng = derive_rng(seed, 0x736372617463ULL);  // "scratc"
    const std::int64_t per_epoch = (train.size() + opts.batch_size - 1) / opts.batch_size;
    TrainSchedule sched{.lr_max = opts.lr_max,
                        .momentum = opts.momentum,
                        .weight_decay = opts.weight_decay,
                        .batch_size = opts.batch_size,
                        .grad_clip = opts.grad_clip,
                        .total_steps = per_epoch * opts.epochs};
    for (int e = 0; e < opts.epochs; ++e) {
        for (const auto& batch : make_batches(train.size(), opts.batch_size, &rng))
            train_step(model, store, full, train.gather(batch), train.gather_labels(batch), sched);
    }
    const double acc = evaluate_store(model, store, full, val, 0, opts.eval_batch_size);
    return {acc, static_cast<double>(param_count(full, model.opset, model.shape)), 1};
}

PotentialEstimate ScratchEvaluator::assess(const NetworkGenome& partial, int samples, Rng& rng) {
    const int m = effective_samples(partial, samples);
    double acc = 0.0, size = 0.0;
    for (int k = 0; k < m; ++k) {
        const NetworkGenome full = complete_network(partial, model_.opset, rng);
        const PotentialEstimate p = assess_scratch(model_, full, train_, val_, opts_, rng());
        acc += p.exp_acc;
        size += p.exp_size;
    }
    return {acc / m, size / m, m};
}

}  // namespace gevo
