#include "gevo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "gevo/error.hpp"

namespace gevo {

namespace {

std::int64_t pairs(std::int64_t n) { return n * (n - 1) / 2; }

// Sum of t(t-1)/2 over runs of equal neighbours in an already grouped order.
template <typename Same>
std::int64_t tied_pairs(std::size_t n, Same same) {
    std::int64_t total = 0, run = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (same(i - 1, i)) {
            ++run;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    return total + pairs(run);
}

// Merge sort counting strict inversions.
std::int64_t count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = count_swaps(v, buf, lo, mid) + count_swaps(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("kendall_tau: lists differ in length");
    if (a.size() < 2) throw ValidationError("kendall_tau: need at least two items");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ValidationError("kendall_tau: non-finite value");

    // Knight's algorithm: order by (a, b), then count inversions of b.
    const std::size_t n = a.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a[i] != a[j] ? a[i] < a[j] : b[i] < b[j];
    });
    const std::int64_t n0 = pairs(static_cast<std::int64_t>(n));
    const std::int64_t ties_a = tied_pairs(n, [&](std::size_t i, std::size_t j) { return a[order[i]] == a[order[j]]; });
    const std::int64_t ties_ab = tied_pairs(n, [&](std::size_t i, std::size_t j) {
        return a[order[i]] == a[order[j]] && b[order[i]] == b[order[j]];
    });
    std::vector<double> v(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = b[order[i]];
    const std::int64_t swaps = count_swaps(v, buf, 0, n);
    const std::int64_t ties_b = tied_pairs(n, [&](std::size_t i, std::size_t j) { return v[i] == v[j]; });

    if (ties_a == n0 || ties_b == n0) throw ValidationError("kendall_tau: undefined for an all-tied list");
    const double numer = static_cast<double>(n0 - ties_a - ties_b + ties_ab - 2 * swaps);
    const double denom = std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
    return std::clamp(numer / denom, -1.0, 1.0);
}

int StudyReport::pruned_wins() const {
    return static_cast<int>(
        std::count_if(seeds.begin(), seeds.end(), [](const StudySeed& s) { return s.tau_pruned >= s.tau_oneshot; }));
}

double StudyReport::mean_tau_pruned() const {
    double sum = 0;
    for (const auto& s : seeds) sum += s.tau_pruned;
    return seeds.empty() ? 0.0 : sum / static_cast<double>(seeds.size());
}

double StudyReport::mean_tau_oneshot() const {
    double sum = 0;
    for (const auto& s : seeds) sum += s.tau_oneshot;
    return seeds.empty() ? 0.0 : sum / static_cast<double>(seeds.size());
}

std::string StudyReport::to_csv() const {
    std::string out = "seed,variant,genome_id,shared_acc,scratch_acc,tau,oneshot_acc\n";
    for (const auto& s : seeds) {
        const std::string seed = std::to_string(s.seed);
        out += seed + ",pruned,,,," + fmt(s.tau_pruned) + ",\n";
        out += seed + ",oneshot,,,," + fmt(s.tau_oneshot) + ",\n";
        for (const auto& m : s.models) {
            out += seed + ",model," + id_hex(m.id) + "," + fmt(m.pruned_acc) + "," + fmt(m.scratch_acc) + ",," +
                   fmt(m.oneshot_acc) + "\n";
        }
    }
    return out;
}

StudySeed rank_study_seed(const RunConfig& config, std::uint64_t seed, const Dataset& train, const Dataset& val,
                          const StudyLog& log) {
    EngineConfig engine_config = config.engine;
    engine_config.seed = seed;
    if (engine_config.evaluator != EvaluatorKind::Shared)
        throw ConfigError("rank-study needs evaluator.kind = shared");
    if (config.study.models < 2) throw ConfigError("study.models must be >= 2");
    if (config.study.scratch_epochs < 1) throw ConfigError("study.scratch_epochs must be >= 1");
    auto say = [&](const std::string& msg) {
        if (log) log("[seed " + std::to_string(seed) + "] " + msg);
    };

    // (1) The search itself leaves a pruned supernet and the final population.
    SearchEngine engine(engine_config, train, val);
    engine.run();
    const SuperNet& pruned = *engine.state().supernet;
    StudySeed out;
    out.seed = seed;
    out.pruned_steps = engine.state().schedule.step;
    say("search done, " + std::to_string(out.pruned_steps) + " supernet steps");

    // (2) Same initialization, same number of epochs and steps, uniform
    // sampling over the whole space, never pruned.
    const ModelSpec& model = engine.model();
    SuperNet oneshot = init_supernet(model.skeleton, model.opset, model.shape, supernet_seed(engine_config));
    TrainSchedule schedule{.lr_max = engine_config.lr,
                           .momentum = engine_config.momentum,
                           .weight_decay = engine_config.weight_decay,
                           .batch_size = engine_config.batch_size,
                           .grad_clip = engine_config.grad_clip,
                           .total_steps = engine.state().schedule.total_steps};
    const int epochs = engine_config.warmup_epochs +
                       engine_config.blocks * engine_config.generations * engine_config.interval_epochs;
    Rng oneshot_rng = derive_rng(seed, 0x6f6e6573686f74ULL);  // "oneshot"
    if (epochs > 0) train_supernet(oneshot, train, epochs, nullptr, 0, schedule, oneshot_rng);
    out.oneshot_steps = schedule.step;
    say("one-shot baseline done, " + std::to_string(out.oneshot_steps) + " supernet steps");
    if (out.oneshot_steps != out.pruned_steps) {
        throw ValidationError("rank-study budget mismatch: " + std::to_string(out.pruned_steps) + " vs " +
                              std::to_string(out.oneshot_steps) + " steps");
    }

    // (3) Final population first, then random paths of the pruned space.
    const auto n_models = static_cast<std::size_t>(config.study.models);
    std::vector<std::pair<NetworkGenome, bool>> study;
    std::set<std::uint64_t> seen;
    Population pop = engine.state().population;
    std::sort(pop.begin(), pop.end(), [](const Individual& x, const Individual& y) { return x.id < y.id; });
    for (const auto& ind : pop) {
        if (study.size() == n_models) break;
        if (seen.insert(ind.id).second) study.emplace_back(ind.genome, true);
    }
    Rng fill_rng = derive_rng(seed, 0x66696c6cULL);  // "fill"
    const NetworkGenome empty{.blocks = {}, .skeleton = model.skeleton};
    for (long attempt = 0; study.size() < n_models; ++attempt) {
        if (attempt > 1000L * static_cast<long>(n_models))
            throw ValidationError("rank-study: pruned space too small for study.models distinct genomes");
        NetworkGenome g = complete_network(empty, model.opset, fill_rng, &pruned.prune);
        if (seen.insert(canonical_hash(g)).second) study.emplace_back(std::move(g), false);
    }

    // (4) Shared-weight accuracies on the full validation set, then scratch.
    const ScratchOptions scratch{.epochs = config.study.scratch_epochs,
                                 .lr_max = engine_config.lr,
                                 .momentum = engine_config.momentum,
                                 .weight_decay = engine_config.weight_decay,
                                 .batch_size = engine_config.batch_size,
                                 .eval_batch_size = engine_config.eval_batch_size,
                                 .grad_clip = engine_config.grad_clip};
    for (const auto& [genome, from_pop] : study) {
        StudyModel m;
        m.id = canonical_hash(genome);
        m.from_population = from_pop;
        m.pruned_acc = evaluate_path(pruned, genome, val, 0, engine_config.eval_batch_size);
        m.oneshot_acc = evaluate_path(oneshot, genome, val, 0, engine_config.eval_batch_size);
        m.scratch_acc = assess_scratch(model, genome, train, val, scratch, splitmix64(seed ^ m.id)).exp_acc;
        out.models.push_back(m);
        say("model " + id_hex(m.id) + " pruned " + fmt(m.pruned_acc) + " one-shot " + fmt(m.oneshot_acc) +
            " scratch " + fmt(m.scratch_acc));
    }
    std::sort(out.models.begin(), out.models.end(), [](const StudyModel& x, const StudyModel& y) { return x.id < y.id; });

    // (5) Rank agreement with the scratch ground truth.
    std::vector<double> p, o, s;
    for (const auto& m : out.models) {
        p.push_back(m.pruned_acc);
        o.push_back(m.oneshot_acc);
        s.push_back(m.scratch_acc);
    }
    out.tau_pruned = kendall_tau(p, s);
    out.tau_oneshot = kendall_tau(o, s);
    say("tau pruned " + fmt(out.tau_pruned) + " one-shot " + fmt(out.tau_oneshot));
    return out;
}

StudyReport rank_study(const RunConfig& config, const Dataset& train, const Dataset& val, const StudyLog& log) {
    if (config.study.seeds < 1) throw ConfigError("study.seeds must be >= 1");
    StudyReport report;
    for (int k = 0; k < config.study.seeds; ++k)
        report.seeds.push_back(rank_study_seed(config, config.engine.seed + static_cast<std::uint64_t>(k), train, val, log));
    return report;
}

std::vector<BlockGenome> enumerate_blocks(int op_count) {
    if (op_count < 1) throw ValidationError("enumerate_blocks: op_count must be >= 1");
    // Each hidden row takes an unordered pair of earlier nodes and an op per edge.
    std::vector<BlockGenome> out{BlockGenome{}};
    for (int r = kFirstHiddenNode; r < kOutputNode; ++r) {
        std::vector<BlockGenome> next;
        for (const auto& partial : out)
            for (int a = 0; a < r; ++a)
                for (int b = a + 1; b < r; ++b)
                    for (int oa = 1; oa <= op_count; ++oa)
                        for (int ob = 1; ob <= op_count; ++ob) {
                            BlockGenome g = partial;
                            g.at(r, a) = static_cast<OpCode>(oa);
                            g.at(r, b) = static_cast<OpCode>(ob);
                            next.push_back(g);
                        }
        out = std::move(next);
    }
    std::sort(out.begin(), out.end());
    return out;
}

BruteForceResult brute_force_surrogate(const ModelSpec& model, std::uint64_t surrogate_seed, std::uint64_t limit) {
    const BigInt size = space_stats(model.skeleton, model.opset).total;
    if (size > limit) throw ValidationError("brute force refused: " + size.str() + " networks exceed the limit");
    const auto blocks = enumerate_blocks(model.opset.size());
    const Surrogate surrogate(model, surrogate_seed);
    const int B = model.skeleton.blocks();

    BruteForceResult r;
    r.best_score = -1.0;
    NetworkGenome g{.blocks = std::vector<BlockGenome>(static_cast<std::size_t>(B)), .skeleton = model.skeleton};
    std::vector<std::size_t> digit(static_cast<std::size_t>(B), 0);
    while (true) {
        for (int j = 0; j < B; ++j) g.blocks[j] = blocks[digit[j]];
        const double v = surrogate.score(g);
        r.scores.push_back(v);
        if (v > r.best_score) {
            r.best_score = v;
            r.best = g;
        }
        int j = B - 1;
        while (j >= 0 && ++digit[j] == blocks.size()) digit[j--] = 0;
        if (j < 0) break;
    }
    r.networks = r.scores.size();
    std::sort(r.scores.begin(), r.scores.end(), std::greater<>());
    const std::size_t top = std::max<std::size_t>(1, (r.scores.size() + 99) / 100);
    r.top1_threshold = r.scores[top - 1];
    r.best_is_target = r.best == surrogate.target();
    return r;
}

}  // namespace gevo
