#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gevo/config.hpp"
#include "gevo/data.hpp"
#include "gevo/evaluators.hpp"
#include "gevo/selection.hpp"
#include "gevo/supernet.hpp"

namespace gevo {

// One row per surviving individual per generation.
struct GenerationRow {
    int stage = 0;
    int generation = 0;
    std::uint64_t id = 0;
    double exp_acc = 0.0;
    double exp_size = 0.0;
    int front = 0;
    int n_samples = 0;

    friend bool operator==(const GenerationRow&, const GenerationRow&) = default;
};

// Search-space bookkeeping at the start of each stage. Ratios are exact
// decimal/fraction strings.
struct StageRecord {
    int stage = 0;
    int pruned_blocks = 0;
    std::string space_size;    // |S| after pruning
    std::string ratio;         // |S_pruned| / |S|
    std::string nominal_ratio; // P_num^i * prod C_j / prod C_j, clamped to 1
    bool clamped = false;

    friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

struct FinalReport {
    std::uint64_t config_digest = 0;
    Population population;
    std::vector<std::size_t> pareto;  // indices of front 0
    std::vector<StageRecord> stages;
    std::vector<GenerationRow> history;
    std::int64_t train_steps = 0;
    std::uint64_t supernet_digest = 0;  // 0 when the evaluator has no supernet

    std::uint64_t digest() const;
    std::string to_json(const OpSet& opset) const;
};

struct SearchState {
    int stage = 0;       // genome length b; 0 before initialization
    int generation = 0;  // generations completed in this stage
    bool finished = false;
    Population population;
    Rng rng;
    std::optional<SuperNet> supernet;
    TrainSchedule schedule;
    std::vector<GenerationRow> history;
    std::vector<StageRecord> stages;
};

// Appends one fresh random block to every genome (potentials invalidated).
Population grow_population(const Population& pop, const OpSet& opset, Rng& rng);

// P_num distinct random genomes of the given length.
Population init_population(const SkeletonSpec& skeleton, const OpSet& opset, int length, int p_num, Rng& rng);

// Drives the search one unit at a time so it can be checkpointed at any
// generation boundary. Datasets are held by reference.
class SearchEngine {
public:
    SearchEngine(EngineConfig config, const Dataset& train, const Dataset& val);

    // Warm-up and initial population on the first call; afterwards one
    // generation (with stage transition when due). Returns false once done.
    bool step();
    FinalReport run(const std::function<void(const SearchState&)>& on_generation = {});
    FinalReport report() const;

    bool done() const { return state_.finished; }
    const SearchState& state() const { return state_; }
    const EngineConfig& config() const { return config_; }
    const ModelSpec& model() const { return model_; }
    int stages_total() const;
    int generations_per_stage() const;

    void save_checkpoint(const std::string& path) const;
    void write_checkpoint(std::ostream& out) const;
    // Refuses checkpoints written under a different config digest.
    static SearchEngine resume(std::istream& in, EngineConfig config, const Dataset& train, const Dataset& val);
    static SearchEngine resume(const std::string& path, EngineConfig config, const Dataset& train,
                               const Dataset& val);

private:
    void initialize();
    void begin_stage(int stage);
    void run_generation();
    std::unique_ptr<Evaluator> make_evaluator() const;
    StageRecord stage_record(int pruned_blocks) const;

    EngineConfig config_;
    std::uint64_t digest_;
    ModelSpec model_;
    const Dataset& train_;
    const Dataset& val_;
    SearchState state_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Initialization seed of the search supernet; baselines reuse it.
inline std::uint64_t supernet_seed(const EngineConfig& c) { return splitmix64(c.seed ^ 0x5eedULL); }

// SGD steps a search with this config performs in total.
std::int64_t total_train_steps(const EngineConfig& c, int train_size);

// Convenience: validate, build, run to completion.
FinalReport run_search(const EngineConfig& config, const Dataset& train, const Dataset& val);

std::string generation_csv_header();
std::string generation_csv_row(const GenerationRow& r);

}  // namespace gevo
