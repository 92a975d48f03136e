#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gevo/data.hpp"
#include "gevo/selection.hpp"
#include "gevo/space.hpp"
#include "gevo/variation.hpp"

namespace gevo {

enum class SearchMode { Growth, Flat };
enum class EvaluatorKind { Shared, Surrogate, Scratch };

struct DataConfig {
    std::string kind = "synthetic";  // synthetic | cifar10
    int classes = 4;
    int samples = 2000;  // synthetic: total before the split
    double noise = 0.3;
    std::uint64_t seed = 1;
    double split = 0.8;               // train fraction
    std::vector<std::string> paths;   // cifar10 batch files
};

struct EngineConfig {
    int blocks = 3;            // B
    int generations = 5;       // G per stage
    int population = 10;       // P_num
    int warmup_epochs = 10;    // E_w
    int interval_epochs = 2;   // E_s, per generation
    int samples = 4;           // M completions per potential estimate
    std::uint64_t seed = 0;
    SearchMode mode = SearchMode::Growth;

    std::string opset = "conv5";
    int ops = 0;  // keep the first K ops; 0 = all
    NetShape shape;
    DataConfig data;

    double lr = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    int batch_size = 32;
    double grad_clip = 5.0;  // 0 disables
    int eval_batch_size = 256;
    int eval_batches = 1;  // mini-batches per estimate during evolution; 0 = full set

    VariationParams variation;
    SelectionOptions selection;

    EvaluatorKind evaluator = EvaluatorKind::Shared;
    std::uint64_t surrogate_seed = 0;
    int scratch_epochs = 5;
};

struct StudyConfig {
    int models = 40;         // N
    int seeds = 5;           // study runs use seeds search.seed .. search.seed + seeds - 1
    int scratch_epochs = 10;
};

struct RunConfig {
    EngineConfig engine;
    StudyConfig study;
};

// Flat "section.key = value" lines; '#' starts a comment. Unknown keys,
// duplicates and malformed values raise ConfigError naming the line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Every key in canonical order; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& c);
std::vector<std::string> config_keys();

// Digest of the engine section; checkpoints and reports carry it.
std::uint64_t config_digest(const EngineConfig& c);

// Throws ConfigError on out-of-range values.
void validate(const EngineConfig& c);

OpSet make_opset(const EngineConfig& c);
SkeletonSpec make_skeleton(const EngineConfig& c);

// Builds (train, validation) from the data section. Synthetic samples take
// their shape from net.input.
std::pair<Dataset, Dataset> make_datasets(const EngineConfig& c);

const char* mode_name(SearchMode m);
const char* evaluator_name(EvaluatorKind k);

}  // namespace gevo
