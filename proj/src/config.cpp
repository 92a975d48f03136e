#include "gevo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gevo/error.hpp"
#include "gevo/hash.hpp"

namespace gevo {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("bad number '" + v + "'");
    return out;
}

std::string fmt_double(double d) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

bool parse_switch(const std::string& v) {
    if (v == "on" || v == "true") return true;
    if (v == "off" || v == "false") return false;
    throw ConfigError("expected on/off, got '" + v + "'");
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define GEVO_INT(k, member)                                                               \
    Field {                                                                               \
        k, [](const RunConfig& c) { return std::to_string(c.member); },                   \
            [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(v); }  \
    }
#define GEVO_U64(k, member)                                                                        \
    Field {                                                                                        \
        k, [](const RunConfig& c) { return std::to_string(c.member); },                            \
            [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(v); } \
    }
#define GEVO_DOUBLE(k, member)                                                              \
    Field {                                                                                 \
        k, [](const RunConfig& c) { return fmt_double(c.member); },                         \
            [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(v); } \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        GEVO_INT("search.blocks", engine.blocks),
        GEVO_INT("search.generations", engine.generations),
        GEVO_INT("search.population", engine.population),
        GEVO_INT("search.warmup_epochs", engine.warmup_epochs),
        GEVO_INT("search.interval_epochs", engine.interval_epochs),
        GEVO_INT("search.samples", engine.samples),
        GEVO_U64("search.seed", engine.seed),
        Field{"search.mode", [](const RunConfig& c) { return std::string(mode_name(c.engine.mode)); },
              [](RunConfig& c, const std::string& v) {
                  if (v == "growth") {
                      c.engine.mode = SearchMode::Growth;
                  } else if (v == "flat") {
                      c.engine.mode = SearchMode::Flat;
                  } else {
                      throw ConfigError("search.mode must be growth or flat");
                  }
              }},
        Field{"space.opset", [](const RunConfig& c) { return c.engine.opset; },
              [](RunConfig& c, const std::string& v) { c.engine.opset = v; }},
        GEVO_INT("space.ops", engine.ops),
        Field{"net.input",
              [](const RunConfig& c) {
                  std::vector<std::string> dims;
                  for (int d : c.engine.shape.input) dims.push_back(std::to_string(d));
                  return join(dims);
              },
              [](RunConfig& c, const std::string& v) {
                  c.engine.shape.input.clear();
                  for (const auto& d : split_list(v)) c.engine.shape.input.push_back(parse_number<int>(d));
              }},
        GEVO_INT("net.width", engine.shape.width),
        GEVO_INT("net.classes", engine.shape.classes),
        Field{"data.kind", [](const RunConfig& c) { return c.engine.data.kind; },
              [](RunConfig& c, const std::string& v) {
                  if (v != "synthetic" && v != "cifar10") throw ConfigError("data.kind must be synthetic or cifar10");
                  c.engine.data.kind = v;
              }},
        GEVO_INT("data.classes", engine.data.classes),
        GEVO_INT("data.samples", engine.data.samples),
        GEVO_DOUBLE("data.noise", engine.data.noise),
        GEVO_U64("data.seed", engine.data.seed),
        GEVO_DOUBLE("data.split", engine.data.split),
        Field{"data.paths", [](const RunConfig& c) { return join(c.engine.data.paths); },
              [](RunConfig& c, const std::string& v) { c.engine.data.paths = split_list(v); }},
        GEVO_DOUBLE("train.lr", engine.lr),
        GEVO_DOUBLE("train.momentum", engine.momentum),
        GEVO_DOUBLE("train.weight_decay", engine.weight_decay),
        GEVO_INT("train.batch_size", engine.batch_size),
        GEVO_DOUBLE("train.grad_clip", engine.grad_clip),
        GEVO_INT("eval.batch_size", engine.eval_batch_size),
        GEVO_INT("eval.batches", engine.eval_batches),
        GEVO_DOUBLE("variation.crossover_rate", engine.variation.crossover_rate),
        GEVO_DOUBLE("variation.mutation_rate", engine.variation.mutation_rate),
        GEVO_DOUBLE("variation.swap_rate", engine.variation.swap_rate),
        GEVO_INT("variation.retries", engine.variation.retries),
        Field{"selection.protection",
              [](const RunConfig& c) { return std::string(c.engine.selection.protection ? "on" : "off"); },
              [](RunConfig& c, const std::string& v) { c.engine.selection.protection = parse_switch(v); }},
        Field{"evaluator.kind", [](const RunConfig& c) { return std::string(evaluator_name(c.engine.evaluator)); },
              [](RunConfig& c, const std::string& v) {
                  if (v == "shared") {
                      c.engine.evaluator = EvaluatorKind::Shared;
                  } else if (v == "surrogate") {
                      c.engine.evaluator = EvaluatorKind::Surrogate;
                  } else if (v == "scratch") {
                      c.engine.evaluator = EvaluatorKind::Scratch;
                  } else {
                      throw ConfigError("evaluator.kind must be shared, surrogate or scratch");
                  }
              }},
        GEVO_U64("evaluator.surrogate_seed", engine.surrogate_seed),
        GEVO_INT("evaluator.scratch_epochs", engine.scratch_epochs),
        GEVO_INT("study.models", study.models),
        GEVO_INT("study.seeds", study.seeds),
        GEVO_INT("study.scratch_epochs", study.scratch_epochs),
    };
    return table;
}

#undef GEVO_INT
#undef GEVO_U64
#undef GEVO_DOUBLE

}  // namespace

const char* mode_name(SearchMode m) { return m == SearchMode::Growth ? "growth" : "flat"; }

const char* evaluator_name(EvaluatorKind k) {
    switch (k) {
    case EvaluatorKind::Shared: return "shared";
    case EvaluatorKind::Surrogate: return "surrogate";
    case EvaluatorKind::Scratch: return "scratch";
    }
    return "?";
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected 'section.key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
        if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->set(c, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string format_config(const RunConfig& c) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

std::uint64_t config_digest(const EngineConfig& c) {
    const std::string text = format_config(RunConfig{c, StudyConfig{}});
    Hasher h;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("study.", 0) != 0) h.str(line);
    return h.digest();
}

void validate(const EngineConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(c.blocks >= 1, "search.blocks must be >= 1");
    require(c.generations >= 1, "search.generations must be >= 1");
    require(c.population >= 2, "search.population must be >= 2");
    require(c.warmup_epochs >= 0, "search.warmup_epochs must be >= 0");
    require(c.interval_epochs >= 0, "search.interval_epochs must be >= 0");
    require(c.samples >= 1, "search.samples must be >= 1");
    require(c.ops >= 0, "space.ops must be >= 0");
    require(c.lr > 0 && c.momentum >= 0 && c.momentum < 1 && c.weight_decay >= 0, "train.* values out of range");
    require(c.grad_clip >= 0, "train.grad_clip must be >= 0");
    require(c.batch_size >= 1 && c.eval_batch_size >= 1 && c.eval_batches >= 0, "batch settings must be positive");
    for (double p : {c.variation.crossover_rate, c.variation.mutation_rate, c.variation.swap_rate})
        require(p >= 0 && p <= 1, "variation rates must lie in [0, 1]");
    require(c.variation.retries >= 0, "variation.retries must be >= 0");
    require(c.scratch_epochs >= 1, "evaluator.scratch_epochs must be >= 1");
    require(c.data.split > 0 && c.data.split < 1, "data.split must lie in (0, 1)");
    if (c.data.kind == "cifar10") require(!c.data.paths.empty(), "data.paths is required for cifar10");
    try {
        validate_shape(c.shape, make_skeleton(c), make_opset(c));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

OpSet make_opset(const EngineConfig& c) {
    try {
        return OpSet::by_name(c.opset, c.ops);
    } catch (const Error& e) {
        throw ConfigError(std::string("space: ") + e.what());
    }
}

SkeletonSpec make_skeleton(const EngineConfig& c) {
    try {
        return SkeletonSpec(c.blocks);
    } catch (const Error& e) {
        throw ConfigError(std::string("search.blocks: ") + e.what());
    }
}

std::pair<Dataset, Dataset> make_datasets(const EngineConfig& c) {
    Dataset all;
    if (c.data.kind == "cifar10") {
        all = load_cifar10_binary(c.data.paths);
    } else {
        all = gen_synthetic(c.data.classes, c.data.samples, c.shape.input, c.data.noise, c.data.seed);
    }
    if (all.classes != c.shape.classes) {
        throw ConfigError("net.classes = " + std::to_string(c.shape.classes) + " but the data has " +
                          std::to_string(all.classes) + " classes");
    }
    if (all.sample_shape() != c.shape.input) {
        throw ConfigError("net.input " + shape_string(c.shape.input) + " does not match the data sample shape " +
                          shape_string(all.sample_shape()));
    }
    auto [train, val] = split(all, c.data.split, c.data.seed);
    train.split = "train";
    val.split = "val";
    return {std::move(train), std::move(val)};
}

}  // namespace gevo
