#include "gevo/engine.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "gevo/binio.hpp"
#include "gevo/error.hpp"
#include "gevo/hash.hpp"
#include "json.hpp"

namespace gevo {

Population grow_population(const Population& pop, const OpSet& opset, Rng& rng) {
    Population out;
    out.reserve(pop.size());
    for (const auto& ind : pop) {
        NetworkGenome g = ind.genome;
        if (g.size() >= g.skeleton.blocks()) throw ValidationError("grow_population: genome already complete");
        g.blocks.push_back(random_block(opset, rng));
        out.push_back(Individual::of(std::move(g)));
    }
    return out;
}

Population init_population(const SkeletonSpec& skeleton, const OpSet& opset, int length, int p_num, Rng& rng) {
    Population pop;
    std::set<std::uint64_t> seen;
    const long max_attempts = 1000L * p_num;
    for (long attempt = 0; static_cast<int>(pop.size()) < p_num; ++attempt) {
        if (attempt >= max_attempts) throw ValidationError("init_population: space too small for P_num distinct genomes");
        NetworkGenome g{.blocks = {}, .skeleton = skeleton};
        for (int i = 0; i < length; ++i) g.blocks.push_back(random_block(opset, rng));
        Individual ind = Individual::of(std::move(g));
        if (seen.insert(ind.id).second) pop.push_back(std::move(ind));
    }
    return pop;
}

SearchEngine::SearchEngine(EngineConfig config, const Dataset& train, const Dataset& val)
    : config_(std::move(config)), train_(train), val_(val) {
    validate(config_);
    digest_ = config_digest(config_);
    model_ = {make_skeleton(config_), make_opset(config_), config_.shape};
    validate(train_);
    validate(val_);
    state_.rng = Rng(splitmix64(config_.seed));
}

int SearchEngine::stages_total() const { return config_.mode == SearchMode::Flat ? 1 : config_.blocks; }

int SearchEngine::generations_per_stage() const {
    // The flat baseline gets the same total number of generations.
    return config_.mode == SearchMode::Flat ? config_.blocks * config_.generations : config_.generations;
}

StageRecord SearchEngine::stage_record(int pruned_blocks) const {
    StageRecord r;
    r.stage = state_.stage;
    r.pruned_blocks = pruned_blocks;
    const PruneState* prune = state_.supernet ? &state_.supernet->prune : nullptr;
    const SpaceStats stats = space_stats(model_.skeleton, model_.opset, prune);
    r.space_size = stats.pruned_total.str();
    r.ratio = stats.reduction_ratio.str();
    if (pruned_blocks == 0) {
        r.nominal_ratio = "1";
    } else {
        const ReductionRatio nominal =
            reduction_ratio(space_stats(model_.skeleton, model_.opset), config_.population, pruned_blocks);
        r.nominal_ratio = nominal.ratio.str();
        r.clamped = nominal.clamped;
    }
    return r;
}

std::unique_ptr<Evaluator> SearchEngine::make_evaluator() const {
    switch (config_.evaluator) {
    case EvaluatorKind::Shared:
        return std::make_unique<SharedWeightEvaluator>(*state_.supernet, val_, config_.eval_batches,
                                                       config_.eval_batch_size);
    case EvaluatorKind::Surrogate:
        return std::make_unique<SurrogateEvaluator>(model_, config_.surrogate_seed);
    case EvaluatorKind::Scratch:
        return std::make_unique<ScratchEvaluator>(
            model_, train_, val_,
            ScratchOptions{.epochs = config_.scratch_epochs,
                           .lr_max = config_.lr,
                           .momentum = config_.momentum,
                           .weight_decay = config_.weight_decay,
                           .batch_size = config_.batch_size,
                           .eval_batch_size = config_.eval_batch_size,
                           .grad_clip = config_.grad_clip});
    }
    throw ValidationError("unknown evaluator");
}

std::int64_t total_train_steps(const EngineConfig& c, int train_size) {
    if (c.evaluator != EvaluatorKind::Shared) return 0;
    const std::int64_t per_epoch = (train_size + c.batch_size - 1) / c.batch_size;
    const std::int64_t generations = static_cast<std::int64_t>(c.blocks) * c.generations;
    return per_epoch * (c.warmup_epochs + generations * c.interval_epochs);
}

void SearchEngine::initialize() {
    state_.schedule = TrainSchedule{.lr_max = config_.lr,
                                    .momentum = config_.momentum,
                                    .weight_decay = config_.weight_decay,
                                    .batch_size = config_.batch_size,
                                    .grad_clip = config_.grad_clip,
                                    .total_steps = std::max<std::int64_t>(1, total_train_steps(config_, train_.size()))};
    if (config_.evaluator == EvaluatorKind::Shared) {
        state_.supernet = init_supernet(model_.skeleton, model_.opset, model_.shape, supernet_seed(config_));
        if (config_.warmup_epochs > 0)
            train_supernet(*state_.supernet, train_, config_.warmup_epochs, nullptr, 0, state_.schedule, state_.rng);
    }
    const int length = config_.mode == SearchMode::Flat ? config_.blocks : 1;
    state_.population = init_population(model_.skeleton, model_.opset, length, config_.population, state_.rng);
    begin_stage(length);
}

void SearchEngine::begin_stage(int stage) {
    state_.stage = stage;
    state_.generation = 0;
    const int pruned = state_.supernet ? static_cast<int>(std::count_if(state_.supernet->prune.begin(),
                                                                        state_.supernet->prune.end(),
                                                                        [](const auto& slot) { return slot.has_value(); }))
                                       : 0;
    state_.stages.push_back(stage_record(pruned));
}

void SearchEngine::run_generation() {
    const int stage = state_.stage;
    VariationParams variation = config_.variation;
    variation.scope = config_.mode == SearchMode::Flat ? VariationScope::AllBlocks : VariationScope::LatestBlock;
    Population merged = state_.population;
    for (auto& child : generate_offspring(state_.population, stage, variation, model_.opset.size(), state_.rng))
        merged.push_back(std::move(child));

    if (state_.supernet && config_.interval_epochs > 0)
        train_supernet(*state_.supernet, train_, config_.interval_epochs, &merged, stage, state_.schedule, state_.rng);

    const auto evaluator = make_evaluator();
    for (auto& ind : merged) ind.potential = evaluator->assess(ind.genome, config_.samples, state_.rng);

    state_.population = environmental_select(merged, config_.population, config_.selection);
    ++state_.generation;
    for (const auto& ind : state_.population) {
        const auto& p = ind.fitness();
        state_.history.push_back({stage, state_.generation, ind.id, p.exp_acc, p.exp_size, ind.front, p.n_samples});
    }
    if (stage == config_.blocks && state_.generation == generations_per_stage()) state_.finished = true;
}

bool SearchEngine::step() {
    if (state_.finished) return false;
    if (state_.stage == 0) {
        initialize();
        return true;
    }
    if (state_.generation == generations_per_stage()) {
        // Stage transition: restrict the supernet to the elite blocks, then grow.
        if (state_.supernet) prune(*state_.supernet, state_.population, config_.population);
        state_.population = grow_population(state_.population, model_.opset, state_.rng);
        begin_stage(state_.stage + 1);
    }
    run_generation();
    return true;
}

FinalReport SearchEngine::run(const std::function<void(const SearchState&)>& on_generation) {
    while (step())
        if (on_generation) on_generation(state_);
    return report();
}

FinalReport SearchEngine::report() const {
    if (!state_.finished) throw ValidationError("report requested before the search finished");
    FinalReport r;
    r.config_digest = digest_;
    r.population = state_.population;
    for (std::size_t i = 0; i < r.population.size(); ++i)
        if (r.population[i].front == 0) r.pareto.push_back(i);
    r.stages = state_.stages;
    r.history = state_.history;
    r.train_steps = state_.schedule.step;
    r.supernet_digest = state_.supernet ? state_.supernet->digest() : 0;
    return r;
}

std::uint64_t FinalReport::digest() const {
    Hasher h;
    h.u64(config_digest);
    h.u64(population.size());
    for (const auto& ind : population) {
        h.u64(ind.id);
        h.f64(ind.fitness().exp_acc).f64(ind.fitness().exp_size).u32(static_cast<std::uint32_t>(ind.fitness().n_samples));
        h.u32(static_cast<std::uint32_t>(ind.front));
    }
    for (const auto& s : stages) {
        h.u32(static_cast<std::uint32_t>(s.stage)).u32(static_cast<std::uint32_t>(s.pruned_blocks));
        h.str(s.space_size).str(s.ratio).str(s.nominal_ratio).u8(s.clamped);
    }
    h.u64(history.size());
    for (const auto& row : history) {
        h.u32(static_cast<std::uint32_t>(row.stage)).u32(static_cast<std::uint32_t>(row.generation)).u64(row.id);
        h.f64(row.exp_acc).f64(row.exp_size).u32(static_cast<std::uint32_t>(row.front));
        h.u32(static_cast<std::uint32_t>(row.n_samples));
    }
    h.u64(static_cast<std::uint64_t>(train_steps));
    h.u64(supernet_digest);
    return h.digest();
}

std::string FinalReport::to_json(const OpSet& opset) const {
    using nlohmann::json;
    json j;
    j["config_digest"] = id_hex(config_digest);
    j["report_digest"] = id_hex(digest());
    j["train_steps"] = train_steps;
    j["supernet_digest"] = id_hex(supernet_digest);
    json members = json::array();
    for (const auto& ind : population) {
        json blocks = json::array();
        for (const auto& b : ind.genome.blocks) blocks.push_back(encode(b, opset.size()));
        members.push_back({{"id", id_hex(ind.id)},
                           {"front", ind.front},
                           {"exp_acc", ind.fitness().exp_acc},
                           {"exp_size", ind.fitness().exp_size},
                           {"n_samples", ind.fitness().n_samples},
                           {"blocks", blocks}});
    }
    j["population"] = members;
    json front = json::array();
    for (auto i : pareto) front.push_back(id_hex(population[i].id));
    j["pareto"] = front;
    json stage_list = json::array();
    for (const auto& s : stages) {
        stage_list.push_back({{"stage", s.stage},
                              {"pruned_blocks", s.pruned_blocks},
                              {"space_size", s.space_size},
                              {"ratio", s.ratio},
                              {"nominal_ratio", s.nominal_ratio},
                              {"clamped", s.clamped}});
    }
    j["stages"] = stage_list;
    j["op_names"] = opset.names();
    return j.dump(2) + "\n";
}

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'E', 'V', 'S'};

void write_population(BinaryWriter& w, const Population& pop) {
    w.u32(static_cast<std::uint32_t>(pop.size()));
    for (const auto& ind : pop) {
        w.u32(static_cast<std::uint32_t>(ind.genome.size()));
        for (const auto& b : ind.genome.blocks)
            for (const auto& row : b.matrix) w.raw(row.data(), row.size());
        w.u8(ind.potential ? 1 : 0);
        if (ind.potential) {
            w.f64(ind.potential->exp_acc);
            w.f64(ind.potential->exp_size);
            w.u32(static_cast<std::uint32_t>(ind.potential->n_samples));
        }
        w.u32(static_cast<std::uint32_t>(ind.front));
    }
}

Population read_population(BinaryReader& r, const SkeletonSpec& skeleton, int op_count) {
    const std::uint32_t n = r.u32();
    if (n > (1u << 20)) throw CheckpointError("implausible population size in checkpoint");
    Population pop;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t len = r.u32();
        if (len < 1 || len > static_cast<std::uint32_t>(skeleton.blocks()))
            throw CheckpointError("bad genome length in checkpoint");
        NetworkGenome g{.blocks = std::vector<BlockGenome>(len), .skeleton = skeleton};
        for (auto& b : g.blocks) {
            for (auto& row : b.matrix) r.raw(row.data(), row.size());
            if (auto v = find_violation(b, op_count)) throw CheckpointError("invalid genome in checkpoint: " + *v);
        }
        Individual ind = Individual::of(std::move(g));
        if (r.u8()) {
            PotentialEstimate p;
            p.exp_acc = r.f64();
            p.exp_size = r.f64();
            p.n_samples = static_cast<int>(r.u32());
            ind.potential = p;
        }
        ind.front = static_cast<int>(static_cast<std::int32_t>(r.u32()));
        pop.push_back(std::move(ind));
    }
    return pop;
}

}  // namespace

void SearchEngine::write_checkpoint(std::ostream& out) const {
    std::ostringstream payload;
    BinaryWriter w(payload);
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u64(digest_);
    w.u32(static_cast<std::uint32_t>(state_.stage));
    w.u32(static_cast<std::uint32_t>(state_.generation));
    w.u8(state_.finished ? 1 : 0);
    std::ostringstream rng_text;
    rng_text << state_.rng;
    w.str(rng_text.str());
    w.u64(static_cast<std::uint64_t>(state_.schedule.total_steps));
    w.u64(static_cast<std::uint64_t>(state_.schedule.step));
    write_population(w, state_.population);
    w.u64(state_.history.size());
    for (const auto& row : state_.history) {
        w.u32(static_cast<std::uint32_t>(row.stage));
        w.u32(static_cast<std::uint32_t>(row.generation));
        w.u64(row.id);
        w.f64(row.exp_acc);
        w.f64(row.exp_size);
        w.u32(static_cast<std::uint32_t>(row.front));
        w.u32(static_cast<std::uint32_t>(row.n_samples));
    }
    w.u32(static_cast<std::uint32_t>(state_.stages.size()));
    for (const auto& s : state_.stages) {
        w.u32(static_cast<std::uint32_t>(s.stage));
        w.u32(static_cast<std::uint32_t>(s.pruned_blocks));
        w.str(s.space_size);
        w.str(s.ratio);
        w.str(s.nominal_ratio);
        w.u8(s.clamped ? 1 : 0);
    }
    w.u8(state_.supernet ? 1 : 0);
    if (state_.supernet) {
        std::ostringstream net;
        write_supernet(net, *state_.supernet);
        w.str(net.str());
    }
    const std::string bytes = payload.str();
    Hasher h;
    h.str(bytes);
    BinaryWriter tail(out);
    tail.raw(bytes.data(), bytes.size());
    tail.u64(h.digest());
}

void SearchEngine::save_checkpoint(const std::string& path) const {
    // Write-then-rename so an interrupted save never clobbers the last good one.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + tmp);
        write_checkpoint(out);
        if (!out) throw CheckpointError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint to " + path);
}

SearchEngine SearchEngine::resume(std::istream& in, EngineConfig config, const Dataset& train, const Dataset& val) {
    const std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (all.size() < 12) throw CheckpointError("checkpoint is truncated");
    const std::string bytes = all.substr(0, all.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(all[bytes.size() + i])) << (8 * i);
    Hasher h;
    h.str(bytes);
    if (h.digest() != stored) throw CheckpointError("checkpoint integrity check failed (corrupted or truncated file)");

    std::istringstream payload(bytes);
    BinaryReader r(payload);
    char magic[4];
    r.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw CheckpointError("not a search checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    SearchEngine engine(std::move(config), train, val);
    const std::uint64_t digest = r.u64();
    if (digest != engine.digest_) {
        throw CheckpointError("checkpoint was written under config digest " + id_hex(digest) +
                              " but the current config digest is " + id_hex(engine.digest_) + "; refusing to resume");
    }
    SearchState& st = engine.state_;
    st.stage = static_cast<int>(r.u32());
    st.generation = static_cast<int>(r.u32());
    st.finished = r.u8() != 0;
    std::istringstream rng_text(r.str());
    rng_text >> st.rng;
    if (!rng_text) throw CheckpointError("bad generator state in checkpoint");
    st.schedule = TrainSchedule{.lr_max = engine.config_.lr,
                                .momentum = engine.config_.momentum,
                                .weight_decay = engine.config_.weight_decay,
                                .batch_size = engine.config_.batch_size,
                                .grad_clip = engine.config_.grad_clip};
    st.schedule.total_steps = static_cast<std::int64_t>(r.u64());
    st.schedule.step = static_cast<std::int64_t>(r.u64());
    st.population = read_population(r, engine.model_.skeleton, engine.model_.opset.size());
    const std::uint64_t rows = r.u64();
    if (rows > (1u << 24)) throw CheckpointError("implausible history length in checkpoint");
    for (std::uint64_t i = 0; i < rows; ++i) {
        GenerationRow row;
        row.stage = static_cast<int>(r.u32());
        row.generation = static_cast<int>(r.u32());
        row.id = r.u64();
        row.exp_acc = r.f64();
        row.exp_size = r.f64();
        row.front = static_cast<int>(r.u32());
        row.n_samples = static_cast<int>(r.u32());
        st.history.push_back(row);
    }
    const std::uint32_t nstages = r.u32();
    if (nstages > 4096) throw CheckpointError("implausible stage count in checkpoint");
    for (std::uint32_t i = 0; i < nstages; ++i) {
        StageRecord s;
        s.stage = static_cast<int>(r.u32());
        s.pruned_blocks = static_cast<int>(r.u32());
        s.space_size = r.str();
        s.ratio = r.str();
        s.nominal_ratio = r.str();
        s.clamped = r.u8() != 0;
        st.stages.push_back(s);
    }
    if (r.u8()) {
        std::istringstream net(r.str(std::size_t{1} << 31));
        st.supernet = read_supernet(net);
    }
    return engine;
}

SearchEngine SearchEngine::resume(const std::string& path, EngineConfig config, const Dataset& train,
                                  const Dataset& val) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    return resume(in, std::move(config), train, val);
}

FinalReport run_search(const EngineConfig& config, const Dataset& train, const Dataset& val) {
    SearchEngine engine(config, train, val);
    return engine.run();
}

std::string generation_csv_header() { return "stage,generation,id,exp_acc,exp_size,front,n_samples"; }

std::string generation_csv_row(const GenerationRow& r) {
    std::ostringstream out;
    out << r.stage << ',' << r.generation << ',' << id_hex(r.id) << ',' << std::setprecision(17) << r.exp_acc << ','
        << r.exp_size << ',' << r.front << ',' << r.n_samples;
    return out.str();
}

}  // namespace gevo
