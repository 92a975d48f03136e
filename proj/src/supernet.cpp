#include "gevo/supernet.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <set>

#include "gevo/binio.hpp"
#include "gevo/error.hpp"
#include "gevo/hash.hpp"

namespace gevo {

struct EdgeTape {
    Edge edge;
    OpCache cache;
};

struct BlockTape {
    std::array<int, 2> input_index{};
    std::array<Tensor, kOutputNode> nodes;
    std::vector<EdgeTape> edges;
    Tensor concat;
};

struct PathTape::State {
    NetworkGenome path;
    Tensor x;
    std::vector<Tensor> outs;  // outs[0] = stem, outs[i + 1] = block i
    std::vector<BlockTape> blocks;
    Tensor pooled;
};

PathTape::PathTape() : state_(std::make_unique<State>()) {}
PathTape::~PathTape() = default;
PathTape::PathTape(PathTape&&) noexcept = default;
PathTape& PathTape::operator=(PathTape&&) noexcept = default;

namespace {

const Tensor& lookup(const ParamStore& store, ParamKey key, ParamRole role) {
    key.role = role;
    auto it = store.find(key);
    if (it == store.end()) throw ValidationError("missing parameter " + key.str());
    return it->second.value;
}

ParamKey stem_key() { return {kStemBlock, 0, kNoSource, 0, ParamRole::Weight}; }
ParamKey head_key(const ModelSpec& m) {
    return {static_cast<std::int16_t>(m.skeleton.blocks()), 0, kNoSource, 0, ParamRole::Weight};
}
ParamKey frame_key(int block, int dest) {
    return {static_cast<std::int16_t>(block), static_cast<std::int8_t>(dest), kNoSource, 0, ParamRole::Weight};
}
ParamKey edge_key(int block, const Edge& e) {
    return {static_cast<std::int16_t>(block), static_cast<std::int8_t>(e.dest), static_cast<std::int8_t>(e.src), e.op,
            ParamRole::Weight};
}

Tensor linear(bool vec, const Tensor& x, const Tensor& w, const Tensor& b, int stride, const char* where) {
    Tensor y;
    try {
        y = vec ? dense(x, w, b) : conv2d(x, w, b, stride);
    } catch (const ShapeError& e) {
        throw ShapeError(std::string(where) + ": " + e.what());
    }
    ensure_finite(y, where);
    return y;
}

void linear_backward(bool vec, const Tensor& x, const Tensor& w, const Tensor& gy, int stride, Tensor* gx, Tensor& gw,
                     Tensor& gb) {
    if (vec) {
        dense_backward(x, w, gy, gx, gw, gb);
    } else {
        conv2d_backward(x, w, gy, stride, gx, gw, gb);
    }
}

// Gradient slots for a weight/bias pair, created zeroed on first use.
std::pair<Tensor*, Tensor*> grad_slots(GradMap& grads, const ParamStore& store, ParamKey key) {
    key.role = ParamRole::Weight;
    auto w = grads.try_emplace(key, lookup(store, key, ParamRole::Weight).shape()).first;
    key.role = ParamRole::Bias;
    auto b = grads.try_emplace(key, lookup(store, key, ParamRole::Bias).shape()).first;
    return {&w->second, &b->second};
}

int input_index(int block, int source) { return std::max(0, block - 1 + source); }

}  // namespace

Tensor forward_path(const ModelSpec& model, const ParamStore& store, const NetworkGenome& path, const Tensor& x,
                    PathTape* tape) {
    if (!path.complete()) throw ValidationError("forward_path needs a complete genome");
    const bool vec = model.opset.vector_mode();
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(path.size()) + 1);
    outs.push_back(linear(vec, x, lookup(store, stem_key(), ParamRole::Weight),
                          lookup(store, stem_key(), ParamRole::Bias), 1, "stem"));

    std::vector<BlockTape> blocks;
    for (int i = 0; i < path.size(); ++i) {
        BlockTape bt;
        for (int s = 0; s < 2; ++s) {
            bt.input_index[s] = input_index(i, s);
            const auto key = frame_key(i, s);
            bt.nodes[s] = linear(vec, outs[bt.input_index[s]], lookup(store, key, ParamRole::Weight),
                                 lookup(store, key, ParamRole::Bias),
                                 preprocessor_stride(model.shape, model.skeleton, model.opset, i, s), "preprocessor");
        }
        for (int node = kFirstHiddenNode; node < kOutputNode; ++node) {
            std::optional<Tensor> acc;
            for (int src = 0; src < node; ++src) {
                const OpCode op = path.blocks[i].at(node, src);
                if (op == 0) continue;
                const OpKind kind = model.opset.at(op).kind;
                if (kind == OpKind::Zero) continue;
                const Edge e{node, src, op};
                const Tensor* w = nullptr;
                const Tensor* b = nullptr;
                if (is_parametric(kind)) {
                    w = &lookup(store, edge_key(i, e), ParamRole::Weight);
                    b = &lookup(store, edge_key(i, e), ParamRole::Bias);
                }
                EdgeTape et{e, {}};
                Tensor y = op_forward(kind, bt.nodes[src], w, b, tape ? &et.cache : nullptr);
                if (acc) {
                    add_inplace(*acc, y);
                } else {
                    acc = std::move(y);
                }
                if (tape) bt.edges.push_back(std::move(et));
            }
            bt.nodes[node] = acc ? std::move(*acc) : Tensor(bt.nodes[0].shape());
        }
        const std::array<const Tensor*, kHiddenNodes> parts{&bt.nodes[2], &bt.nodes[3], &bt.nodes[4], &bt.nodes[5]};
        Tensor concat = concat_channels(parts);
        const auto proj = frame_key(i, kOutputNode);
        outs.push_back(linear(vec, concat, lookup(store, proj, ParamRole::Weight), lookup(store, proj, ParamRole::Bias),
                              1, "projection"));
        if (tape) {
            bt.concat = std::move(concat);
            blocks.push_back(std::move(bt));
        }
    }

    Tensor pooled = vec ? outs.back() : global_avg_pool(outs.back());
    Tensor logits = dense(pooled, lookup(store, head_key(model), ParamRole::Weight),
                          lookup(store, head_key(model), ParamRole::Bias));
    ensure_finite(logits, "classifier");
    if (tape) {
        auto& st = tape->state();
        st.path = path;
        st.x = x;
        st.outs = std::move(outs);
        st.blocks = std::move(blocks);
        st.pooled = std::move(pooled);
    }
    return logits;
}

GradMap backward_path(const ModelSpec& model, const ParamStore& store, const PathTape& tape, const Tensor& grad_logits) {
    const auto& st = tape.state();
    const bool vec = model.opset.vector_mode();
    const int B = st.path.size();
    GradMap grads;

    Tensor g_pooled(st.pooled.shape());
    {
        auto [gw, gb] = grad_slots(grads, store, head_key(model));
        dense_backward(st.pooled, lookup(store, head_key(model), ParamRole::Weight), grad_logits, &g_pooled, *gw, *gb);
    }
    std::vector<Tensor> g_outs(static_cast<std::size_t>(B) + 1);
    g_outs[B] = vec ? g_pooled : global_avg_pool_backward(g_pooled, st.outs[B].shape());

    for (int i = B - 1; i >= 0; --i) {
        const BlockTape& bt = st.blocks[i];
        if (g_outs[i + 1].size() == 0) g_outs[i + 1] = Tensor(st.outs[i + 1].shape());
        Tensor g_concat(bt.concat.shape());
        {
            const auto key = frame_key(i, kOutputNode);
            auto [gw, gb] = grad_slots(grads, store, key);
            linear_backward(vec, bt.concat, lookup(store, key, ParamRole::Weight), g_outs[i + 1], 1, &g_concat, *gw, *gb);
        }
        std::array<Tensor, kOutputNode> g_nodes;
        auto hidden = split_channels(g_concat, kHiddenNodes);
        for (int k = 0; k < kHiddenNodes; ++k) g_nodes[kFirstHiddenNode + k] = std::move(hidden[k]);
        g_nodes[0] = Tensor(bt.nodes[0].shape());
        g_nodes[1] = Tensor(bt.nodes[1].shape());

        // Edges were recorded in increasing destination order; walking them
        // backwards finishes every node's gradient before it is consumed.
        for (auto it = bt.edges.rbegin(); it != bt.edges.rend(); ++it) {
            const Edge& e = it->edge;
            const Tensor* w = nullptr;
            if (is_parametric(it->cache.kind)) w = &lookup(store, edge_key(i, e), ParamRole::Weight);
            OpGrads og = op_backward(it->cache, g_nodes[e.dest], w);
            add_inplace(g_nodes[e.src], og.input);
            if (w) {
                auto [gw, gb] = grad_slots(grads, store, edge_key(i, e));
                add_inplace(*gw, og.weight);
                add_inplace(*gb, og.bias);
            }
        }
        for (int s = 0; s < 2; ++s) {
            const int idx = bt.input_index[s];
            if (g_outs[idx].size() == 0) g_outs[idx] = Tensor(st.outs[idx].shape());
            const auto key = frame_key(i, s);
            auto [gw, gb] = grad_slots(grads, store, key);
            linear_backward(vec, st.outs[idx], lookup(store, key, ParamRole::Weight), g_nodes[s],
                            preprocessor_stride(model.shape, model.skeleton, model.opset, i, s), &g_outs[idx], *gw, *gb);
        }
    }
    {
        auto [gw, gb] = grad_slots(grads, store, stem_key());
        linear_backward(vec, st.x, lookup(store, stem_key(), ParamRole::Weight), g_outs[0], 1, nullptr, *gw, *gb);
    }
    for (const auto& [key, g] : grads) ensure_finite(g, "gradient " + key.str());
    return grads;
}

double train_step(const ModelSpec& model, ParamStore& store, const NetworkGenome& path, const Tensor& x,
                  std::span<const int> labels, TrainSchedule& schedule) {
    PathTape tape;
    const Tensor logits = forward_path(model, store, path, x, &tape);
    const LossResult loss = softmax_cross_entropy(logits, labels);
    GradMap grads = backward_path(model, store, tape, loss.grad_logits);
    clip_grad_norm(grads, schedule.grad_clip);
    const double lr = cosine_lr(schedule.step, schedule.total_steps, schedule.lr_max);
    sgd_step(store, grads, lr, schedule.momentum, schedule.weight_decay);
    ++schedule.step;
    return loss.loss;
}

double evaluate_store(const ModelSpec& model, const ParamStore& store, const NetworkGenome& path, const Dataset& data,
                      int n_batches, int batch_size) {
    validate(data);
    const auto batches = make_batches(data.size(), batch_size, nullptr);
    const std::size_t used =
        n_batches <= 0 ? batches.size() : std::min(batches.size(), static_cast<std::size_t>(n_batches));
    int correct = 0, seen = 0;
    for (std::size_t k = 0; k < used; ++k) {
        const Tensor logits = forward_path(model, store, path, data.gather(batches[k]), nullptr);
        correct += count_correct(logits, data.gather_labels(batches[k]));
        seen += static_cast<int>(batches[k].size());
    }
    return static_cast<double>(correct) / seen;
}

ParamStore init_path_store(const ModelSpec& model, const NetworkGenome& path, std::uint64_t seed) {
    ParamStore store;
    for (const auto& spec : path_param_specs(path, model.opset, model.shape)) {
        Tensor value = init_param(spec.key, spec.shape, spec.fan_in, spec.fan_out, seed);
        Tensor velocity(value.shape());
        store.emplace(spec.key, Param{std::move(value), std::move(velocity)});
    }
    return store;
}

std::uint64_t SuperNet::digest() const {
    Hasher h;
    h.u64(store_digest(store));
    for (const auto& slot : prune) {
        h.u8(slot ? 1 : 0);
        if (!slot) continue;
        h.u64(slot->size());
        for (const auto& g : *slot)
            for (const auto& row : g.matrix) h.bytes(row);
    }
    return h.digest();
}

SuperNet init_supernet(const SkeletonSpec& skeleton, const OpSet& opset, const NetShape& shape, std::uint64_t seed) {
    validate_shape(shape, skeleton, opset);
    SuperNet s;
    s.model = {skeleton, opset, shape};
    s.seed = seed;
    s.prune.assign(static_cast<std::size_t>(skeleton.blocks()), std::nullopt);
    for (const auto& spec : supernet_param_specs(skeleton, opset, shape)) {
        Tensor value = init_param(spec.key, spec.shape, spec.fan_in, spec.fan_out, seed);
        Tensor velocity(value.shape());
        s.store.emplace(spec.key, Param{std::move(value), std::move(velocity)});
    }
    return s;
}

NetworkGenome sample_path(const SuperNet& s, const Population* pop, int stage, Rng& rng) {
    NetworkGenome partial{.blocks = {}, .skeleton = s.skeleton()};
    if (pop) {
        if (pop->empty()) throw ValidationError("sample_path: empty population");
        const auto& pick = (*pop)[uniform_index(rng, pop->size())].genome;
        if (pick.size() < stage) throw ValidationError("sample_path: population genome shorter than stage");
        partial.blocks.assign(pick.blocks.begin(), pick.blocks.begin() + stage);
    }
    return complete_network(partial, s.model.opset, rng, &s.prune);
}

void check_path_allowed(const SuperNet& s, const NetworkGenome& path) {
    if (!path.complete()) throw ValidationError("path must have all " + std::to_string(s.skeleton().blocks()) + " blocks");
    validate(path, s.model.opset.size());
    for (int pos = 0; pos < path.size(); ++pos) {
        const auto& slot = s.prune[pos];
        if (slot && !std::binary_search(slot->begin(), slot->end(), path.blocks[pos])) {
            throw ValidationError("block " + std::to_string(pos) + " of the path was pruned from the supernet");
        }
    }
}

TrainReport train_supernet(SuperNet& s, const Dataset& data, int epochs, const Population* pop, int stage,
                           TrainSchedule& schedule, Rng& rng) {
    if (epochs < 1) throw ValidationError("train_supernet: epochs must be >= 1");
    if (data.size() == 0) throw ValidationError("train_supernet: empty dataset");
    TrainReport report;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double total = 0.0;
        const auto batches = make_batches(data.size(), schedule.batch_size, &rng);
        for (const auto& batch : batches) {
            const NetworkGenome path = sample_path(s, pop, stage, rng);
            total += train_step(s.model, s.store, path, data.gather(batch), data.gather_labels(batch), schedule);
            ++report.steps;
        }
        report.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    }
    return report;
}

double evaluate_path(const SuperNet& s, const NetworkGenome& path, const Dataset& val, int n_batches, int batch_size) {
    check_path_allowed(s, path);
    return evaluate_store(s.model, s.store, path, val, n_batches, batch_size);
}

PruneReport prune(SuperNet& s, const Population& pop, std::int64_t p_num) {
    if (pop.empty()) throw ValidationError("prune: empty population");
    const int b = pop.front().genome.size();
    for (const auto& ind : pop)
        if (ind.genome.size() != b) throw ValidationError("prune: population genomes differ in length");
    if (b < 1 || b > s.skeleton().blocks()) throw ValidationError("prune: invalid genome length");

    PruneReport report;
    report.pruned_blocks = b;
    for (int pos = 0; pos < b; ++pos) {
        std::set<BlockGenome> allowed;
        for (const auto& ind : pop) allowed.insert(ind.genome.blocks[pos]);
        s.prune[pos] = std::vector<BlockGenome>(allowed.begin(), allowed.end());
        report.restricted_sizes.push_back(allowed.size());

        std::set<ParamKey> reachable;
        for (const auto& g : allowed)
            for (const auto& e : edges(g)) reachable.insert(edge_key(pos, e));
        for (auto it = s.store.begin(); it != s.store.end();) {
            const ParamKey& k = it->first;
            ParamKey weight_key = k;
            weight_key.role = ParamRole::Weight;
            if (k.block == pos && k.src != kNoSource && !reachable.contains(weight_key)) {
                it = s.store.erase(it);
                ++report.dropped_params;
            } else {
                ++it;
            }
        }
    }
    report.stats = space_stats(s.skeleton(), s.model.opset, &s.prune);
    report.nominal = reduction_ratio(space_stats(s.skeleton(), s.model.opset), p_num, b);
    return report;
}

namespace {

constexpr char kMagic[4] = {'G', 'E', 'V', 'O'};

}  // namespace

void write_supernet(std::ostream& out, const SuperNet& s) {
    BinaryWriter w(out);
    w.raw(kMagic, 4);
    w.u32(kSupernetFormatVersion);
    w.u32(static_cast<std::uint32_t>(s.skeleton().blocks()));
    w.str(s.model.opset.name());
    w.u32(static_cast<std::uint32_t>(s.model.opset.size()));
    w.u32(static_cast<std::uint32_t>(s.model.shape.input.size()));
    for (int d : s.model.shape.input) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(s.model.shape.width));
    w.u32(static_cast<std::uint32_t>(s.model.shape.classes));
    w.u64(s.seed);
    for (const auto& slot : s.prune) {
        w.u8(slot ? 1 : 0);
        if (!slot) continue;
        w.u32(static_cast<std::uint32_t>(slot->size()));
        for (const auto& g : *slot)
            for (const auto& row : g.matrix) w.raw(row.data(), row.size());
    }
    w.u64(s.store.size());
    for (const auto& [key, p] : s.store) {
        w.i16(key.block);
        w.i8(key.dest);
        w.i8(key.src);
        w.u8(key.op);
        w.u8(static_cast<std::uint8_t>(key.role));
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (int d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : p.value.values()) w.f32(v);
        for (float v : p.velocity.values()) w.f32(v);
    }
}

SuperNet read_supernet(std::istream& in) {
    BinaryReader r(in);
    char magic[4];
    r.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic)) throw CheckpointError("not a supernet checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kSupernetFormatVersion) {
        throw CheckpointError("supernet checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kSupernetFormatVersion) + ")");
    }
    const int blocks = static_cast<int>(r.u32());
    if (blocks < 1 || blocks > 1024) throw CheckpointError("implausible block count in checkpoint");
    const std::string opset_name = r.str(64);
    const int op_count = static_cast<int>(r.u32());
    NetShape shape;
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 3) throw CheckpointError("bad input rank in checkpoint");
    shape.input.resize(rank);
    for (auto& d : shape.input) d = static_cast<int>(r.u32());
    shape.width = static_cast<int>(r.u32());
    shape.classes = static_cast<int>(r.u32());

    SuperNet s;
    try {
        s.model = {SkeletonSpec(blocks), OpSet::by_name(opset_name, op_count), shape};
        validate_shape(shape, s.model.skeleton, s.model.opset);
    } catch (const Error& e) {
        throw CheckpointError(std::string("checkpoint header invalid: ") + e.what());
    }
    s.seed = r.u64();
    s.prune.assign(static_cast<std::size_t>(blocks), std::nullopt);
    for (int pos = 0; pos < blocks; ++pos) {
        if (r.u8() == 0) continue;
        const std::uint32_t count = r.u32();
        if (count == 0 || count > (1u << 20)) throw CheckpointError("bad restricted set size in checkpoint");
        std::vector<BlockGenome> allowed(count);
        for (auto& g : allowed) {
            for (auto& row : g.matrix) r.raw(row.data(), row.size());
            if (auto v = find_violation(g, op_count)) throw CheckpointError("invalid block genome in checkpoint: " + *v);
        }
        s.prune[pos] = std::move(allowed);
    }
    const std::uint64_t records = r.u64();
    if (records > (1u << 24)) throw CheckpointError("implausible parameter count in checkpoint");
    for (std::uint64_t k = 0; k < records; ++k) {
        ParamKey key;
        key.block = r.i16();
        key.dest = r.i8();
        key.src = r.i8();
        key.op = r.u8();
        const std::uint8_t role = r.u8();
        if (role > 1) throw CheckpointError("bad parameter role in checkpoint");
        key.role = static_cast<ParamRole>(role);
        const std::uint32_t prank = r.u32();
        if (prank < 1 || prank > 4) throw CheckpointError("bad parameter rank in checkpoint");
        std::vector<int> pshape(prank);
        std::size_t numel = 1;
        for (auto& d : pshape) {
            d = static_cast<int>(r.u32());
            if (d < 1 || d > (1 << 16)) throw CheckpointError("bad parameter dimension in checkpoint");
            numel *= static_cast<std::size_t>(d);
        }
        if (numel > (1u << 26)) throw CheckpointError("parameter too large in checkpoint");
        std::vector<float> value(numel), velocity(numel);
        for (auto& v : value) v = r.f32();
        for (auto& v : velocity) v = r.f32();
        if (!s.store.emplace(key, Param{Tensor(pshape, std::move(value)), Tensor(pshape, std::move(velocity))}).second) {
            throw CheckpointError("duplicate parameter key " + key.str() + " in checkpoint");
        }
    }
    return s;
}

void save_supernet(const std::string& path, const SuperNet& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path);
    write_supernet(out, s);
    if (!out) throw CheckpointError("write failed for " + path);
}

SuperNet load_supernet(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path);
    return read_supernet(in);
}

}  // namespace gevo
