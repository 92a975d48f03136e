#include "gevo/space.hpp"

#include "gevo/error.hpp"

namespace gevo {

OpSet OpSet::by_name(const std::string& name, int limit) {
    OpSet s;
    s.name_ = name;
    std::vector<std::pair<std::string, OpKind>> table;
    if (name == "conv5") {
        table = {{"zero", OpKind::Zero},
                 {"identity", OpKind::Identity},
                 {"conv3x3", OpKind::Conv3x3Relu},
                 {"conv1x1", OpKind::Conv1x1Relu},
                 {"avgpool3x3", OpKind::AvgPool3x3}};
    } else if (name == "vec4") {
        table = {{"zero", OpKind::Zero},
                 {"identity", OpKind::Identity},
                 {"dense_relu", OpKind::DenseRelu},
                 {"dense_tanh", OpKind::DenseTanh}};
        s.vector_mode_ = true;
    } else {
        throw ConfigError("unknown op set '" + name + "' (expected conv5 or vec4)");
    }
    if (limit < 0 || limit > static_cast<int>(table.size())) {
        throw ConfigError("op limit " + std::to_string(limit) + " out of range for op set " + name);
    }
    if (limit > 0) table.resize(static_cast<std::size_t>(limit));
    for (std::size_t i = 0; i < table.size(); ++i)
        s.ops_.push_back({static_cast<OpCode>(i + 1), table[i].first, table[i].second});
    return s;
}

const OpDescriptor& OpSet::at(OpCode code) const {
    if (code < 1 || code > ops_.size()) {
        throw ValidationError("op code " + std::to_string(code) + " not in op set " + name_);
    }
    return ops_[code - 1];
}

std::vector<std::string> OpSet::names() const {
    std::vector<std::string> out;
    for (const auto& op : ops_) out.push_back(op.name);
    return out;
}

void validate_shape(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset) {
    if (shape.width < 1 || shape.classes < 2) throw ConfigError("network width must be >= 1 and classes >= 2");
    if (opset.vector_mode()) {
        if (shape.input.size() != 1 || shape.input[0] < 1) throw ConfigError("vector op set needs a 1-D input shape");
        return;
    }
    if (shape.input.size() != 3) throw ConfigError("conv op set needs a (C,H,W) input shape");
    const int c = shape.input[0], h = shape.input[1], w = shape.input[2];
    if (c < 1 || h < 1 || h != w) throw ConfigError("conv input must have C >= 1 and square H == W");
    const int factor = 1 << skeleton.reductions_through(skeleton.blocks() - 1);
    if (h % factor != 0) {
        throw ConfigError("input side " + std::to_string(h) + " is not divisible by the reduction factor " +
                          std::to_string(factor));
    }
}

namespace {

// C(i,2) source pairs of hidden node i, in lexicographic order.
std::pair<int, int> source_pair(int node, std::uint64_t index) {
    for (int a = 0; a < node; ++a) {
        for (int b = a + 1; b < node; ++b) {
            if (index == 0) return {a, b};
            --index;
        }
    }
    throw ValidationError("source pair index out of range");
}

}  // namespace

BlockGenome random_block(const OpSet& opset, Rng& rng) {
    if (opset.size() < 1) throw ValidationError("random_block: empty op set");
    BlockGenome g;
    for (int node = kFirstHiddenNode; node < kOutputNode; ++node) {
        const auto pairs = static_cast<std::uint64_t>(node * (node - 1) / 2);
        const auto [a, b] = source_pair(node, uniform_index(rng, pairs));
        g.at(node, a) = static_cast<OpCode>(1 + uniform_index(rng, static_cast<std::uint64_t>(opset.size())));
        g.at(node, b) = static_cast<OpCode>(1 + uniform_index(rng, static_cast<std::uint64_t>(opset.size())));
    }
    return g;
}

NetworkGenome random_network(const SkeletonSpec& skeleton, const OpSet& opset, Rng& rng) {
    return complete_network(NetworkGenome{.blocks = {}, .skeleton = skeleton}, opset, rng);
}

NetworkGenome complete_network(const NetworkGenome& partial, const OpSet& opset, Rng& rng, const PruneState* prune) {
    if (partial.size() > partial.skeleton.blocks()) throw ValidationError("complete_network: partial exceeds skeleton");
    NetworkGenome full = partial;
    for (int pos = partial.size(); pos < partial.skeleton.blocks(); ++pos) {
        const std::optional<std::vector<BlockGenome>>* allowed = nullptr;
        if (prune && static_cast<std::size_t>(pos) < prune->size() && (*prune)[pos]) allowed = &(*prune)[pos];
        if (allowed) {
            const auto& set = **allowed;
            if (set.empty()) throw ValidationError("restricted block " + std::to_string(pos) + " has no allowed genomes");
            full.blocks.push_back(set[uniform_index(rng, set.size())]);
        } else {
            full.blocks.push_back(random_block(opset, rng));
        }
    }
    return full;
}

BigInt count_block_genomes(int op_count) {
    if (op_count < 1) throw ValidationError("count_block_genomes: op set must be nonempty");
    BigInt topologies = 1;
    for (int node = kFirstHiddenNode; node < kOutputNode; ++node) topologies *= node * (node - 1) / 2;
    BigInt ops = boost::multiprecision::pow(BigInt(op_count), kEdgesPerBlock);
    return topologies * ops;
}

SpaceStats SpaceStats::from_counts(std::vector<BigInt> per_block, std::vector<BigInt> allowed) {
    if (allowed.empty()) allowed = per_block;
    if (allowed.size() != per_block.size()) throw ValidationError("space stats: count vectors differ in length");
    SpaceStats s;
    s.total = 1;
    s.pruned_total = 1;
    for (std::size_t i = 0; i < per_block.size(); ++i) {
        if (per_block[i] < 1 || allowed[i] < 1 || allowed[i] > per_block[i]) {
            throw ValidationError("space stats: invalid count at block " + std::to_string(i));
        }
        s.total *= per_block[i];
        s.pruned_total *= allowed[i];
    }
    s.per_block_count = std::move(per_block);
    s.allowed_count = std::move(allowed);
    s.reduction_ratio = Rational(s.pruned_total, s.total);
    return s;
}

SpaceStats space_stats(const SkeletonSpec& skeleton, const OpSet& opset, const PruneState* prune) {
    const BigInt c = count_block_genomes(opset.size());
    std::vector<BigInt> per_block(static_cast<std::size_t>(skeleton.blocks()), c);
    std::vector<BigInt> allowed = per_block;
    if (prune) {
        for (std::size_t i = 0; i < prune->size() && i < allowed.size(); ++i)
            if ((*prune)[i]) allowed[i] = (*prune)[i]->size();
    }
    return SpaceStats::from_counts(std::move(per_block), std::move(allowed));
}

ReductionRatio reduction_ratio(const SpaceStats& stats, std::int64_t p_num, int pruned) {
    const int blocks = static_cast<int>(stats.per_block_count.size());
    if (p_num < 1) throw ValidationError("reduction_ratio: P_num must be >= 1");
    if (pruned < 1 || pruned > blocks) {
        throw ValidationError("reduction_ratio: pruned block count " + std::to_string(pruned) + " outside [1, " +
                              std::to_string(blocks) + "]");
    }
    ReductionRatio r;
    BigInt numerator = 1;
    for (int j = 0; j < blocks; ++j) {
        const BigInt& c = stats.per_block_count[j];
        if (j < pruned) {
            if (BigInt(p_num) > c) {
                numerator *= c;
                r.clamped = true;
            } else {
                numerator *= p_num;
            }
        } else {
            numerator *= c;
        }
    }
    r.ratio = Rational(numerator, stats.total);
    return r;
}

namespace {

BlockGeometry stem_geometry(const NetShape& shape, const OpSet& opset) {
    return {shape.width, opset.vector_mode() ? 1 : shape.input[1]};
}

BlockGeometry source_geometry(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset, int position,
                              int source) {
    const int from = position - 2 + source;
    return from < 0 ? stem_geometry(shape, opset) : block_geometry(shape, skeleton, opset, from);
}

ParamSpec weight_spec(ParamKey key, int out, int in, int kernel, bool vector_mode) {
    key.role = ParamRole::Weight;
    ParamSpec s{.key = key, .shape = {}, .fan_in = in * kernel * kernel, .fan_out = out * kernel * kernel};
    if (vector_mode) {
        s.shape = {out, in};
    } else {
        s.shape = {out, in, kernel, kernel};
    }
    return s;
}

void push_layer(std::vector<ParamSpec>& out, ParamKey key, int width_out, int width_in, int kernel, bool vector_mode) {
    out.push_back(weight_spec(key, width_out, width_in, kernel, vector_mode));
    key.role = ParamRole::Bias;
    out.push_back({.key = key, .shape = {width_out}, .fan_in = width_in, .fan_out = width_out});
}

int kernel_of(OpKind kind) { return kind == OpKind::Conv3x3Relu ? 3 : 1; }

void push_block_frame(std::vector<ParamSpec>& out, const NetShape& shape, const SkeletonSpec& skeleton,
                      const OpSet& opset, int pos) {
    const bool vec = opset.vector_mode();
    const auto geo = block_geometry(shape, skeleton, opset, pos);
    const auto b = static_cast<std::int16_t>(pos);
    for (int source = 0; source < 2; ++source) {
        const auto in = source_geometry(shape, skeleton, opset, pos, source);
        push_layer(out, {b, static_cast<std::int8_t>(source), kNoSource, 0, ParamRole::Weight}, geo.width, in.width, 1,
                   vec);
    }
    push_layer(out, {b, kOutputNode, kNoSource, 0, ParamRole::Weight}, geo.width, kHiddenNodes * geo.width, 1, vec);
}

void push_edge(std::vector<ParamSpec>& out, const OpSet& opset, int width, int pos, int dest, int src, OpCode op) {
    const OpKind kind = opset.at(op).kind;
    if (!is_parametric(kind)) return;
    push_layer(out,
               {static_cast<std::int16_t>(pos), static_cast<std::int8_t>(dest), static_cast<std::int8_t>(src), op,
                ParamRole::Weight},
               width, width, kernel_of(kind), opset.vector_mode());
}

void push_stem_and_head(std::vector<ParamSpec>& out, const NetShape& shape, const SkeletonSpec& skeleton,
                        const OpSet& opset, bool head) {
    const bool vec = opset.vector_mode();
    if (!head) {
        push_layer(out, {kStemBlock, 0, kNoSource, 0, ParamRole::Weight}, shape.width, shape.input[0], vec ? 1 : 3, vec);
        return;
    }
    const auto last = block_geometry(shape, skeleton, opset, skeleton.blocks() - 1);
    // The classifier is dense in both modes (after global pooling in conv mode).
    push_layer(out, {static_cast<std::int16_t>(skeleton.blocks()), 0, kNoSource, 0, ParamRole::Weight}, shape.classes,
               last.width, 1, true);
}

}  // namespace

BlockGeometry block_geometry(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset, int position) {
    if (opset.vector_mode()) return {shape.width, 1};
    const int r = skeleton.reductions_through(position);
    return {shape.width << r, shape.input[1] >> r};
}

int preprocessor_stride(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset, int position,
                        int source) {
    if (opset.vector_mode()) return 1;
    return source_geometry(shape, skeleton, opset, position, source).side /
           block_geometry(shape, skeleton, opset, position).side;
}

std::vector<ParamSpec> path_param_specs(const NetworkGenome& n, const OpSet& opset, const NetShape& shape) {
    if (!n.complete()) throw ValidationError("parameter layout needs a complete network");
    std::vector<ParamSpec> out;
    push_stem_and_head(out, shape, n.skeleton, opset, false);
    for (int pos = 0; pos < n.size(); ++pos) {
        push_block_frame(out, shape, n.skeleton, opset, pos);
        const int width = block_geometry(shape, n.skeleton, opset, pos).width;
        for (const auto& e : edges(n.blocks[pos])) push_edge(out, opset, width, pos, e.dest, e.src, e.op);
    }
    push_stem_and_head(out, shape, n.skeleton, opset, true);
    return out;
}

std::vector<ParamSpec> supernet_param_specs(const SkeletonSpec& skeleton, const OpSet& opset, const NetShape& shape) {
    std::vector<ParamSpec> out;
    push_stem_and_head(out, shape, skeleton, opset, false);
    for (int pos = 0; pos < skeleton.blocks(); ++pos) {
        push_block_frame(out, shape, skeleton, opset, pos);
        const int width = block_geometry(shape, skeleton, opset, pos).width;
        for (int dest = kFirstHiddenNode; dest < kOutputNode; ++dest)
            for (int src = 0; src < dest; ++src)
                for (const auto& op : opset.ops()) push_edge(out, opset, width, pos, dest, src, op.code);
    }
    push_stem_and_head(out, shape, skeleton, opset, true);
    return out;
}

std::int64_t param_count(const NetworkGenome& n, const OpSet& opset, const NetShape& shape) {
    std::int64_t total = 0;
    for (const auto& spec : path_param_specs(n, opset, shape)) total += static_cast<std::int64_t>(shape_numel(spec.shape));
    return total;
}

}  // namespace gevo
