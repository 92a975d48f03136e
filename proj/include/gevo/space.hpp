#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "gevo/genome.hpp"
#include "gevo/numkernel.hpp"
#include "gevo/rng.hpp"

namespace gevo {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

struct OpDescriptor {
    OpCode code;
    std::string name;
    OpKind kind;
};

// Ordered candidate operations; codes are 1..K.
class OpSet {
public:
    // "conv5": zero, identity, conv3x3+relu, conv1x1+relu, avgpool3x3.
    // "vec4":  zero, identity, dense+relu, dense+tanh.
    // `limit` > 0 keeps only the first `limit` ops.
    static OpSet by_name(const std::string& name, int limit = 0);

    const std::string& name() const { return name_; }
    int size() const { return static_cast<int>(ops_.size()); }
    const OpDescriptor& at(OpCode code) const;
    const std::vector<OpDescriptor>& ops() const { return ops_; }
    std::vector<std::string> names() const;
    bool vector_mode() const { return vector_mode_; }

private:
    std::string name_;
    std::vector<OpDescriptor> ops_;
    bool vector_mode_ = false;
};

// Input and width sizing of the realized network.
struct NetShape {
    std::vector<int> input{3, 8, 8};  // (C, H, W) in conv mode, (D) in vector mode
    int width = 8;
    int classes = 4;
};

void validate_shape(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset);

// Per block position: nullopt = free, otherwise the allowed block genomes.
using PruneState = std::vector<std::optional<std::vector<BlockGenome>>>;

BlockGenome random_block(const OpSet& opset, Rng& rng);
NetworkGenome random_network(const SkeletonSpec& skeleton, const OpSet& opset, Rng& rng);

// Keeps the first partial.size() blocks and fills the remaining positions,
// drawing restricted positions uniformly from their allowed set.
NetworkGenome complete_network(const NetworkGenome& partial, const OpSet& opset, Rng& rng,
                               const PruneState* prune = nullptr);

// Valid 7-node blocks over K ops: 180 * K^8.
BigInt count_block_genomes(int op_count);

struct SpaceStats {
    std::vector<BigInt> per_block_count;  // C_i
    std::vector<BigInt> allowed_count;    // |restricted set| or C_i when free
    BigInt total;
    BigInt pruned_total;
    Rational reduction_ratio;  // pruned_total / total

    static SpaceStats from_counts(std::vector<BigInt> per_block, std::vector<BigInt> allowed = {});
};

SpaceStats space_stats(const SkeletonSpec& skeleton, const OpSet& opset, const PruneState* prune = nullptr);

struct ReductionRatio {
    Rational ratio;
    bool clamped = false;  // some P_num exceeded its block's C_j
};

// Remaining fraction of the weight-sharing space once the first `pruned`
// blocks are restricted to P_num candidates each:
//   P_num^pruned * prod_{j > pruned} C_j / prod_j C_j
ReductionRatio reduction_ratio(const SpaceStats& stats, std::int64_t p_num, int pruned);

// One parameter tensor of the realized network.
struct ParamSpec {
    ParamKey key;
    std::vector<int> shape;
    int fan_in = 1;
    int fan_out = 1;
};

// Geometry of a block position: output width and spatial side.
struct BlockGeometry {
    int width = 0;
    int side = 1;  // 1 in vector mode
};

BlockGeometry block_geometry(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset, int position);

// Stride applied by the input preprocessor of `source` (0 or 1) at a block.
int preprocessor_stride(const NetShape& shape, const SkeletonSpec& skeleton, const OpSet& opset, int position,
                        int source);

// Parameters touched by a complete path through the network.
std::vector<ParamSpec> path_param_specs(const NetworkGenome& n, const OpSet& opset, const NetShape& shape);
// Every parameter of the unpruned weight-sharing space.
std::vector<ParamSpec> supernet_param_specs(const SkeletonSpec& skeleton, const OpSet& opset, const NetShape& shape);

// Exact parameter count of a complete network.
std::int64_t param_count(const NetworkGenome& n, const OpSet& opset, const NetShape& shape);

}  // namespace gevo
