#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gevo {

using OpCode = std::uint8_t;

inline constexpr int kNodesPerBlock = 7;
inline constexpr int kFirstHiddenNode = 2;
inline constexpr int kOutputNode = kNodesPerBlock - 1;
inline constexpr int kHiddenNodes = kOutputNode - kFirstHiddenNode;
inline constexpr int kEdgesPerBlock = 2 * kHiddenNodes;
inline constexpr int kGenesPerBlock = kNodesPerBlock * kNodesPerBlock;
// Op-code ceiling used when a caller does not pin the op-set size.
inline constexpr int kAnyOpCount = 255;

// One block's DAG. matrix[dest][src] holds the op code on edge src -> dest,
// 0 meaning no edge. Nodes 0 and 1 are the block inputs, 2..5 hidden,
// 6 the output. The output node concatenates all hidden nodes implicitly,
// so its row stays empty.
struct BlockGenome {
    std::array<std::array<OpCode, kNodesPerBlock>, kNodesPerBlock> matrix{};

    OpCode at(int dest, int src) const { return matrix[dest][src]; }
    OpCode& at(int dest, int src) { return matrix[dest][src]; }

    friend bool operator==(const BlockGenome&, const BlockGenome&) = default;
    friend auto operator<=>(const BlockGenome&, const BlockGenome&) = default;
};

struct Edge {
    int dest;
    int src;
    OpCode op;
};

// The 8 realized edges, ordered by destination then source.
std::vector<Edge> edges(const BlockGenome& g);

// Returns the first violated invariant, or nullopt when the block is valid.
std::optional<std::string> find_violation(const BlockGenome& g, int op_count = kAnyOpCount);
void validate(const BlockGenome& g, int op_count = kAnyOpCount);

// Row-major flattening: out[7*dest + src] = matrix[dest][src].
std::vector<int> encode(const BlockGenome& g, int op_count = kAnyOpCount);
BlockGenome decode(std::span<const int> genes, int op_count = kAnyOpCount);

// Fixed outer skeleton: B blocks, reductions at floor(B/3) and floor(2B/3).
class SkeletonSpec {
public:
    SkeletonSpec() : SkeletonSpec(1) {}
    explicit SkeletonSpec(int blocks);

    int blocks() const { return blocks_; }
    int nodes_per_block() const { return kNodesPerBlock; }
    const std::vector<int>& reduction_positions() const { return reductions_; }
    bool is_reduction(int position) const;
    // Reductions at or before `position`.
    int reductions_through(int position) const;

    friend bool operator==(const SkeletonSpec&, const SkeletonSpec&) = default;

private:
    int blocks_;
    std::vector<int> reductions_;
};

struct NetworkGenome {
    std::vector<BlockGenome> blocks;
    SkeletonSpec skeleton;

    int size() const { return static_cast<int>(blocks.size()); }
    bool complete() const { return size() == skeleton.blocks(); }

    friend bool operator==(const NetworkGenome&, const NetworkGenome&) = default;
};

void validate(const NetworkGenome& n, int op_count = kAnyOpCount);

std::uint64_t canonical_hash(const NetworkGenome& n);
// Hash of the first `prefix` blocks only; used for locality checks.
std::uint64_t prefix_hash(const NetworkGenome& n, int prefix);

std::string export_dot(const NetworkGenome& n, std::span<const std::string> op_names = {});

// Line-oriented text: one block per line, 49 space-separated integers.
// Blank lines and lines starting with '#' are ignored on read.
std::string write_genome_text(const NetworkGenome& n);
NetworkGenome read_genome_text(const std::string& text, const SkeletonSpec& skeleton,
                               int op_count = kAnyOpCount);

}  // namespace gevo
