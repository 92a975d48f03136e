#include "gevo/genome.hpp"

#include <sstream>

#include "gevo/error.hpp"
#include "gevo/hash.hpp"

namespace gevo {

std::vector<Edge> edges(const BlockGenome& g) {
    std::vector<Edge> out;
    out.reserve(kEdgesPerBlock);
    for (int dest = kFirstHiddenNode; dest < kOutputNode; ++dest) {
        for (int src = 0; src < dest; ++src) {
            if (g.at(dest, src) != 0) out.push_back({dest, src, g.at(dest, src)});
        }
    }
    return out;
}

std::optional<std::string> find_violation(const BlockGenome& g, int op_count) {
    auto cell = [](int r, int c) {
        return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
    };
    for (int r = 0; r < kNodesPerBlock; ++r) {
        int nonzero = 0;
        for (int c = 0; c < kNodesPerBlock; ++c) {
            const int v = g.at(r, c);
            if (v == 0) continue;
            if (c >= r) return "entry " + cell(r, c) + " is on or above the diagonal";
            if (r < kFirstHiddenNode) return "source node row " + std::to_string(r) + " has an incoming edge";
            if (r == kOutputNode) return "output node row has an explicit edge at " + cell(r, c);
            if (v > op_count) {
                return "op code " + std::to_string(v) + " at " + cell(r, c) + " exceeds op count " +
                       std::to_string(op_count);
            }
            ++nonzero;
        }
        if (r >= kFirstHiddenNode && r < kOutputNode && nonzero != 2) {
            return "hidden node " + std::to_string(r) + " has " + std::to_string(nonzero) +
                   " incoming edges, expected 2";
        }
    }
    return std::nullopt;
}

void validate(const BlockGenome& g, int op_count) {
    if (auto v = find_violation(g, op_count)) throw ValidationError("invalid block genome: " + *v);
}

std::vector<int> encode(const BlockGenome& g, int op_count) {
    validate(g, op_count);
    std::vector<int> out(kGenesPerBlock);
    for (int r = 0; r < kNodesPerBlock; ++r)
        for (int c = 0; c < kNodesPerBlock; ++c) out[kNodesPerBlock * r + c] = g.at(r, c);
    return out;
}

BlockGenome decode(std::span<const int> genes, int op_count) {
    if (genes.size() != kGenesPerBlock) {
        throw ValidationError("block encoding has length " + std::to_string(genes.size()) + ", expected " +
                              std::to_string(kGenesPerBlock));
    }
    BlockGenome g;
    for (int i = 0; i < kGenesPerBlock; ++i) {
        const int v = genes[i];
        if (v < 0 || v > 255) throw ValidationError("gene " + std::to_string(i) + " out of range: " + std::to_string(v));
        g.at(i / kNodesPerBlock, i % kNodesPerBlock) = static_cast<OpCode>(v);
    }
    validate(g, op_count);
    return g;
}

SkeletonSpec::SkeletonSpec(int blocks) : blocks_(blocks) {
    if (blocks < 1) throw ValidationError("skeleton needs at least one block");
    const int first = blocks / 3;
    const int second = 2 * blocks / 3;
    reductions_.push_back(first);
    if (second != first) reductions_.push_back(second);
}

bool SkeletonSpec::is_reduction(int position) const {
    for (int r : reductions_)
        if (r == position) return true;
    return false;
}

int SkeletonSpec::reductions_through(int position) const {
    int n = 0;
    for (int r : reductions_)
        if (r <= position) ++n;
    return n;
}

void validate(const NetworkGenome& n, int op_count) {
    if (n.blocks.size() > static_cast<std::size_t>(n.skeleton.blocks())) {
        throw ValidationError("network has " + std::to_string(n.blocks.size()) + " blocks, skeleton allows " +
                              std::to_string(n.skeleton.blocks()));
    }
    for (std::size_t i = 0; i < n.blocks.size(); ++i) {
        if (auto v = find_violation(n.blocks[i], op_count))
            throw ValidationError("block " + std::to_string(i) + ": " + *v);
    }
}

std::uint64_t prefix_hash(const NetworkGenome& n, int prefix) {
    Hasher h;
    h.u32(static_cast<std::uint32_t>(n.skeleton.blocks())).u32(static_cast<std::uint32_t>(prefix));
    for (int i = 0; i < prefix; ++i) {
        for (const auto& row : n.blocks[i].matrix) h.bytes(row);
    }
    return h.digest();
}

std::uint64_t canonical_hash(const NetworkGenome& n) { return prefix_hash(n, n.size()); }

std::string export_dot(const NetworkGenome& n, std::span<const std::string> op_names) {
    auto op_label = [&](OpCode op) {
        if (op >= 1 && static_cast<std::size_t>(op) <= op_names.size()) return op_names[op - 1];
        return "op" + std::to_string(op);
    };
    auto node = [](int block, int id) { return "b" + std::to_string(block) + "_n" + std::to_string(id); };

    std::ostringstream out;
    out << "digraph network {\n  rankdir=LR;\n";
    for (int b = 0; b < n.size(); ++b) {
        const bool reduction = n.skeleton.is_reduction(b);
        out << "  subgraph cluster_" << b << " {\n";
        out << "    label=\"block " << b << (reduction ? " (reduction)" : " (normal)") << "\";\n";
        for (int id = 0; id < kNodesPerBlock; ++id) {
            const char* shape = id < kFirstHiddenNode ? "box" : (id == kOutputNode ? "doublecircle" : "circle");
            out << "    " << node(b, id) << " [label=\"" << id << "\", shape=" << shape << "];\n";
        }
        for (const auto& e : edges(n.blocks[b])) {
            out << "    " << node(b, e.src) << " -> " << node(b, e.dest) << " [label=\"" << op_label(e.op)
                << "\"];\n";
        }
        for (int id = kFirstHiddenNode; id < kOutputNode; ++id)
            out << "    " << node(b, id) << " -> " << node(b, kOutputNode) << " [style=dashed];\n";
        out << "  }\n";
    }
    // Each block reads the outputs of the two blocks before it.
    for (int b = 1; b < n.size(); ++b) {
        out << "  " << node(b - 1, kOutputNode) << " -> " << node(b, 1) << ";\n";
        if (b >= 2) out << "  " << node(b - 2, kOutputNode) << " -> " << node(b, 0) << ";\n";
    }
    out << "}\n";
    return out.str();
}

std::string write_genome_text(const NetworkGenome& n) {
    std::ostringstream out;
    for (const auto& block : n.blocks) {
        const auto genes = encode(block);
        for (std::size_t i = 0; i < genes.size(); ++i) out << (i ? " " : "") << genes[i];
        out << '\n';
    }
    return out.str();
}

NetworkGenome read_genome_text(const std::string& text, const SkeletonSpec& skeleton, int op_count) {
    NetworkGenome n{.blocks = {}, .skeleton = skeleton};
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        std::vector<int> genes;
        std::string tok;
        while (fields >> tok) {
            try {
                std::size_t used = 0;
                genes.push_back(std::stoi(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError("genome line " + std::to_string(line_no) + ": bad integer '" + tok + "'");
            }
        }
        try {
            n.blocks.push_back(decode(genes, op_count));
        } catch (const ValidationError& e) {
            throw ValidationError("genome line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate(n, op_count);
    return n;
}

}  // namespace gevo
