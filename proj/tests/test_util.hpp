#pragma once

// Helpers shared by the test suites. Nothing here calls into the code
// under test except to build inputs.

#include <cctype>
#include <cstddef>
#include <string>
#include <vector>

namespace testutil {

// Recursive-descent checker for the DOT language subset the exporter may
// emit: graph/subgraph bodies, node, edge and attribute statements, quoted
// or bare identifiers. Returns an empty string when `text` parses.
class DotChecker {
public:
    struct Counts {
        int nodes = 0;
        int edges = 0;
        int labeled_edges = 0;
        int clusters = 0;
    };

    explicit DotChecker(std::string text) : s_(std::move(text)) {}

    std::string check() {
        try {
            skip();
            expect_word("digraph");
            if (peek() != '{') id();
            block();
            skip();
            if (pos_ != s_.size()) fail("trailing text");
        } catch (const std::string& e) {
            return e;
        }
        return {};
    }

    const Counts& counts() const { return counts_; }

private:
    void fail(const std::string& why) { throw why + " at offset " + std::to_string(pos_); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    void expect_word(const std::string& w) {
        skip();
        if (s_.compare(pos_, w.size(), w) != 0) fail("expected " + w);
        pos_ += w.size();
    }

    std::string id() {
        skip();
        if (pos_ >= s_.size()) fail("expected identifier");
        if (s_[pos_] == '"') {
            const std::size_t start = ++pos_;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                if (s_[pos_] == '\\') ++pos_;
                ++pos_;
            }
            if (pos_ >= s_.size()) fail("unterminated string");
            return s_.substr(start, pos_++ - start);
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                    s_[pos_] == '.'))
            ++pos_;
        if (start == pos_) fail("expected identifier");
        return s_.substr(start, pos_ - start);
    }

    // Returns true if the list contained a label attribute.
    bool attr_list() {
        bool labeled = false;
        while (peek() == '[') {
            ++pos_;
            while (peek() != ']') {
                if (id() == "label") labeled = true;
                expect('=');
                id();
                if (peek() == ',' || peek() == ';') ++pos_;
            }
            ++pos_;
        }
        return labeled;
    }

    void block() {
        expect('{');
        while (peek() != '}') {
            if (peek() == '\0') fail("unterminated block");
            statement();
            if (peek() == ';') ++pos_;
        }
        ++pos_;
    }

    void statement() {
        skip();
        if (s_.compare(pos_, 8, "subgraph") == 0) {
            pos_ += 8;
            const std::string name = peek() != '{' ? id() : "";
            if (name.rfind("cluster", 0) == 0) ++counts_.clusters;
            block();
            return;
        }
        const std::string first = id();
        if (peek() == '=') {
            ++pos_;
            id();
            return;
        }
        if (first == "graph" || first == "node" || first == "edge") {
            attr_list();
            return;
        }
        skip();
        if (s_.compare(pos_, 2, "->") == 0) {
            while (s_.compare(pos_, 2, "->") == 0) {
                pos_ += 2;
                id();
                ++counts_.edges;
                skip();
            }
            if (attr_list()) ++counts_.labeled_edges;
            return;
        }
        ++counts_.nodes;
        attr_list();
    }

    std::string s_;
    std::size_t pos_ = 0;
    Counts counts_;
};

// Pearson chi-square statistic for observed counts against a uniform law.
inline double chi_square_uniform(const std::vector<long>& observed) {
    double total = 0;
    for (long o : observed) total += static_cast<double>(o);
    const double expected = total / static_cast<double>(observed.size());
    double stat = 0;
    for (long o : observed) stat += (o - expected) * (o - expected) / expected;
    return stat;
}

}  // namespace testutil
