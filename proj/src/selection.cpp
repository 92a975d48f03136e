#include "gevo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "gevo/error.hpp"

namespace gevo {

void validate(const PotentialEstimate& p) {
    if (!(p.exp_acc >= 0.0 && p.exp_acc <= 1.0)) throw ValidationError("exp_acc outside [0,1]");
    if (!(p.exp_size > 0.0)) throw ValidationError("exp_size must be positive");
    if (p.n_samples < 1) throw ValidationError("n_samples must be >= 1");
}

Individual Individual::of(NetworkGenome genome) {
    Individual ind;
    ind.id = canonical_hash(genome);
    ind.genome = std::move(genome);
    return ind;
}

const PotentialEstimate& Individual::fitness() const {
    if (!potential) throw ValidationError("individual " + id_hex(id) + " has not been evaluated");
    return *potential;
}

std::string id_hex(std::uint64_t id) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
    return buf;
}

bool dominates(const PotentialEstimate& a, const PotentialEstimate& b) {
    const bool no_worse = a.exp_acc >= b.exp_acc && a.exp_size <= b.exp_size;
    const bool better = a.exp_acc > b.exp_acc || a.exp_size < b.exp_size;
    return no_worse && better;
}

bool dominates(const Individual& a, const Individual& b) { return dominates(a.fitness(), b.fitness()); }

std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Individual> pop) {
    const std::size_t n = pop.size();
    for (const auto& ind : pop) (void)ind.fitness();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(*pop[i].potential, *pop[j].potential)) {
                dominated[i].push_back(j);
                ++count[j];
            } else if (dominates(*pop[j].potential, *pop[i].potential)) {
                dominated[j].push_back(i);
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (count[i] == 0) current.push_back(i);
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominated[i])
                if (--count[j] == 0) next.push_back(j);
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(std::span<const Individual> pop, std::span<const std::size_t> front) {
    const std::size_t m = front.size();
    std::vector<double> dist(m, 0.0);
    if (m <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    auto objective = [&](std::size_t k, int which) {
        const auto& p = *pop[front[k]].potential;
        return which == 0 ? -p.exp_acc : p.exp_size;
    };
    for (int which = 0; which < 2; ++which) {
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        // Ties on one objective are ordered by the other so the boundary
        // point is the nondominated one.
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = objective(a, which), vb = objective(b, which);
            if (va != vb) return va < vb;
            const double oa = objective(a, 1 - which), ob = objective(b, 1 - which);
            if (oa != ob) return oa < ob;
            return pop[front[a]].id < pop[front[b]].id;
        });
        const double lo = objective(order.front(), which), hi = objective(order.back(), which);
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        if (hi <= lo) continue;
        for (std::size_t k = 1; k + 1 < m; ++k) {
            dist[order[k]] += (objective(order[k + 1], which) - objective(order[k - 1], which)) / (hi - lo);
        }
    }
    return dist;
}

void assign_fronts(Population& pop) {
    const auto fronts = nondominated_sort(pop);
    for (std::size_t r = 0; r < fronts.size(); ++r)
        for (std::size_t i : fronts[r]) pop[i].front = static_cast<int>(r);
}

Population environmental_select(Population pop, std::size_t p_num, const SelectionOptions& options) {
    if (pop.size() <= p_num) {
        assign_fronts(pop);
        return pop;
    }
    const auto fronts = nondominated_sort(pop);
    std::vector<std::size_t> chosen;
    chosen.reserve(p_num);

    auto by_accuracy = [&](std::size_t a, std::size_t b) {
        const auto& pa = *pop[a].potential;
        const auto& pb = *pop[b].potential;
        if (pa.exp_acc != pb.exp_acc) return pa.exp_acc > pb.exp_acc;
        if (pa.exp_size != pb.exp_size) return pa.exp_size < pb.exp_size;
        return pop[a].id < pop[b].id;
    };

    for (const auto& front : fronts) {
        const std::size_t room = p_num - chosen.size();
        if (room == 0) break;
        if (front.size() <= room) {
            chosen.insert(chosen.end(), front.begin(), front.end());
            continue;
        }
        std::vector<std::size_t> pool(front.begin(), front.end());
        std::vector<bool> taken(pop.size(), false);
        std::size_t reserved = 0;
        if (options.protection) {
            reserved = (room + 1) / 2;
            std::vector<std::size_t> ranked = pool;
            std::sort(ranked.begin(), ranked.end(), by_accuracy);
            for (std::size_t k = 0; k < reserved; ++k) {
                chosen.push_back(ranked[k]);
                taken[ranked[k]] = true;
            }
        }
        const auto crowd = crowding_distance(pop, front);
        std::vector<std::size_t> order(front.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (crowd[a] != crowd[b]) return crowd[a] > crowd[b];
            return by_accuracy(front[a], front[b]);
        });
        for (std::size_t k : order) {
            if (chosen.size() == p_num) break;
            if (!taken[front[k]]) chosen.push_back(front[k]);
        }
        break;
    }

    Population out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(std::move(pop[i]));
    assign_fronts(out);
    return out;
}

}  // namespace gevo
