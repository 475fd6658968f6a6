// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/partition.hpp"

#include "fedpeft/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fedpeft {

using nlohmann::json;

double hellinger(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("hellinger: distribution sizes differ");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw NumericError("hellinger: negative mass");
        sp += p[i];
        sq += q[i];
    }
    if (std::fabs(sp - 1.0) > 1e-9 || std::fabs(sq - 1.0) > 1e-9)
        throw NumericError("hellinger: distributions must sum to 1");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
        acc += d * d;
    }
    return std::min(1.0, std::sqrt(acc) * M_SQRT1_2);
}

namespace {
std::vector<double> node_distribution(const std::vector<long>& hist) {
    long total = std::accumulate(hist.begin(), hist.end(), 0L);
    std::vector<double> p(hist.size(), 0.0);
    if (total > 0)
        for (std::size_t c = 0; c < hist.size(); ++c) p[c] = static_cast<double>(hist[c]) / static_cast<double>(total);
    return p;
}

double plan_heterogeneity(const std::vector<std::vector<long>>& hists, HdAggregate agg) {
    const std::size_t m = hists.size();
    const std::size_t k = hists[0].size();
    std::vector<long> global(k, 0);
    for (const auto& h : hists)
        for (std::size_t c = 0; c < k; ++c) global[c] += h[c];
    if (agg == HdAggregate::node_vs_global) {
        const auto gp = node_distribution(global);
        double acc = 0.0;
        for (const auto& h : hists) acc += hellinger(node_distribution(h), gp);
        return acc / static_cast<double>(m);
    }
    double acc = 0.0;
    long pairs = 0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            acc += hellinger(node_distribution(hists[a]), node_distribution(hists[b]));
            ++pairs;
        }
    return pairs ? acc / static_cast<double>(pairs) : 0.0;
}

/// Integer counts summing to n, proportional to `props`, largest remainder.
std::vector<long> largest_remainder(const std::vector<double>& props, long n) {
    const std::size_t m = props.size();
    std::vector<long> counts(m, 0);
    std::vector<std::pair<double, std::size_t>> rem(m);
    long assigned = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double exact = props[i] * static_cast<double>(n);
        counts[i] = static_cast<long>(std::floor(exact));
        assigned += counts[i];
        rem[i] = {exact - std::floor(exact), i};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second; // ties -> lower node id
    });
    for (long r = 0; r < n - assigned; ++r) ++counts[rem[static_cast<std::size_t>(r)].second];
    return counts;
}
} // namespace

PartitionPlan partition_dirichlet(const std::vector<int>& labels, int nodes, double alpha, Rng rng,
                                  HdAggregate agg) {
    if (nodes < 2) throw PartitionError("partition: need at least 2 nodes");
    if (alpha <= 0.0) throw PartitionError("partition: alpha must be positive");
    if (labels.empty()) throw PartitionError("partition: empty label list");
    const int k = 1 + *std::max_element(labels.begin(), labels.end());
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw PartitionError("partition: negative label");
        by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    }
    for (int c = 0; c < k; ++c)
        if (by_class[static_cast<std::size_t>(c)].empty())
            throw PartitionError("partition: class " + std::to_string(c) + " has no instances");

    constexpr int kMaxAttempts = 8;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng r = rng.child(streams::partition + static_cast<std::uint64_t>(attempt));
        PartitionPlan plan;
        plan.nodes = nodes;
        plan.alpha = alpha;
        plan.seed = rng.seed();
        plan.node_indices.assign(static_cast<std::size_t>(nodes), {});
        plan.histograms.assign(static_cast<std::size_t>(nodes), std::vector<long>(static_cast<std::size_t>(k), 0));
        for (int c = 0; c < k; ++c) {
            auto& members = by_class[static_cast<std::size_t>(c)];
            r.shuffle(members);
            // Dirichlet(alpha 1_M) via normalized Gamma(alpha, 1) draws
            std::vector<double> props(static_cast<std::size_t>(nodes));
            double z = 0.0;
            for (int nd = 0; nd < nodes; ++nd) {
                props[static_cast<std::size_t>(nd)] = r.gamma(alpha);
                z += props[static_cast<std::size_t>(nd)];
            }
            for (auto& p : props) p /= z;
            const auto counts = largest_remainder(props, static_cast<long>(members.size()));
            std::size_t cursor = 0;
            for (int nd = 0; nd < nodes; ++nd) {
                for (long j = 0; j < counts[static_cast<std::size_t>(nd)]; ++j)
                    plan.node_indices[static_cast<std::size_t>(nd)].push_back(members[cursor++]);
                plan.histograms[static_cast<std::size_t>(nd)][static_cast<std::size_t>(c)] +=
                    counts[static_cast<std::size_t>(nd)];
            }
        }
        bool ok = true;
        for (const auto& ni : plan.node_indices)
            if (ni.empty()) ok = false;
        if (!ok) continue;
        for (auto& ni : plan.node_indices) std::sort(ni.begin(), ni.end());
        plan.achieved_hd = plan_heterogeneity(plan.histograms, agg);
        return plan;
    }
    throw PartitionError("partition: could not produce non-empty nodes after 8 redraws");
}

std::pair<double, PartitionPlan> calibrate_alpha(const std::vector<int>& labels, int nodes, double target_hd,
                                                 std::vector<double> alpha_grid, Rng rng) {
    if (alpha_grid.empty()) throw PartitionError("calibrate_alpha: empty grid");
    std::sort(alpha_grid.rbegin(), alpha_grid.rend());
    for (double alpha : alpha_grid) {
        PartitionPlan plan = partition_dirichlet(labels, nodes, alpha, rng);
        if (plan.achieved_hd >= target_hd) return {alpha, std::move(plan)};
    }
    throw PartitionError("calibrate_alpha: no grid alpha reaches the target heterogeneity");
}

double alpha_preset(const std::string& name) {
    if (name == "fpb") return 0.7;
    if (name == "fiqa-sa" || name == "medqa" || name == "medmcqa") return 1.0;
    throw ConfigError("unknown alpha preset: " + name);
}

std::string plan_report_csv(const PartitionPlan& plan) {
    std::ostringstream os;
    os << "node";
    const std::size_t k = plan.histograms.empty() ? 0 : plan.histograms[0].size();
    for (std::size_t c = 0; c < k; ++c) os << ",class" << c;
    os << "\n";
    for (int nd = 0; nd < plan.nodes; ++nd) {
        const auto p = node_distribution(plan.histograms[static_cast<std::size_t>(nd)]);
        os << nd;
        char buf[32];
        for (std::size_t c = 0; c < k; ++c) {
            std::snprintf(buf, sizeof(buf), "%.6f", p[c]);
            os << "," << buf;
        }
        os << "\n";
    }
    return os.str();
}

std::string plan_to_json(const PartitionPlan& plan) {
    json j;
    j["alpha"] = plan.alpha;
    j["seed"] = plan.seed;
    j["achieved_hd"] = plan.achieved_hd;
    j["nodes"] = plan.node_indices;
    j["histograms"] = plan.histograms;
    return j.dump(2) + "\n";
}

PartitionPlan plan_from_json(const std::string& text) {
    json j = json::parse(text);
    PartitionPlan plan;
    plan.alpha = j.at("alpha").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.achieved_hd = j.at("achieved_hd").get<double>();
    plan.node_indices = j.at("nodes").get<std::vector<std::vector<int>>>();
    plan.histograms = j.at("histograms").get<std::vector<std::vector<long>>>();
    plan.nodes = static_cast<int>(plan.node_indices.size());
    return plan;
}

} // namespace fedpeft
