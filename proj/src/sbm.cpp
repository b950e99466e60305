#include <cmath>
#include <string>

#include "ecgl/graph_store.hpp"
#include "ecgl/rng.hpp"

namespace ecgl {
namespace {

constexpr std::uint64_t kEdgeStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitStream = 0xC2B2AE3D27D4EB4FULL;

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

// Geometric skipping over the m*(m-1)/2 unordered pairs of one block.
void sample_within(std::size_t first, std::size_t m, double p, Rng& rng, std::vector<std::pair<NodeId, NodeId>>& out) {
    if (p <= 0.0 || m < 2) return;
    std::uint64_t v = 1;
    std::int64_t w = -1;
    while (v < m) {
        w += 1 + static_cast<std::int64_t>(rng.geometric(p));
        while (w >= static_cast<std::int64_t>(v) && v < m) {
            w -= static_cast<std::int64_t>(v);
            ++v;
        }
        if (v < m) out.emplace_back(static_cast<NodeId>(first + static_cast<std::size_t>(w)), static_cast<NodeId>(first + v));
    }
}

// Geometric skipping over the ma*mb pairs between two blocks.
void sample_between(std::size_t first_a, std::size_t ma, std::size_t first_b, std::size_t mb, double p, Rng& rng,
                    std::vector<std::pair<NodeId, NodeId>>& out) {
    if (p <= 0.0 || ma == 0 || mb == 0) return;
    const std::uint64_t total = static_cast<std::uint64_t>(ma) * mb;
    std::uint64_t idx = rng.geometric(p);
    while (idx < total) {
        out.emplace_back(static_cast<NodeId>(first_a + idx / mb), static_cast<NodeId>(first_b + idx % mb));
        idx += 1 + rng.geometric(p);
    }
}

}  // namespace

Dataset generate_sbm(const SbmParams& params) {
    if (params.num_tasks == 0 || params.classes_per_task == 0 || params.nodes_per_class == 0 || params.feature_dim == 0) {
        throw ConfigError("SBM counts must all be at least 1");
    }
    check_probability(params.p_intra, "p_intra");
    check_probability(params.p_inter, "p_inter");
    check_probability(params.p_intertask, "p_intertask");

    const std::size_t num_classes = params.num_tasks * params.classes_per_task;
    const std::size_t m = params.nodes_per_class;
    const std::size_t n = num_classes * m;
    const std::size_t dim = params.feature_dim;

    Rng feature_rng(params.seed);
    Matrix means(num_classes, dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        double norm2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            means(c, k) = feature_rng.normal();
            norm2 += means(c, k) * means(c, k);
        }
        const double scale = norm2 > 0.0 ? params.feature_shift / std::sqrt(norm2) : 0.0;
        for (std::size_t k = 0; k < dim; ++k) means(c, k) *= scale;
    }

    Matrix features(n, dim);
    std::vector<ClassId> labels(n);
    std::vector<TaskId> node_task(n);
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t c = v / m;
        labels[v] = static_cast<ClassId>(c);
        node_task[v] = static_cast<TaskId>(c / params.classes_per_task);
        for (std::size_t k = 0; k < dim; ++k) features(v, k) = means(c, k) + feature_rng.normal();
    }

    Rng edge_rng(params.seed ^ kEdgeStream);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t a = 0; a < num_classes; ++a) {
        sample_within(a * m, m, params.p_intra, edge_rng, edges);
        for (std::size_t b = a + 1; b < num_classes; ++b) {
            const bool same_task = a / params.classes_per_task == b / params.classes_per_task;
            sample_between(a * m, m, b * m, m, same_task ? params.p_inter : params.p_intertask, edge_rng, edges);
        }
    }

    Dataset ds;
    ds.graph = Graph::from_edges(n, edges, false, std::move(features), std::move(labels), std::move(node_task));
    ds.tasks = make_task_sequence(ds.graph, params.classes_per_task, params.train_fraction, params.seed ^ kSplitStream);
    return ds;
}

}  // namespace ecgl
