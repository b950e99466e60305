#include "ecgl/graph_store.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "ecgl/rng.hpp"

namespace ecgl {
namespace {

std::string node_str(std::size_t n) { return std::to_string(n); }

}  // namespace

Graph Graph::from_edges(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges, bool directed,
                        Matrix features, std::vector<ClassId> labels, std::vector<TaskId> node_task) {
    std::vector<std::pair<NodeId, NodeId>> stored;
    stored.reserve(directed ? edges.size() : 2 * edges.size());
    for (const auto& [u, v] : edges) {
        if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes) {
            throw DataError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") out of range for " +
                            node_str(num_nodes) + " nodes");
        }
        if (u == v) continue;
        stored.emplace_back(u, v);
        if (!directed) stored.emplace_back(v, u);
    }
    std::sort(stored.begin(), stored.end());
    stored.erase(std::unique(stored.begin(), stored.end()), stored.end());

    Graph g;
    g.directed = directed;
    g.row_offsets.assign(num_nodes + 1, 0);
    g.col_indices.reserve(stored.size());
    for (const auto& [u, v] : stored) {
        ++g.row_offsets[static_cast<std::size_t>(u) + 1];
        g.col_indices.push_back(v);
    }
    std::partial_sum(g.row_offsets.begin(), g.row_offsets.end(), g.row_offsets.begin());
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.node_task = std::move(node_task);
    g.validate();
    return g;
}

void Graph::validate() const {
    if (row_offsets.empty() || row_offsets.front() != 0) throw DataError("CSR offsets must start at 0");
    const std::size_t n = num_nodes();
    for (std::size_t i = 0; i < n; ++i) {
        if (row_offsets[i + 1] < row_offsets[i]) throw DataError("CSR offsets decrease at row " + node_str(i));
    }
    if (static_cast<std::size_t>(row_offsets.back()) != col_indices.size()) {
        throw DataError("CSR last offset does not match column index count");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (NodeId v : neighbors(i)) {
            if (v < 0 || static_cast<std::size_t>(v) >= n) {
                throw DataError("column index " + std::to_string(v) + " out of range in row " + node_str(i));
            }
            if (static_cast<std::size_t>(v) == i) throw DataError("self-loop stored at node " + node_str(i));
        }
    }
    if (!directed) {
        for (std::size_t i = 0; i < n; ++i) {
            for (NodeId v : neighbors(i)) {
                auto back = neighbors(static_cast<std::size_t>(v));
                if (!std::binary_search(back.begin(), back.end(), static_cast<NodeId>(i))) {
                    throw DataError("undirected edge (" + node_str(i) + ", " + std::to_string(v) +
                                    ") has no reverse entry");
                }
            }
        }
    }
    if (features.rows() != n) throw DataError("feature matrix has " + node_str(features.rows()) + " rows, expected " + node_str(n));
    if (labels.size() != n) throw DataError("label array length does not match node count");
    if (node_task.size() != n) throw DataError("task array length does not match node count");
}

std::vector<std::pair<NodeId, NodeId>> Graph::edge_list() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (std::size_t u = 0; u < num_nodes(); ++u) {
        for (NodeId v : neighbors(u)) {
            if (directed || static_cast<NodeId>(u) < v) out.emplace_back(static_cast<NodeId>(u), v);
        }
    }
    return out;
}

const TaskView& TaskSequence::at(TaskId t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= tasks.size()) {
        throw DataError("invalid task id " + std::to_string(t) + " (have " + std::to_string(tasks.size()) + " tasks)");
    }
    return tasks[static_cast<std::size_t>(t)];
}

void TaskSequence::validate(const Graph& graph) const {
    const std::size_t n = graph.num_nodes();
    std::map<ClassId, TaskId> owner;
    std::vector<int> covered(n, 0);
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const TaskView& task = tasks[ti];
        const std::string where = "task " + std::to_string(task.task_id);
        if (task.task_id != static_cast<TaskId>(ti)) throw DataError(where + ": task ids must be 0..T-1 in order");
        for (ClassId c : task.class_ids) {
            auto [it, inserted] = owner.emplace(c, task.task_id);
            if (!inserted) {
                throw DataError(where + ": class overlap, class " + std::to_string(c) + " already belongs to task " +
                                std::to_string(it->second));
            }
        }
        for (NodeId v : task.node_ids) {
            if (v < 0 || static_cast<std::size_t>(v) >= n) throw DataError(where + ": node id " + std::to_string(v) + " out of range");
            ++covered[static_cast<std::size_t>(v)];
            const ClassId label = graph.labels[static_cast<std::size_t>(v)];
            if (!std::binary_search(task.class_ids.begin(), task.class_ids.end(), label)) {
                throw DataError(where + ": node " + std::to_string(v) + " has label " + std::to_string(label) +
                                " outside the task's classes");
            }
            if (graph.node_task[static_cast<std::size_t>(v)] != task.task_id) {
                throw DataError(where + ": node " + std::to_string(v) + " is tagged with another task");
            }
        }
        std::vector<NodeId> split;
        std::set_intersection(task.train_ids.begin(), task.train_ids.end(), task.test_ids.begin(), task.test_ids.end(),
                              std::back_inserter(split));
        if (!split.empty()) throw DataError(where + ": node " + std::to_string(split.front()) + " is in both train and test");
        for (const auto* ids : {&task.train_ids, &task.test_ids}) {
            if (!std::is_sorted(ids->begin(), ids->end())) throw DataError(where + ": split ids must be ascending");
            for (NodeId v : *ids) {
                if (!std::binary_search(task.node_ids.begin(), task.node_ids.end(), v)) {
                    throw DataError(where + ": split node " + std::to_string(v) + " is not part of the task");
                }
            }
        }
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (covered[v] != 1) {
            throw DataError("node " + node_str(v) + " is covered by " + std::to_string(covered[v]) + " tasks, expected 1");
        }
    }
}

std::optional<NodeId> Subgraph::local_id(NodeId original) const {
    auto it = local_of_.find(original);
    if (it == local_of_.end()) return std::nullopt;
    return it->second;
}

Subgraph task_subgraph(const Graph& graph, const TaskSequence& tasks, TaskId t, bool include_prior_edges) {
    const TaskView& task = tasks.at(t);
    Subgraph sub;
    sub.original_ids = task.node_ids;
    sub.focus_count = task.node_ids.size();
    if (include_prior_edges) {
        std::vector<NodeId> prior;
        for (TaskId p = 0; p < t; ++p) {
            const auto& ids = tasks.at(p).node_ids;
            prior.insert(prior.end(), ids.begin(), ids.end());
        }
        std::sort(prior.begin(), prior.end());
        sub.original_ids.insert(sub.original_ids.end(), prior.begin(), prior.end());
    }
    const std::size_t n = sub.original_ids.size();
    sub.local_of_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) sub.local_of_.emplace(sub.original_ids[k], static_cast<NodeId>(k));

    Graph& g = sub.graph;
    g.directed = graph.directed;
    g.row_offsets.assign(n + 1, 0);
    g.features = gather_rows(graph.features, sub.original_ids);
    g.labels.resize(n);
    g.node_task.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto orig = static_cast<std::size_t>(sub.original_ids[k]);
        g.labels[k] = graph.labels[orig];
        g.node_task[k] = graph.node_task[orig];
        std::vector<NodeId> row;
        for (NodeId v : graph.neighbors(orig)) {
            auto it = sub.local_of_.find(v);
            if (it != sub.local_of_.end()) row.push_back(it->second);
        }
        std::sort(row.begin(), row.end());
        g.col_indices.insert(g.col_indices.end(), row.begin(), row.end());
        g.row_offsets[k + 1] = static_cast<EdgeOffset>(g.col_indices.size());
    }
    return sub;
}

TaskSequence make_task_sequence(const Graph& graph, std::size_t classes_per_task, double train_fraction,
                                std::uint64_t seed) {
    if (train_fraction < 0.0 || train_fraction > 1.0) throw ConfigError("train fraction must lie in [0, 1]");
    TaskId max_task = -1;
    for (TaskId t : graph.node_task) max_task = std::max(max_task, t);
    TaskSequence seq;
    seq.classes_per_task = classes_per_task;
    seq.tasks.resize(static_cast<std::size_t>(max_task + 1));
    std::vector<std::map<ClassId, std::vector<NodeId>>> by_class(seq.tasks.size());
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
        const TaskId t = graph.node_task[v];
        if (t < 0) throw DataError("node " + node_str(v) + " has a negative task id");
        by_class[static_cast<std::size_t>(t)][graph.labels[v]].push_back(static_cast<NodeId>(v));
    }
    Rng rng(seed);
    for (std::size_t t = 0; t < seq.tasks.size(); ++t) {
        TaskView& task = seq.tasks[t];
        task.task_id = static_cast<TaskId>(t);
        for (auto& [cls, members] : by_class[t]) {
            task.class_ids.push_back(cls);
            task.node_ids.insert(task.node_ids.end(), members.begin(), members.end());
            // Fisher-Yates on a copy; the first share of the shuffled members trains.
            std::vector<NodeId> shuffled = members;
            for (std::size_t i = shuffled.size(); i > 1; --i) {
                std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
            }
            const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(shuffled.size()) + 0.5);
            task.train_ids.insert(task.train_ids.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
            task.test_ids.insert(task.test_ids.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
        }
        std::sort(task.node_ids.begin(), task.node_ids.end());
        std::sort(task.train_ids.begin(), task.train_ids.end());
        std::sort(task.test_ids.begin(), task.test_ids.end());
    }
    return seq;
}

}  // namespace ecgl
