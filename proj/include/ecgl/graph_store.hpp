#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecgl/matrix.hpp"
#include "ecgl/types.hpp"

namespace ecgl {

/// Attributed graph in CSR form. Undirected graphs store every edge in both
/// directions; directed graphs store out-edges only. Self-loops are never stored.
struct Graph {
    bool directed = false;
    std::vector<EdgeOffset> row_offsets{0};
    std::vector<NodeId> col_indices;
    Matrix features;  // num_nodes x feature_dim
    std::vector<ClassId> labels;
    std::vector<TaskId> node_task;

    std::size_t num_nodes() const noexcept { return row_offsets.size() - 1; }
    std::size_t feature_dim() const noexcept { return features.cols(); }
    std::size_t num_stored_edges() const noexcept { return col_indices.size(); }
    /// Logical edge count: stored entries for directed graphs, half of them otherwise.
    std::size_t num_edges() const noexcept { return directed ? col_indices.size() : col_indices.size() / 2; }

    std::size_t out_degree(std::size_t node) const {
        return static_cast<std::size_t>(row_offsets[node + 1] - row_offsets[node]);
    }
    std::span<const NodeId> neighbors(std::size_t node) const {
        return {col_indices.data() + row_offsets[node], out_degree(node)};
    }

    /// Builds a graph from an edge list. Self-loops and duplicates are dropped;
    /// undirected edges are mirrored. Throws DataError on out-of-range endpoints.
    static Graph from_edges(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges, bool directed,
                            Matrix features, std::vector<ClassId> labels, std::vector<TaskId> node_task);

    /// Throws DataError describing the first broken invariant.
    void validate() const;

    /// Distinct logical edges, each once (u < v for undirected graphs), sorted.
    std::vector<std::pair<NodeId, NodeId>> edge_list() const;

    bool operator==(const Graph&) const = default;
};

struct TaskView {
    TaskId task_id = 0;
    std::vector<NodeId> node_ids;   // ascending
    std::vector<NodeId> train_ids;  // ascending
    std::vector<NodeId> test_ids;   // ascending
    std::vector<ClassId> class_ids; // ascending

    bool operator==(const TaskView&) const = default;
};

struct TaskSequence {
    std::vector<TaskView> tasks;
    std::size_t classes_per_task = 0;

    std::size_t size() const noexcept { return tasks.size(); }
    const TaskView& at(TaskId t) const;

    /// Checks class disjointness, node coverage, and split consistency against `graph`.
    void validate(const Graph& graph) const;

    bool operator==(const TaskSequence&) const = default;
};

struct Dataset {
    Graph graph;
    TaskSequence tasks;
};

/// A remapped subgraph. Local id k corresponds to original node original_ids[k];
/// the first focus_count local ids are the nodes of the requested task, in the
/// order of TaskView::node_ids.
struct Subgraph {
    Graph graph;
    std::vector<NodeId> original_ids;
    std::size_t focus_count = 0;

    std::optional<NodeId> local_id(NodeId original) const;

private:
    friend Subgraph task_subgraph(const Graph&, const TaskSequence&, TaskId, bool);
    std::unordered_map<NodeId, NodeId> local_of_;
};

/// Induced subgraph on task t. With include_prior_edges the node set also holds
/// every node of tasks before t, so edges into earlier tasks survive; later
/// tasks are never included.
Subgraph task_subgraph(const Graph& graph, const TaskSequence& tasks, TaskId t, bool include_prior_edges);

/// Builds task views from graph.node_task with a seeded per-class train/test split.
TaskSequence make_task_sequence(const Graph& graph, std::size_t classes_per_task, double train_fraction,
                                std::uint64_t seed);

struct SbmParams {
    std::size_t num_tasks = 2;
    std::size_t classes_per_task = 2;
    std::size_t nodes_per_class = 50;
    double p_intra = 0.1;       // same class
    double p_inter = 0.01;      // same task, different class
    double p_intertask = 0.001; // different tasks
    std::size_t feature_dim = 16;
    double feature_shift = 3.0;
    double train_fraction = 0.6;
    std::uint64_t seed = 0;
};

/// Stochastic block model with one block per class and Gaussian class-conditional
/// features. Nodes are numbered task-major, then class, then member.
Dataset generate_sbm(const SbmParams& params);

/// Line-oriented text format (HEADER / NODE / EDGE / TASK records).
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
void write_dataset(std::ostream& out, const Dataset& dataset);

}  // namespace ecgl
