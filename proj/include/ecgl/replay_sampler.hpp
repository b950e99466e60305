#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ecgl/graph_store.hpp"
#include "ecgl/kernels.hpp"
#include "ecgl/matrix.hpp"

namespace ecgl {

struct ImportanceConfig {
    double damping = 0.85;              // weight of the topology walk
    std::optional<double> rbf_gamma;    // unset: default_rbf_gamma(features)
    std::size_t max_iterations = 1000;
    double tolerance = 1e-10;           // L1 change between iterates
    bool use_taylor_surrogate = true;
    bool center_features = true;        // RBF is shift invariant; centering keeps the expansion near 0

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

/// 1 / (2 m^2) where m is the median pairwise distance over at most 256
/// evenly strided nodes. Returns 1 when that median is 0.
double default_rbf_gamma(const Matrix& features);

/// Topology transition T of the PageRank walk, applied without materializing it:
/// T_ij = 1/out_degree(j) for each stored edge j -> i, and a uniform 1/N column
/// for every dangling node j.
class TransitionOperator {
public:
    explicit TransitionOperator(const Graph& graph);

    std::size_t size() const noexcept { return n_; }
    void apply(std::span<const double> in, std::span<double> out) const;

private:
    std::size_t n_ = 0;
    SparseMatrix incoming_;  // row i lists j with edge j -> i, weighted 1/out_degree(j)
    std::vector<NodeId> dangling_;
};

std::vector<double> transition_matrix_apply(const Graph& graph, std::span<const double> vector);

/// Q v with Q_ij = s(i,j) / sum_k s(k,j) and s the RBF kernel. Quadratic in N.
std::vector<double> exact_attribute_transition_apply(const Matrix& features, double rbf_gamma, std::span<const double> vector);

/// r_i = sum_j s(i,j) / z with z the sum over all pairs. Quadratic in N.
std::vector<double> exact_attribute_r(const Matrix& features, double rbf_gamma);

/// Second-order expansion of the RBF row sums, precomputed in one pass.
/// `matrix_c` is the K x K quadratic term, not a class count.
struct TaylorSurrogate {
    double gamma = 0.0;
    std::vector<double> center;   // subtracted from every feature row; empty means none
    std::vector<double> weights;  // w_i = exp(-gamma * |x_i|^2)
    double a = 0.0;
    std::vector<double> b;
    Matrix matrix_c;
};

TaylorSurrogate build_taylor_surrogate(const Matrix& features, double rbf_gamma, bool center_features = false);

struct AttributeScores {
    std::vector<double> r;    // sums to 1
    bool degenerate = false;  // every estimate clamped to 0; r fell back to uniform
};

/// r_i proportional to w_i (a + x_i.b + x_i^T C x_i), negative estimates clamped to 0.
AttributeScores surrogate_r(const TaylorSurrogate& surrogate, const Matrix& features);

struct ImportanceResult {
    std::vector<double> scores;  // nonnegative, sums to 1
    std::size_t iterations = 0;
    bool converged = false;
    bool degenerate_attribute = false;
    double gamma = 0.0;
};

/// Attributed PageRank: pi <- d T pi + (1 - d) r from a uniform start.
ImportanceResult importance_scores(const Graph& graph, const Matrix& features, const ImportanceConfig& config);

/// |x_i - mean of 1-hop neighbours|; isolated nodes score |x_i|.
std::vector<double> diversity_scores(const Graph& graph, const Matrix& features);

struct ReplayRecord {
    std::vector<double> features;
    ClassId label = 0;
    TaskId origin_task = 0;
    NodeId node_id = 0;  // original graph id
};

class MemoryBuffer {
public:
    explicit MemoryBuffer(std::size_t budget_per_task = 0, double diversity_ratio = 0.25);

    std::size_t budget_per_task() const noexcept { return budget_per_task_; }
    double diversity_ratio() const noexcept { return diversity_ratio_; }
    const std::vector<ReplayRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t count_for_task(TaskId task) const;

    /// Throws std::logic_error on a duplicate (task, node) or an exceeded task budget.
    void add(ReplayRecord record);

    Matrix feature_matrix() const;
    std::vector<ClassId> labels() const;
    std::vector<TaskId> origin_tasks() const;

private:
    std::size_t budget_per_task_;
    double diversity_ratio_;
    std::vector<ReplayRecord> records_;
};

struct ReplaySelection {
    std::vector<NodeId> diversity_picks;   // original ids, in pick order
    std::vector<NodeId> importance_picks;  // original ids, in pick order
};

/// Splits `budget` into ceil(ratio * budget) diversity picks and the rest by
/// importance, over the task's training nodes only. Score arrays are indexed by
/// position in task.node_ids. Ties go to the smaller node id; importance
/// backfills any overlap.
ReplaySelection select_replay_nodes(const TaskView& task, std::span<const double> importance,
                                    std::span<const double> diversity, std::size_t budget, double diversity_ratio);

/// Appends the selection's (feature, label, task) records and returns the buffer.
MemoryBuffer update_memory(MemoryBuffer buffer, const Graph& graph, const TaskView& task, std::span<const double> importance,
                           std::span<const double> diversity, std::size_t budget, double diversity_ratio,
                           ReplaySelection* selection_out = nullptr);

/// Debug dump: node_id,importance,diversity,selected(0|1) for every task node.
void write_selection_csv(std::ostream& out, const TaskView& task, std::span<const double> importance,
                         std::span<const double> diversity, const ReplaySelection& selection);

}  // namespace ecgl
