#include "ecgl/replay_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "ecgl/op_counter.hpp"

namespace ecgl {
namespace {

constexpr std::size_t kReductionBlock = 4096;

double squared_distance(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        acc += d * d;
    }
    return acc;
}

void check_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw std::invalid_argument(std::string(what) + ": vector length " + std::to_string(got) + " != node count " +
                                    std::to_string(want));
    }
}

// Row sums of the RBF kernel matrix (s(i,i) = 1 included).
std::vector<double> rbf_row_sums(const Matrix& features, double gamma) {
    const std::size_t n = features.rows();
    std::vector<double> sums(n);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto xi = features.row(static_cast<std::size_t>(i));
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(-gamma * squared_distance(xi, features.row(j)));
        sums[static_cast<std::size_t>(i)] = acc;
    }
    return sums;
}

std::vector<std::size_t> ranked_positions(std::span<const NodeId> ids, std::span<const double> scores,
                                          std::span<const std::size_t> pool) {
    std::vector<std::size_t> order(pool.begin(), pool.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    return order;
}

}  // namespace

void ImportanceConfig::validate() const {
    if (!(damping >= 0.0 && damping <= 1.0)) throw ConfigError("damping must lie in [0, 1]");
    if (rbf_gamma && !(*rbf_gamma > 0.0)) throw ConfigError("rbf_gamma must be positive");
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
}

double default_rbf_gamma(const Matrix& features) {
    const std::size_t n = features.rows();
    const std::size_t sample = std::min<std::size_t>(n, 256);
    std::vector<double> distances;
    distances.reserve(sample * (sample - (sample > 0 ? 1 : 0)) / 2);
    for (std::size_t a = 0; a < sample; ++a) {
        const std::size_t ia = a * n / sample;
        for (std::size_t b = a + 1; b < sample; ++b) {
            const std::size_t ib = b * n / sample;
            distances.push_back(std::sqrt(squared_distance(features.row(ia), features.row(ib))));
        }
    }
    if (distances.empty()) return 1.0;
    auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
    std::nth_element(distances.begin(), mid, distances.end());
    const double median = *mid;
    return median > 0.0 ? 1.0 / (2.0 * median * median) : 1.0;
}

TransitionOperator::TransitionOperator(const Graph& graph) : n_(graph.num_nodes()) {
    SparseMatrix outgoing;
    outgoing.rows = n_;
    outgoing.cols = n_;
    outgoing.offsets = graph.row_offsets;
    outgoing.indices = graph.col_indices;
    outgoing.values.resize(graph.col_indices.size());
    for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t deg = graph.out_degree(j);
        if (deg == 0) {
            dangling_.push_back(static_cast<NodeId>(j));
            continue;
        }
        const double w = 1.0 / static_cast<double>(deg);
        for (auto k = graph.row_offsets[j]; k < graph.row_offsets[j + 1]; ++k) outgoing.values[static_cast<std::size_t>(k)] = w;
    }
    incoming_ = outgoing.transposed();
}

void TransitionOperator::apply(std::span<const double> in, std::span<double> out) const {
    check_length(in.size(), n_, "transition_matrix_apply");
    check_length(out.size(), n_, "transition_matrix_apply");
    kernels::spmv(incoming_, in, out);
    if (dangling_.empty() || n_ == 0) return;
    double dangling_mass = 0.0;
    for (NodeId j : dangling_) dangling_mass += in[static_cast<std::size_t>(j)];
    const double share = dangling_mass / static_cast<double>(n_);
    for (double& x : out) x += share;
}

std::vector<double> transition_matrix_apply(const Graph& graph, std::span<const double> vector) {
    check_length(vector.size(), graph.num_nodes(), "transition_matrix_apply");
    TransitionOperator op(graph);
    std::vector<double> out(graph.num_nodes());
    op.apply(vector, out);
    return out;
}

std::vector<double> exact_attribute_transition_apply(const Matrix& features, double rbf_gamma, std::span<const double> vector) {
    const std::size_t n = features.rows();
    check_length(vector.size(), n, "exact_attribute_transition_apply");
    // The kernel is symmetric, so column sums equal row sums.
    const std::vector<double> col_sums = rbf_row_sums(features, rbf_gamma);
    std::vector<double> scaled(n);
    for (std::size_t j = 0; j < n; ++j) scaled[j] = vector[j] / col_sums[j];
    std::vector<double> out(n);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto xi = features.row(static_cast<std::size_t>(i));
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(-rbf_gamma * squared_distance(xi, features.row(j))) * scaled[j];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

std::vector<double> exact_attribute_r(const Matrix& features, double rbf_gamma) {
    std::vector<double> r = rbf_row_sums(features, rbf_gamma);
    const double z = std::accumulate(r.begin(), r.end(), 0.0);
    for (double& x : r) x /= z;
    return r;
}

TaylorSurrogate build_taylor_surrogate(const Matrix& features, double rbf_gamma, bool center_features) {
    if (!(rbf_gamma > 0.0)) throw ConfigError("build_taylor_surrogate: rbf_gamma must be positive");
    const std::size_t n = features.rows();
    const std::size_t dim = features.cols();
    TaylorSurrogate s;
    s.gamma = rbf_gamma;
    if (center_features && n > 0) {
        s.center.assign(dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto x = features.row(i);
            for (std::size_t k = 0; k < dim; ++k) s.center[k] += x[k];
        }
        for (double& c : s.center) c /= static_cast<double>(n);
    }

    // Partial sums over fixed row blocks, merged in block order, so the result
    // does not depend on the thread count.
    const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<double> part_a(blocks, 0.0);
    std::vector<std::vector<double>> part_b(blocks, std::vector<double>(dim, 0.0));
    std::vector<Matrix> part_c(blocks, Matrix(dim, dim));
    s.weights.resize(n);
    const auto nblocks = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < nblocks; ++bi) {
        const auto blk = static_cast<std::size_t>(bi);
        std::vector<double> x(dim);
        Matrix& c = part_c[blk];
        const std::size_t end = std::min(n, (blk + 1) * kReductionBlock);
        for (std::size_t i = blk * kReductionBlock; i < end; ++i) {
            auto raw = features.row(i);
            double norm2 = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                x[k] = s.center.empty() ? raw[k] : raw[k] - s.center[k];
                norm2 += x[k] * x[k];
            }
            const double w = std::exp(-rbf_gamma * norm2);
            s.weights[i] = w;
            part_a[blk] += w;
            for (std::size_t k = 0; k < dim; ++k) {
                part_b[blk][k] += w * x[k];
                const double wxk = w * x[k];
                for (std::size_t l = k; l < dim; ++l) c(k, l) += wxk * x[l];
            }
        }
    }
    s.b.assign(dim, 0.0);
    s.matrix_c = Matrix(dim, dim);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        s.a += part_a[blk];
        for (std::size_t k = 0; k < dim; ++k) {
            s.b[k] += part_b[blk][k];
            for (std::size_t l = k; l < dim; ++l) s.matrix_c(k, l) += part_c[blk](k, l);
        }
    }
    const double two_gamma = 2.0 * rbf_gamma;
    const double two_gamma_sq = 2.0 * rbf_gamma * rbf_gamma;
    for (std::size_t k = 0; k < dim; ++k) {
        s.b[k] *= two_gamma;
        for (std::size_t l = k; l < dim; ++l) {
            s.matrix_c(k, l) *= two_gamma_sq;
            s.matrix_c(l, k) = s.matrix_c(k, l);
        }
    }
    return s;
}

AttributeScores surrogate_r(const TaylorSurrogate& surrogate, const Matrix& features) {
    const std::size_t n = features.rows();
    const std::size_t dim = features.cols();
    if (surrogate.weights.size() != n || surrogate.b.size() != dim) {
        throw std::invalid_argument("surrogate_r: surrogate was built for different features");
    }
    AttributeScores out;
    out.r.resize(n);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto raw = features.row(i);
        std::vector<double> x(dim);
        for (std::size_t k = 0; k < dim; ++k) x[k] = surrogate.center.empty() ? raw[k] : raw[k] - surrogate.center[k];
        double linear = 0.0;
        double quadratic = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            linear += x[k] * surrogate.b[k];
            double cx = 0.0;
            for (std::size_t l = 0; l < dim; ++l) cx += surrogate.matrix_c(k, l) * x[l];
            quadratic += x[k] * cx;
        }
        // Truncating the expansion can push an estimate slightly below zero.
        out.r[i] = std::max(0.0, surrogate.weights[i] * (surrogate.a + linear + quadratic));
    }
    const double total = std::accumulate(out.r.begin(), out.r.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) {
        out.degenerate = true;
        std::fill(out.r.begin(), out.r.end(), n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
        return out;
    }
    for (double& x : out.r) x /= total;
    return out;
}

ImportanceResult importance_scores(const Graph& graph, const Matrix& features, const ImportanceConfig& config) {
    config.validate();
    const std::size_t n = graph.num_nodes();
    if (features.rows() != n) throw std::invalid_argument("importance_scores: feature rows != node count");
    ImportanceResult result;
    if (n == 0) {
        result.converged = true;
        return result;
    }
    result.gamma = config.rbf_gamma ? *config.rbf_gamma : default_rbf_gamma(features);

    std::vector<double> r;
    if (config.use_taylor_surrogate) {
        auto attr = surrogate_r(build_taylor_surrogate(features, result.gamma, config.center_features), features);
        r = std::move(attr.r);
        result.degenerate_attribute = attr.degenerate;
    } else {
        r = exact_attribute_r(features, result.gamma);
    }

    const double d = config.damping;
    if (d == 0.0) {
        result.scores = std::move(r);
        result.iterations = 1;
        result.converged = true;
        return result;
    }

    TransitionOperator op(graph);
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (std::size_t it = 1; it <= config.max_iterations; ++it) {
        op.apply(pi, next);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = d * next[i] + (1.0 - d) * r[i];
            change += std::abs(next[i] - pi[i]);
        }
        pi.swap(next);
        result.iterations = it;
        if (change < config.tolerance) {
            result.converged = true;
            break;
        }
    }
    const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& x : pi) x /= total;
    result.scores = std::move(pi);
    return result;
}

std::vector<double> diversity_scores(const Graph& graph, const Matrix& features) {
    const std::size_t n = graph.num_nodes();
    if (features.rows() != n) throw std::invalid_argument("diversity_scores: feature rows != node count");
    note_csr_traversal();
    const std::size_t dim = features.cols();
    std::vector<double> scores(n);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto nbrs = graph.neighbors(i);
        std::vector<double> mean(dim, 0.0);
        for (NodeId u : nbrs) {
            auto xu = features.row(static_cast<std::size_t>(u));
            for (std::size_t k = 0; k < dim; ++k) mean[k] += xu[k];
        }
        if (!nbrs.empty()) {
            for (double& m : mean) m /= static_cast<double>(nbrs.size());
        }
        scores[i] = std::sqrt(squared_distance(features.row(i), mean));
    }
    return scores;
}

MemoryBuffer::MemoryBuffer(std::size_t budget_per_task, double diversity_ratio)
    : budget_per_task_(budget_per_task), diversity_ratio_(diversity_ratio) {
    if (!(diversity_ratio >= 0.0 && diversity_ratio <= 1.0)) throw ConfigError("diversity_ratio must lie in [0, 1]");
}

std::size_t MemoryBuffer::count_for_task(TaskId task) const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [task](const ReplayRecord& r) { return r.origin_task == task; }));
}

void MemoryBuffer::add(ReplayRecord record) {
    for (const auto& r : records_) {
        if (r.origin_task == record.origin_task && r.node_id == record.node_id) {
            throw std::logic_error("memory buffer already holds node " + std::to_string(record.node_id) + " of task " +
                                   std::to_string(record.origin_task));
        }
    }
    if (count_for_task(record.origin_task) >= budget_per_task_) {
        throw std::logic_error("memory buffer budget exceeded for task " + std::to_string(record.origin_task));
    }
    records_.push_back(std::move(record));
}

Matrix MemoryBuffer::feature_matrix() const {
    if (records_.empty()) return {};
    Matrix m(records_.size(), records_.front().features.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        std::copy(records_[i].features.begin(), records_[i].features.end(), m.row(i).begin());
    }
    return m;
}

std::vector<ClassId> MemoryBuffer::labels() const {
    std::vector<ClassId> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.label);
    return out;
}

std::vector<TaskId> MemoryBuffer::origin_tasks() const {
    std::vector<TaskId> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.origin_task);
    return out;
}

ReplaySelection select_replay_nodes(const TaskView& task, std::span<const double> importance,
                                    std::span<const double> diversity, std::size_t budget, double diversity_ratio) {
    if (!(diversity_ratio >= 0.0 && diversity_ratio <= 1.0)) throw ConfigError("diversity_ratio must lie in [0, 1]");
    const std::size_t n = task.node_ids.size();
    if (importance.size() != n || diversity.size() != n) {
        throw std::invalid_argument("select_replay_nodes: score arrays must cover every task node");
    }
    std::vector<std::size_t> pool;
    pool.reserve(task.train_ids.size());
    for (NodeId v : task.train_ids) {
        auto it = std::lower_bound(task.node_ids.begin(), task.node_ids.end(), v);
        if (it == task.node_ids.end() || *it != v) throw std::invalid_argument("training node missing from task node list");
        pool.push_back(static_cast<std::size_t>(it - task.node_ids.begin()));
    }
    const std::size_t take = std::min(budget, pool.size());
    // The epsilon keeps products like 0.1 * 10 from rounding up to 2.
    auto n_div = static_cast<std::size_t>(std::ceil(diversity_ratio * static_cast<double>(take) - 1e-9));
    n_div = std::min(n_div, take);

    ReplaySelection sel;
    std::set<std::size_t> chosen;
    const auto by_div = ranked_positions(task.node_ids, diversity, pool);
    for (std::size_t k = 0; k < n_div; ++k) {
        chosen.insert(by_div[k]);
        sel.diversity_picks.push_back(task.node_ids[by_div[k]]);
    }
    const auto by_imp = ranked_positions(task.node_ids, importance, pool);
    for (std::size_t pos : by_imp) {
        if (chosen.size() >= take) break;
        if (!chosen.insert(pos).second) continue;
        sel.importance_picks.push_back(task.node_ids[pos]);
    }
    return sel;
}

MemoryBuffer update_memory(MemoryBuffer buffer, const Graph& graph, const TaskView& task, std::span<const double> importance,
                           std::span<const double> diversity, std::size_t budget, double diversity_ratio,
                           ReplaySelection* selection_out) {
    ReplaySelection sel = select_replay_nodes(task, importance, diversity, budget, diversity_ratio);
    for (const auto* picks : {&sel.diversity_picks, &sel.importance_picks}) {
        for (NodeId v : *picks) {
            auto row = graph.features.row(static_cast<std::size_t>(v));
            buffer.add(ReplayRecord{{row.begin(), row.end()}, graph.labels[static_cast<std::size_t>(v)], task.task_id, v});
        }
    }
    if (selection_out) *selection_out = std::move(sel);
    return buffer;
}

void write_selection_csv(std::ostream& out, const TaskView& task, std::span<const double> importance,
                         std::span<const double> diversity, const ReplaySelection& selection) {
    std::set<NodeId> picked(selection.diversity_picks.begin(), selection.diversity_picks.end());
    picked.insert(selection.importance_picks.begin(), selection.importance_picks.end());
    out << "node_id,importance,diversity,selected\n";
    out.precision(17);
    for (std::size_t k = 0; k < task.node_ids.size(); ++k) {
        const NodeId v = task.node_ids[k];
        out << v << ',' << importance[k] << ',' << diversity[k] << ',' << (picked.count(v) ? 1 : 0) << '\n';
    }
}

}  // namespace ecgl
