#include "ecgl/efficient_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ecgl/rng.hpp"

namespace ecgl {
namespace {

void add_bias(Matrix& m, const std::vector<double>& bias) {
    const std::size_t cols = m.cols();
    double* d = m.data().data();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += bias[j];
    }
}

void relu_inplace(Matrix& m) {
    for (double& x : m.data()) x = x > 0.0 ? x : 0.0;
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
    }
    return out;
}

void check_features(const ModelWeights& w, const Matrix& features, const char* where) {
    if (features.cols() != w.input_dim()) {
        throw std::invalid_argument(std::string(where) + ": feature dim " + std::to_string(features.cols()) +
                                    " != model input dim " + std::to_string(w.input_dim()));
    }
}

Gradients zero_like(const ModelWeights& w) {
    Gradients g(w.layers.size());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        g[l].weight = Matrix(w.layers[l].weight.rows(), w.layers[l].weight.cols());
        g[l].bias.assign(w.layers[l].bias.size(), 0.0);
    }
    return g;
}

void accumulate(Gradients& into, const Gradients& from, double scale) {
    for (std::size_t l = 0; l < into.size(); ++l) {
        auto& dst = into[l].weight.data();
        const auto& src = from[l].weight.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
        for (std::size_t k = 0; k < into[l].bias.size(); ++k) into[l].bias[k] += scale * from[l].bias[k];
    }
}

// Backpropagates d loss / d logits through the feature-only network.
Gradients mlp_backward(const ModelWeights& w, const ForwardCache& cache, Matrix grad) {
    Gradients g(w.layers.size());
    for (std::size_t l = w.layers.size(); l-- > 0;) {
        kernels::gemm_tn(cache.inputs[l], grad, g[l].weight);
        g[l].bias = column_sums(grad);
        if (l == 0) break;
        Matrix upstream;
        kernels::gemm_nt(grad, w.layers[l].weight, upstream);
        const auto& pre = cache.pre_activations[l - 1].data();
        auto& up = upstream.data();
        for (std::size_t k = 0; k < up.size(); ++k) {
            if (!(pre[k] > 0.0)) up[k] = 0.0;
        }
        grad = std::move(upstream);
    }
    return g;
}

struct GcnForward {
    Matrix logits;
    ForwardCache cache;
};

GcnForward gcn_forward(const ModelWeights& w, const NormalizedAdjacency& adj, const Matrix& features) {
    check_features(w, features, "gcn_forward");
    if (adj.size() != features.rows()) throw std::invalid_argument("gcn_forward: adjacency size != feature rows");
    GcnForward out;
    Matrix h = features;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        // Transform first, then aggregate: with A_norm = I this is exactly the MLP layer.
        Matrix transformed;
        kernels::gemm(h, w.layers[l].weight, transformed);
        Matrix pre = adj.apply(transformed);
        add_bias(pre, w.layers[l].bias);
        out.cache.inputs.push_back(std::move(h));
        if (l + 1 == w.layers.size()) {
            out.logits = pre;
            out.cache.pre_activations.push_back(std::move(pre));
        } else {
            h = pre;
            relu_inplace(h);
            out.cache.pre_activations.push_back(std::move(pre));
        }
    }
    return out;
}

Gradients gcn_backward(const ModelWeights& w, const NormalizedAdjacency& adj, const ForwardCache& cache, Matrix grad) {
    Gradients g(w.layers.size());
    for (std::size_t l = w.layers.size(); l-- > 0;) {
        g[l].bias = column_sums(grad);
        Matrix d_transformed = adj.apply_transpose(grad);
        kernels::gemm_tn(cache.inputs[l], d_transformed, g[l].weight);
        if (l == 0) break;
        Matrix upstream;
        kernels::gemm_nt(d_transformed, w.layers[l].weight, upstream);
        const auto& pre = cache.pre_activations[l - 1].data();
        auto& up = upstream.data();
        for (std::size_t k = 0; k < up.size(); ++k) {
            if (!(pre[k] > 0.0)) up[k] = 0.0;
        }
        grad = std::move(upstream);
    }
    return g;
}

void apply_decay_and_update(std::vector<double>& param, const std::vector<double>& step, double shrink) {
    for (std::size_t k = 0; k < param.size(); ++k) param[k] = param[k] * shrink - step[k];
}

}  // namespace

void ModelWeights::validate() const {
    if (dims.size() < 2) throw std::invalid_argument("model needs at least 2 dims");
    if (layers.size() != dims.size() - 1) throw std::invalid_argument("layer count does not match dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.rows() != dims[l] || layer.weight.cols() != dims[l + 1] || layer.bias.size() != dims[l + 1]) {
            throw std::invalid_argument("layer " + std::to_string(l) + " does not chain with dims");
        }
        for (double x : layer.weight.data()) {
            if (!std::isfinite(x)) throw NumericError("non-finite weight in layer " + std::to_string(l));
        }
        for (double x : layer.bias) {
            if (!std::isfinite(x)) throw NumericError("non-finite bias in layer " + std::to_string(l));
        }
    }
}

ModelWeights init_weights(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("init_weights: need at least 2 dims");
    for (std::size_t d : dims) {
        if (d == 0) throw std::invalid_argument("init_weights: dims must be positive");
    }
    ModelWeights w;
    w.dims.assign(dims.begin(), dims.end());
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        DenseLayer layer{Matrix(dims[l], dims[l + 1]), std::vector<double>(dims[l + 1], 0.0)};
        for (double& x : layer.weight.data()) x = rng.uniform(-bound, bound);
        w.layers.push_back(std::move(layer));
    }
    return w;
}

ForwardResult mlp_forward(const ModelWeights& weights, const Matrix& features) {
    check_features(weights, features, "mlp_forward");
    ForwardResult out;
    Matrix h = features;
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        Matrix pre;
        kernels::gemm(h, weights.layers[l].weight, pre);
        add_bias(pre, weights.layers[l].bias);
        out.cache.inputs.push_back(std::move(h));
        if (l + 1 == weights.layers.size()) {
            out.logits = pre;
        } else {
            h = pre;
            relu_inplace(h);
        }
        out.cache.pre_activations.push_back(std::move(pre));
    }
    return out;
}

RowMasks RowMasks::uniform(ClassMask mask) {
    std::sort(mask.begin(), mask.end());
    RowMasks m;
    m.masks_.push_back(std::move(mask));
    return m;
}

RowMasks RowMasks::per_row(std::vector<ClassMask> masks, std::vector<std::uint32_t> row_to_mask) {
    for (auto idx : row_to_mask) {
        if (idx >= masks.size()) throw std::invalid_argument("RowMasks: mask index out of range");
    }
    for (auto& m : masks) std::sort(m.begin(), m.end());
    RowMasks out;
    out.masks_ = std::move(masks);
    out.row_to_mask_ = std::move(row_to_mask);
    return out;
}

const ClassMask* RowMasks::for_row(std::size_t row) const {
    if (masks_.empty()) return nullptr;
    if (row_to_mask_.empty()) return &masks_.front();
    return &masks_[row_to_mask_.at(row)];
}

RowMasks RowMasks::select_rows(std::size_t begin, std::size_t end) const {
    RowMasks out;
    out.masks_ = masks_;
    if (!row_to_mask_.empty()) out.row_to_mask_.assign(row_to_mask_.begin() + static_cast<std::ptrdiff_t>(begin),
                                                       row_to_mask_.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

LossResult cross_entropy(const Matrix& logits, std::span<const ClassId> labels, const RowMasks& masks) {
    const std::size_t n = logits.rows();
    const std::size_t c = logits.cols();
    if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count != logit rows");
    LossResult out;
    out.grad_logits = Matrix(n, c);
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> row_loss(n);
    std::vector<ClassId> all_classes;
    if (masks.unmasked()) {
        all_classes.resize(c);
        for (std::size_t k = 0; k < c; ++k) all_classes[k] = static_cast<ClassId>(k);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const ClassMask* m = masks.for_row(i);
        const ClassMask& cls = m ? *m : all_classes;
        const ClassId y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c || !std::binary_search(cls.begin(), cls.end(), y)) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " of row " + std::to_string(i) +
                                        " is outside its class mask");
        }
        auto z = logits.row(i);
        double peak = -std::numeric_limits<double>::infinity();
        for (ClassId k : cls) peak = std::max(peak, z[static_cast<std::size_t>(k)]);
        double denom = 0.0;
        for (ClassId k : cls) denom += std::exp(z[static_cast<std::size_t>(k)] - peak);
        const double log_denom = std::log(denom);
        row_loss[i] = peak + log_denom - z[static_cast<std::size_t>(y)];
        auto g = out.grad_logits.row(i);
        for (ClassId k : cls) {
            const auto kk = static_cast<std::size_t>(k);
            const double p = std::exp(z[kk] - peak - log_denom);
            g[kk] = (p - (k == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    double total = 0.0;
    for (double l : row_loss) total += l;
    out.loss = total * inv_n;
    return out;
}

LossResult cross_entropy(const Matrix& logits, std::span<const ClassId> labels, const std::optional<ClassMask>& mask) {
    return cross_entropy(logits, labels, mask ? RowMasks::uniform(*mask) : RowMasks::all());
}

Matrix masked_softmax(const Matrix& logits, const RowMasks& masks) {
    Matrix out(logits.rows(), logits.cols());
    std::vector<ClassId> all_classes(logits.cols());
    for (std::size_t k = 0; k < all_classes.size(); ++k) all_classes[k] = static_cast<ClassId>(k);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const ClassMask* m = masks.for_row(i);
        const ClassMask& cls = m ? *m : all_classes;
        auto z = logits.row(i);
        double peak = -std::numeric_limits<double>::infinity();
        for (ClassId k : cls) peak = std::max(peak, z[static_cast<std::size_t>(k)]);
        double denom = 0.0;
        for (ClassId k : cls) denom += std::exp(z[static_cast<std::size_t>(k)] - peak);
        for (ClassId k : cls) out(i, static_cast<std::size_t>(k)) = std::exp(z[static_cast<std::size_t>(k)] - peak) / denom;
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (!(replay_lambda >= 0.0)) throw ConfigError("replay_lambda must be nonnegative");
    for (std::size_t h : hidden_dims) {
        if (h == 0) throw ConfigError("hidden dims must be positive");
    }
}

LossAndGradients mlp_loss_and_gradients(const ModelWeights& weights, const LabeledBatch& new_batch,
                                        const LabeledBatch& replay_batch, double replay_lambda) {
    LossAndGradients out;
    out.grads = zero_like(weights);
    if (new_batch.rows() > 0) {
        auto fwd = mlp_forward(weights, new_batch.features);
        auto ce = cross_entropy(fwd.logits, new_batch.labels, new_batch.masks);
        out.loss_new = ce.loss;
        accumulate(out.grads, mlp_backward(weights, fwd.cache, std::move(ce.grad_logits)), 1.0);
    }
    if (replay_batch.rows() > 0) {
        auto fwd = mlp_forward(weights, replay_batch.features);
        auto ce = cross_entropy(fwd.logits, replay_batch.labels, replay_batch.masks);
        out.loss_replay = ce.loss;
        if (replay_lambda != 0.0) {
            accumulate(out.grads, mlp_backward(weights, fwd.cache, std::move(ce.grad_logits)), replay_lambda);
        }
    }
    out.total = out.loss_new + replay_lambda * out.loss_replay;
    return out;
}

void OptimizerState::step(ModelWeights& weights, const Gradients& grads, const TrainConfig& config) {
    const double lr = config.learning_rate;
    const double shrink = 1.0 - lr * config.weight_decay;
    ++steps_;
    if (config.optimizer == Optimizer::gradient_descent) {
        for (std::size_t l = 0; l < weights.layers.size(); ++l) {
            std::vector<double> step_w(grads[l].weight.data());
            for (double& s : step_w) s *= lr;
            std::vector<double> step_b(grads[l].bias);
            for (double& s : step_b) s *= lr;
            apply_decay_and_update(weights.layers[l].weight.data(), step_w, shrink);
            apply_decay_and_update(weights.layers[l].bias, step_b, shrink);
        }
        return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    if (first_.empty()) {
        first_ = zero_like(weights);
        second_ = zero_like(weights);
    }
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    auto adam = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                    std::vector<double>& v) {
        std::vector<double> step(param.size());
        for (std::size_t k = 0; k < param.size(); ++k) {
            m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
            step[k] = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
        }
        apply_decay_and_update(param, step, shrink);
    };
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        adam(weights.layers[l].weight.data(), grads[l].weight.data(), first_[l].weight.data(), second_[l].weight.data());
        adam(weights.layers[l].bias, grads[l].bias, first_[l].bias, second_[l].bias);
    }
}

StepLosses train_step(ModelWeights& weights, const LabeledBatch& new_batch, const LabeledBatch& replay_batch,
                      const TrainConfig& config, OptimizerState& state) {
    auto lg = mlp_loss_and_gradients(weights, new_batch, replay_batch, config.replay_lambda);
    state.step(weights, lg.grads, config);
    return {lg.loss_new, lg.loss_replay};
}

StepLosses train_epoch(ModelWeights& weights, const LabeledBatch& new_batch, const LabeledBatch& replay_batch,
                       const TrainConfig& config, OptimizerState& state) {
    const std::size_t n = new_batch.rows();
    if (config.batch_size == 0 || n <= config.batch_size) return train_step(weights, new_batch, replay_batch, config, state);
    StepLosses sum;
    std::size_t chunks = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
        const std::size_t end = std::min(n, begin + config.batch_size);
        LabeledBatch chunk;
        chunk.features = Matrix(end - begin, new_batch.features.cols());
        std::copy(new_batch.features.data().begin() + static_cast<std::ptrdiff_t>(begin * new_batch.features.cols()),
                  new_batch.features.data().begin() + static_cast<std::ptrdiff_t>(end * new_batch.features.cols()),
                  chunk.features.data().begin());
        chunk.labels.assign(new_batch.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                            new_batch.labels.begin() + static_cast<std::ptrdiff_t>(end));
        chunk.masks = new_batch.masks.select_rows(begin, end);
        auto s = train_step(weights, chunk, replay_batch, config, state);
        sum.loss_new += s.loss_new;
        sum.loss_replay += s.loss_replay;
        ++chunks;
    }
    sum.loss_new /= static_cast<double>(chunks);
    sum.loss_replay /= static_cast<double>(chunks);
    return sum;
}

NormalizedAdjacency::NormalizedAdjacency(const Graph& graph) {
    const std::size_t n = graph.num_nodes();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(graph.out_degree(i) + 1));
    matrix_.rows = n;
    matrix_.cols = n;
    matrix_.offsets.assign(n + 1, 0);
    matrix_.indices.reserve(graph.num_stored_edges() + n);
    matrix_.values.reserve(graph.num_stored_edges() + n);
    for (std::size_t i = 0; i < n; ++i) {
        bool self_done = false;
        auto push = [&](std::size_t j) {
            matrix_.indices.push_back(static_cast<NodeId>(j));
            matrix_.values.push_back(inv_sqrt[i] * inv_sqrt[j]);
        };
        for (NodeId v : graph.neighbors(i)) {
            if (!self_done && static_cast<std::size_t>(v) > i) {
                push(i);
                self_done = true;
            }
            push(static_cast<std::size_t>(v));
        }
        if (!self_done) push(i);
        matrix_.offsets[i + 1] = static_cast<EdgeOffset>(matrix_.indices.size());
    }
    if (graph.directed) transpose_ = matrix_.transposed();
}

Matrix NormalizedAdjacency::apply(const Matrix& h) const {
    Matrix out;
    kernels::spmm(matrix_, h, out);
    return out;
}

Matrix NormalizedAdjacency::apply_transpose(const Matrix& h) const {
    Matrix out;
    kernels::spmm(transpose_ ? *transpose_ : matrix_, h, out);
    return out;
}

NormalizedAdjacency normalized_adjacency(const Graph& graph) { return NormalizedAdjacency(graph); }

Matrix gcn_logits(const ModelWeights& weights, const NormalizedAdjacency& adjacency, const Matrix& features) {
    return gcn_forward(weights, adjacency, features).logits;
}

std::vector<ClassId> predict_classes(const Matrix& logits, const std::optional<ClassMask>& mask) {
    std::vector<ClassId> out(logits.rows());
    // Softmax is monotone, so the argmax of the masked logits is the argmax of the masked softmax.
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto z = logits.row(i);
        ClassId best = -1;
        double best_val = -std::numeric_limits<double>::infinity();
        auto consider = [&](ClassId k) {
            const double v = z[static_cast<std::size_t>(k)];
            if (best < 0 || v > best_val) {
                best = k;
                best_val = v;
            }
        };
        if (mask) {
            for (ClassId k : *mask) consider(k);
        } else {
            for (std::size_t k = 0; k < z.size(); ++k) consider(static_cast<ClassId>(k));
        }
        out[i] = best;
    }
    return out;
}

std::vector<ClassId> gcn_inference(const ModelWeights& weights, const NormalizedAdjacency& adjacency, const Matrix& features,
                                   const std::optional<ClassMask>& mask) {
    if (mask) {
        for (ClassId k : *mask) {
            if (k < 0 || static_cast<std::size_t>(k) >= weights.num_classes()) {
                throw std::invalid_argument("gcn_inference: mask class " + std::to_string(k) + " out of range");
            }
        }
    }
    return predict_classes(gcn_logits(weights, adjacency, features), mask);
}

std::vector<ClassId> gcn_inference(const ModelWeights& weights, const Graph& graph, const Matrix& features,
                                   const std::optional<ClassMask>& mask) {
    return gcn_inference(weights, NormalizedAdjacency(graph), features, mask);
}

LossAndGradients gcn_loss_and_gradients(const ModelWeights& weights, const GraphBatch& new_batch,
                                        const LabeledBatch& replay_batch, double replay_lambda) {
    if (!new_batch.adjacency || !new_batch.features) throw std::invalid_argument("gcn_loss_and_gradients: incomplete batch");
    if (new_batch.rows.size() != new_batch.labels.size()) throw std::invalid_argument("gcn batch rows != labels");
    LossAndGradients out;
    out.grads = zero_like(weights);
    if (!new_batch.rows.empty()) {
        auto fwd = gcn_forward(weights, *new_batch.adjacency, *new_batch.features);
        Matrix picked = gather_rows(fwd.logits, new_batch.rows);
        auto ce = cross_entropy(picked, new_batch.labels, new_batch.masks);
        out.loss_new = ce.loss;
        Matrix grad(fwd.logits.rows(), fwd.logits.cols());
        for (std::size_t k = 0; k < new_batch.rows.size(); ++k) {
            auto src = ce.grad_logits.row(k);
            auto dst = grad.row(static_cast<std::size_t>(new_batch.rows[k]));
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
        accumulate(out.grads, gcn_backward(weights, *new_batch.adjacency, fwd.cache, std::move(grad)), 1.0);
    }
    if (replay_batch.rows() > 0) {
        auto fwd = mlp_forward(weights, replay_batch.features);
        auto ce = cross_entropy(fwd.logits, replay_batch.labels, replay_batch.masks);
        out.loss_replay = ce.loss;
        if (replay_lambda != 0.0) {
            accumulate(out.grads, mlp_backward(weights, fwd.cache, std::move(ce.grad_logits)), replay_lambda);
        }
    }
    out.total = out.loss_new + replay_lambda * out.loss_replay;
    return out;
}

StepLosses gcn_train_step(ModelWeights& weights, const GraphBatch& new_batch, const LabeledBatch& replay_batch,
                          const TrainConfig& config, OptimizerState& state) {
    auto lg = gcn_loss_and_gradients(weights, new_batch, replay_batch, config.replay_lambda);
    state.step(weights, lg.grads, config);
    return {lg.loss_new, lg.loss_replay};
}

}  // namespace ecgl
