#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgl/graph_store.hpp"
#include "ecgl/kernels.hpp"
#include "ecgl/matrix.hpp"

namespace ecgl {

struct DenseLayer {
    Matrix weight;  // in_dim x out_dim
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Parameters shared by the feature-only MLP and its message-passing GCN
/// counterpart. dims = (feature_dim, hidden..., num_classes).
struct ModelWeights {
    std::vector<std::size_t> dims;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return dims.front(); }
    std::size_t num_classes() const { return dims.back(); }
    void validate() const;

    bool operator==(const ModelWeights&) const = default;
};

/// Gradients have the same layout as the weights they belong to.
using Gradients = std::vector<DenseLayer>;

/// Glorot-uniform weights, zero biases.
ModelWeights init_weights(std::span<const std::size_t> dims, std::uint64_t seed);

struct ForwardCache {
    std::vector<Matrix> inputs;          // H^(l-1) for each layer
    std::vector<Matrix> pre_activations; // before ReLU; the last one is the logits
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// H <- relu(H W + b) per hidden layer; the last layer is linear.
ForwardResult mlp_forward(const ModelWeights& weights, const Matrix& features);

/// Ascending list of admissible class ids.
using ClassMask = std::vector<ClassId>;

/// Per-row restriction of the softmax to a class subset. Default: all classes.
class RowMasks {
public:
    RowMasks() = default;
    static RowMasks all() { return {}; }
    static RowMasks uniform(ClassMask mask);
    static RowMasks per_row(std::vector<ClassMask> masks, std::vector<std::uint32_t> row_to_mask);

    bool unmasked() const noexcept { return masks_.empty(); }
    /// nullptr when every class is admissible.
    const ClassMask* for_row(std::size_t row) const;
    RowMasks select_rows(std::size_t begin, std::size_t end) const;

private:
    std::vector<ClassMask> masks_;
    std::vector<std::uint32_t> row_to_mask_;  // empty with one mask: it applies to every row
};

struct LossResult {
    double loss = 0.0;   // mean negative log-likelihood
    Matrix grad_logits;  // d loss / d logits, zero outside each row's mask
};

/// Log-sum-exp stabilized softmax cross entropy. Throws std::invalid_argument
/// when a label is outside its row's mask.
LossResult cross_entropy(const Matrix& logits, std::span<const ClassId> labels, const RowMasks& masks);
LossResult cross_entropy(const Matrix& logits, std::span<const ClassId> labels, const std::optional<ClassMask>& mask);

/// Softmax over each row's admissible classes; 0 elsewhere.
Matrix masked_softmax(const Matrix& logits, const RowMasks& masks);

enum class Optimizer { gradient_descent, adam };

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    double weight_decay = 5e-4;
    double replay_lambda = 1.0;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::gradient_descent;
    std::size_t batch_size = 0;  // 0: full batch
    std::vector<std::size_t> hidden_dims{256};

    void validate() const;
};

struct LabeledBatch {
    Matrix features;
    std::vector<ClassId> labels;
    RowMasks masks;

    std::size_t rows() const noexcept { return labels.size(); }
};

struct LossAndGradients {
    double loss_new = 0.0;
    double loss_replay = 0.0;
    double total = 0.0;  // loss_new + lambda * loss_replay
    Gradients grads;
};

/// Combined objective of the new-task rows and the replayed rows through the MLP.
LossAndGradients mlp_loss_and_gradients(const ModelWeights& weights, const LabeledBatch& new_batch,
                                        const LabeledBatch& replay_batch, double replay_lambda);

/// Applies gradients with decoupled weight decay. Adam keeps its moments here.
class OptimizerState {
public:
    void step(ModelWeights& weights, const Gradients& grads, const TrainConfig& config);

private:
    Gradients first_;
    Gradients second_;
    std::uint64_t steps_ = 0;
};

struct StepLosses {
    double loss_new = 0.0;
    double loss_replay = 0.0;
};

/// One full-batch update of the MLP on L_new + lambda * L_replay.
StepLosses train_step(ModelWeights& weights, const LabeledBatch& new_batch, const LabeledBatch& replay_batch,
                      const TrainConfig& config, OptimizerState& state);

/// One pass over the new rows: a single full-batch step, or row chunks of
/// config.batch_size each paired with the whole replay batch.
StepLosses train_epoch(ModelWeights& weights, const LabeledBatch& new_batch, const LabeledBatch& replay_batch,
                       const TrainConfig& config, OptimizerState& state);

/// D^-1/2 (A + I) D^-1/2 with D the degree of A + I, stored in CSR with the self-loops.
class NormalizedAdjacency {
public:
    explicit NormalizedAdjacency(const Graph& graph);

    std::size_t size() const noexcept { return matrix_.rows; }
    const SparseMatrix& matrix() const noexcept { return matrix_; }
    Matrix apply(const Matrix& h) const;
    Matrix apply_transpose(const Matrix& h) const;

private:
    SparseMatrix matrix_;
    std::optional<SparseMatrix> transpose_;  // only for directed graphs
};

NormalizedAdjacency normalized_adjacency(const Graph& graph);

/// GCN forward with the same weights: H <- sigma(A_norm H W + b).
Matrix gcn_logits(const ModelWeights& weights, const NormalizedAdjacency& adjacency, const Matrix& features);

/// Argmax of the masked softmax; ties resolve to the smaller class id.
std::vector<ClassId> predict_classes(const Matrix& logits, const std::optional<ClassMask>& mask);

std::vector<ClassId> gcn_inference(const ModelWeights& weights, const NormalizedAdjacency& adjacency, const Matrix& features,
                                   const std::optional<ClassMask>& mask);
std::vector<ClassId> gcn_inference(const ModelWeights& weights, const Graph& graph, const Matrix& features,
                                   const std::optional<ClassMask>& mask);

/// Supervision for message-passing training: the forward pass runs over every
/// node of the graph, the loss only over `rows`.
struct GraphBatch {
    const NormalizedAdjacency* adjacency = nullptr;
    const Matrix* features = nullptr;
    std::vector<NodeId> rows;  // local ids carrying labels
    std::vector<ClassId> labels;
    RowMasks masks;
};

/// Objective of the message-passing trainer: GCN loss on the graph rows plus
/// lambda times the feature-only loss on the replayed rows.
LossAndGradients gcn_loss_and_gradients(const ModelWeights& weights, const GraphBatch& new_batch,
                                        const LabeledBatch& replay_batch, double replay_lambda);

StepLosses gcn_train_step(ModelWeights& weights, const GraphBatch& new_batch, const LabeledBatch& replay_batch,
                          const TrainConfig& config, OptimizerState& state);

/// Binary checkpoint: u64 layer-dim count, u64 dims, then per layer the weight
/// matrix row-major followed by the bias, as little-endian f64. The JSON
/// sidecar (<path>.json) records dims, seed and the caller's config object.
void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights, std::uint64_t seed,
                     const std::string& config_json);
ModelWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace ecgl
