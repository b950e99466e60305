#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgl/efficient_learner.hpp"
#include "ecgl/evaluation.hpp"
#include "ecgl/graph_store.hpp"
#include "ecgl/replay_sampler.hpp"

namespace ecgl {

enum class Regime { task_il, class_il };

/// ecgl: MLP training + replay; ecgl_gcn_trainer: same replay, message passing
/// kept in training; finetune: no replay; joint: retrain on all seen tasks.
enum class Method { ecgl, ecgl_gcn_trainer, finetune, joint };

std::string to_string(Regime regime);
std::string to_string(Method method);
Regime parse_regime(const std::string& name);
Method parse_method(const std::string& name);

struct RegimeConfig {
    Regime regime = Regime::task_il;
    std::size_t sample_budget = 1000;  // per task
    double diversity_ratio = 0.25;
    ImportanceConfig importance;
    TrainConfig train;
    bool eval_include_prior_edges = false;
    std::optional<std::filesystem::path> selection_dump_dir;  // per-task node score CSVs

    void validate() const;
};

/// Sample budget matching the size class of the graph: 1000 below 100k nodes,
/// 3000 below 200k, 5000 above.
std::size_t default_sample_budget(std::size_t num_nodes);

struct TaskTiming {
    std::vector<double> train_epoch_ms;
    double sampler_ms = 0.0;
    double inference_ms = 0.0;
};

struct RunRecord {
    Method method = Method::ecgl;
    Regime regime = Regime::task_il;
    PerformanceMatrix performance;
    std::vector<TaskTiming> timings;
    std::vector<std::size_t> buffer_sizes;    // after each task
    std::vector<bool> convergence_flags;      // importance iteration converged (true when not sampled)
    std::vector<double> final_loss_new;       // last-epoch losses per task
    std::vector<double> final_loss_replay;
    ModelWeights weights;  // after the last task
};

/// Task-IL: the evaluated task's classes. Class-IL: every class of tasks 0..tasks_seen.
ClassMask class_mask_for(const TaskSequence& tasks, Regime regime, TaskId task_eval, TaskId tasks_seen);

/// Receives every set of original node ids whose data enter a training step.
class AccessObserver {
public:
    virtual ~AccessObserver() = default;
    /// `labelled` rows contribute labels to the loss; unlabelled ones only
    /// contribute features through message passing. Buffer rows are reported
    /// separately because they are copies, not graph reads.
    virtual void on_graph_rows(TaskId task, std::span<const NodeId> node_ids, bool labelled) = 0;
    virtual void on_buffer_rows(TaskId task, std::size_t count) = 0;
};

RunRecord run_continual(const Graph& graph, const TaskSequence& tasks, const RegimeConfig& config, Method method,
                        AccessObserver* observer = nullptr);

struct EpochBenchmark {
    PhaseSamples samples;                       // one train and one inference sample per epoch
    std::uint64_t training_csr_traversals = 0;  // sparse passes counted inside the timed training steps
};

/// Trains a fresh model on one task for config.train.epochs epochs, timing each
/// training step and a full inference pass over the task subgraph after it.
/// Only ecgl and ecgl_gcn_trainer are meaningful here; no replay is involved.
EpochBenchmark benchmark_epochs(const Graph& graph, const TaskSequence& tasks, const RegimeConfig& config, Method method,
                                TaskId task);

}  // namespace ecgl
