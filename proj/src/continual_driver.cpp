#include "ecgl/continual_driver.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <memory>

#include "ecgl/op_counter.hpp"

namespace ecgl {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::size_t count_classes(const Graph& graph) {
    ClassId top = -1;
    for (ClassId c : graph.labels) top = std::max(top, c);
    return static_cast<std::size_t>(top + 1);
}

struct EvalView {
    Subgraph sub;
    std::unique_ptr<NormalizedAdjacency> adjacency;
    std::vector<NodeId> test_rows;  // local ids
    std::vector<ClassId> test_labels;
};

EvalView make_eval_view(const Graph& graph, const TaskSequence& tasks, TaskId t, bool include_prior_edges) {
    EvalView view{task_subgraph(graph, tasks, t, include_prior_edges), nullptr, {}, {}};
    view.adjacency = std::make_unique<NormalizedAdjacency>(view.sub.graph);
    for (NodeId v : tasks.at(t).test_ids) {
        view.test_rows.push_back(*view.sub.local_id(v));
        view.test_labels.push_back(graph.labels[static_cast<std::size_t>(v)]);
    }
    return view;
}

// Rows drawn from several tasks, each masked by its own task's classes (task-IL)
// or by every class seen so far (class-IL).
RowMasks masks_for_rows(const TaskSequence& tasks, Regime regime, std::span<const TaskId> origin, TaskId seen) {
    if (regime == Regime::class_il) return RowMasks::uniform(class_mask_for(tasks, regime, seen, seen));
    std::vector<ClassMask> masks;
    for (TaskId t = 0; t <= seen; ++t) masks.push_back(tasks.at(t).class_ids);
    std::vector<std::uint32_t> idx(origin.begin(), origin.end());
    return RowMasks::per_row(std::move(masks), std::move(idx));
}

LabeledBatch graph_rows_batch(const Graph& graph, std::span<const NodeId> ids, RowMasks masks) {
    LabeledBatch b;
    b.features = gather_rows(graph.features, ids);
    b.labels.reserve(ids.size());
    for (NodeId v : ids) b.labels.push_back(graph.labels[static_cast<std::size_t>(v)]);
    b.masks = std::move(masks);
    return b;
}

}  // namespace

std::string to_string(Regime regime) { return regime == Regime::task_il ? "task_il" : "class_il"; }

std::string to_string(Method method) {
    switch (method) {
        case Method::ecgl: return "ecgl";
        case Method::ecgl_gcn_trainer: return "ecgl_gcn_trainer";
        case Method::finetune: return "finetune";
        case Method::joint: return "joint";
    }
    return "unknown";
}

Regime parse_regime(const std::string& name) {
    if (name == "task_il") return Regime::task_il;
    if (name == "class_il") return Regime::class_il;
    throw ConfigError("unknown regime '" + name + "' (expected task_il or class_il)");
}

Method parse_method(const std::string& name) {
    if (name == "ecgl") return Method::ecgl;
    if (name == "ecgl_gcn_trainer") return Method::ecgl_gcn_trainer;
    if (name == "finetune") return Method::finetune;
    if (name == "joint") return Method::joint;
    throw ConfigError("unknown method '" + name + "' (expected ecgl, ecgl_gcn_trainer, finetune or joint)");
}

void RegimeConfig::validate() const {
    if (!(diversity_ratio >= 0.0 && diversity_ratio <= 1.0)) throw ConfigError("diversity_ratio must lie in [0, 1]");
    importance.validate();
    train.validate();
}

std::size_t default_sample_budget(std::size_t num_nodes) {
    if (num_nodes < 100'000) return 1000;
    if (num_nodes < 200'000) return 3000;
    return 5000;
}

ClassMask class_mask_for(const TaskSequence& tasks, Regime regime, TaskId task_eval, TaskId tasks_seen) {
    if (task_eval < 0 || tasks_seen < 0 || task_eval > tasks_seen || static_cast<std::size_t>(tasks_seen) >= tasks.size()) {
        throw std::invalid_argument("class_mask_for: need 0 <= task_eval <= tasks_seen < num_tasks");
    }
    if (regime == Regime::task_il) return tasks.at(task_eval).class_ids;
    ClassMask out;
    for (TaskId t = 0; t <= tasks_seen; ++t) {
        const auto& c = tasks.at(t).class_ids;
        out.insert(out.end(), c.begin(), c.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

RunRecord run_continual(const Graph& graph, const TaskSequence& tasks, const RegimeConfig& config, Method method,
                        AccessObserver* observer) {
    config.validate();
    const std::size_t num_tasks = tasks.size();
    if (num_tasks == 0) throw DataError("task sequence is empty");

    std::vector<std::size_t> dims{graph.feature_dim()};
    dims.insert(dims.end(), config.train.hidden_dims.begin(), config.train.hidden_dims.end());
    dims.push_back(count_classes(graph));

    RunRecord record;
    record.method = method;
    record.regime = config.regime;
    record.performance = PerformanceMatrix(num_tasks);

    const bool replays = method == Method::ecgl || method == Method::ecgl_gcn_trainer;
    ModelWeights weights = init_weights(dims, config.train.seed);
    MemoryBuffer buffer(config.sample_budget, config.diversity_ratio);
    std::vector<std::optional<EvalView>> eval_views(num_tasks);

    for (std::size_t ti = 0; ti < num_tasks; ++ti) {
        const auto t = static_cast<TaskId>(ti);
        const TaskView& task = tasks.at(t);
        TaskTiming timing;

        // Only the current task's subgraph is visible during training and sampling.
        Subgraph current = task_subgraph(graph, tasks, t, false);

        if (method == Method::joint) weights = init_weights(dims, config.train.seed);
        OptimizerState optimizer;
        StepLosses last;

        LabeledBatch replay;
        if (replays && !buffer.empty()) {
            const auto origin = buffer.origin_tasks();
            replay.features = buffer.feature_matrix();
            replay.labels = buffer.labels();
            replay.masks = masks_for_rows(tasks, config.regime, origin, t);
            if (observer) observer->on_buffer_rows(t, buffer.size());
        }

        if (method == Method::ecgl_gcn_trainer) {
            NormalizedAdjacency adjacency(current.graph);
            GraphBatch batch;
            batch.adjacency = &adjacency;
            batch.features = &current.graph.features;
            for (NodeId v : task.train_ids) {
                batch.rows.push_back(*current.local_id(v));
                batch.labels.push_back(graph.labels[static_cast<std::size_t>(v)]);
            }
            batch.masks = RowMasks::uniform(class_mask_for(tasks, config.regime, t, t));
            if (observer) {
                observer->on_graph_rows(t, current.original_ids, false);
                observer->on_graph_rows(t, task.train_ids, true);
            }
            for (std::size_t e = 0; e < config.train.epochs; ++e) {
                const auto start = Clock::now();
                last = gcn_train_step(weights, batch, replay, config.train, optimizer);
                timing.train_epoch_ms.push_back(elapsed_ms(start));
            }
        } else {
            LabeledBatch fresh;
            if (method == Method::joint) {
                std::vector<NodeId> ids;
                std::vector<TaskId> origin;
                for (TaskId p = 0; p <= t; ++p) {
                    const auto& train = tasks.at(p).train_ids;
                    ids.insert(ids.end(), train.begin(), train.end());
                    origin.insert(origin.end(), train.size(), p);
                }
                fresh = graph_rows_batch(graph, ids, masks_for_rows(tasks, config.regime, origin, t));
                if (observer) observer->on_graph_rows(t, ids, true);
            } else {
                fresh = graph_rows_batch(graph, task.train_ids, RowMasks::uniform(class_mask_for(tasks, config.regime, t, t)));
                if (observer) observer->on_graph_rows(t, task.train_ids, true);
            }
            for (std::size_t e = 0; e < config.train.epochs; ++e) {
                const auto start = Clock::now();
                last = train_epoch(weights, fresh, replay, config.train, optimizer);
                timing.train_epoch_ms.push_back(elapsed_ms(start));
            }
        }
        weights.validate();
        record.final_loss_new.push_back(last.loss_new);
        record.final_loss_replay.push_back(last.loss_replay);

        bool converged = true;
        if (replays && config.sample_budget > 0) {
            const auto start = Clock::now();
            const auto importance = importance_scores(current.graph, current.graph.features, config.importance);
            const auto diversity = diversity_scores(current.graph, current.graph.features);
            ReplaySelection selection;
            buffer = update_memory(std::move(buffer), graph, task, importance.scores, diversity, config.sample_budget,
                                   config.diversity_ratio, &selection);
            converged = importance.converged;
            timing.sampler_ms = elapsed_ms(start);
            if (config.selection_dump_dir) {
                std::ofstream csv(*config.selection_dump_dir / ("selection_task" + std::to_string(t) + ".csv"));
                if (!csv) throw DataError("cannot write selection dump into " + config.selection_dump_dir->string());
                write_selection_csv(csv, task, importance.scores, diversity, selection);
            }
        }
        record.convergence_flags.push_back(converged);
        record.buffer_sizes.push_back(buffer.size());

        const auto start = Clock::now();
        for (TaskId tt = 0; tt <= t; ++tt) {
            auto& view = eval_views[static_cast<std::size_t>(tt)];
            if (!view) view = make_eval_view(graph, tasks, tt, config.eval_include_prior_edges);
            const Matrix logits = gcn_logits(weights, *view->adjacency, view->sub.graph.features);
            const Matrix test_logits = gather_rows(logits, view->test_rows);
            const auto predicted = predict_classes(test_logits, class_mask_for(tasks, config.regime, tt, t));
            std::size_t correct = 0;
            for (std::size_t k = 0; k < predicted.size(); ++k) correct += predicted[k] == view->test_labels[k] ? 1 : 0;
            const double accuracy =
                predicted.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted.size());
            record.performance.record(ti, static_cast<std::size_t>(tt), accuracy);
        }
        timing.inference_ms = elapsed_ms(start);
        record.timings.push_back(std::move(timing));
    }
    record.weights = std::move(weights);
    return record;
}

EpochBenchmark benchmark_epochs(const Graph& graph, const TaskSequence& tasks, const RegimeConfig& config, Method method,
                                TaskId task_id) {
    config.validate();
    if (method != Method::ecgl && method != Method::ecgl_gcn_trainer) {
        throw ConfigError("benchmark compares ecgl and ecgl_gcn_trainer only");
    }
    const TaskView& task = tasks.at(task_id);
    std::vector<std::size_t> dims{graph.feature_dim()};
    dims.insert(dims.end(), config.train.hidden_dims.begin(), config.train.hidden_dims.end());
    dims.push_back(count_classes(graph));
    ModelWeights weights = init_weights(dims, config.train.seed);
    OptimizerState optimizer;

    Subgraph current = task_subgraph(graph, tasks, task_id, false);
    NormalizedAdjacency adjacency(current.graph);
    const ClassMask mask = class_mask_for(tasks, config.regime, task_id, task_id);

    GraphBatch graph_batch;
    LabeledBatch fresh;
    if (method == Method::ecgl_gcn_trainer) {
        graph_batch.adjacency = &adjacency;
        graph_batch.features = &current.graph.features;
        for (NodeId v : task.train_ids) {
            graph_batch.rows.push_back(*current.local_id(v));
            graph_batch.labels.push_back(graph.labels[static_cast<std::size_t>(v)]);
        }
        graph_batch.masks = RowMasks::uniform(mask);
    } else {
        fresh = graph_rows_batch(graph, task.train_ids, RowMasks::uniform(mask));
    }
    const LabeledBatch no_replay;

    EpochBenchmark out;
    for (std::size_t e = 0; e < config.train.epochs; ++e) {
        const auto before = csr_traversals();
        auto start = Clock::now();
        if (method == Method::ecgl_gcn_trainer) {
            gcn_train_step(weights, graph_batch, no_replay, config.train, optimizer);
        } else {
            train_epoch(weights, fresh, no_replay, config.train, optimizer);
        }
        out.samples.train_ms.push_back(elapsed_ms(start));
        out.training_csr_traversals += csr_traversals() - before;

        start = Clock::now();
        const auto predicted = gcn_inference(weights, adjacency, current.graph.features, mask);
        out.samples.inference_ms.push_back(elapsed_ms(start));
        if (predicted.size() != current.graph.num_nodes()) throw NumericError("inference produced a short prediction vector");
    }
    weights.validate();
    return out;
}

}  // namespace ecgl
