#include <doctest.h>

#include <algorithm>
#include <set>

#include "ecgl/continual_driver.hpp"
#include "ecgl/report.hpp"

using namespace ecgl;

namespace {

Dataset small_sbm(std::size_t tasks, double shift = 3.0) {
    SbmParams p;
    p.num_tasks = tasks;
    p.nodes_per_class = 40;
    p.feature_dim = 8;
    p.feature_shift = shift;
    p.p_intertask = 0.005;
    return generate_sbm(p);
}

RegimeConfig quick_config(Regime regime) {
    RegimeConfig c;
    c.regime = regime;
    c.sample_budget = 20;
    c.train.epochs = 60;
    c.train.hidden_dims = {16};
    return c;
}

// Records which original nodes were read during training at each task.
class Recorder : public AccessObserver {
public:
    void on_graph_rows(TaskId task, std::span<const NodeId> ids, bool labelled) override {
        auto& dst = labelled ? labelled_[task] : unlabelled_[task];
        dst.insert(ids.begin(), ids.end());
    }
    void on_buffer_rows(TaskId task, std::size_t count) override { buffer_[task] += count; }

    std::map<TaskId, std::set<NodeId>> labelled_, unlabelled_;
    std::map<TaskId, std::size_t> buffer_;
};

}  // namespace

TEST_CASE("class_mask_for examples") {
    SbmParams p;
    p.num_tasks = 4;
    p.classes_per_task = 5;
    p.nodes_per_class = 3;
    const Dataset ds = generate_sbm(p);
    CHECK(class_mask_for(ds.tasks, Regime::task_il, 2, 3) == ds.tasks.at(2).class_ids);
    CHECK(class_mask_for(ds.tasks, Regime::task_il, 2, 3).size() == 5);

    SbmParams q;
    q.nodes_per_class = 3;
    const Dataset two = generate_sbm(q);
    CHECK(class_mask_for(two.tasks, Regime::class_il, 0, 1).size() == 4);
    CHECK(class_mask_for(two.tasks, Regime::class_il, 0, 0) == class_mask_for(two.tasks, Regime::task_il, 0, 0));
    CHECK_THROWS(class_mask_for(two.tasks, Regime::task_il, 1, 0));
    CHECK_THROWS(class_mask_for(two.tasks, Regime::task_il, 0, 2));
}

TEST_CASE("names parse back") {
    for (Method m : {Method::ecgl, Method::ecgl_gcn_trainer, Method::finetune, Method::joint}) CHECK(parse_method(to_string(m)) == m);
    for (Regime r : {Regime::task_il, Regime::class_il}) CHECK(parse_regime(to_string(r)) == r);
    CHECK_THROWS_AS(parse_method("ewc"), ConfigError);
    CHECK_THROWS_AS(parse_regime("domain_il"), ConfigError);
}

TEST_CASE("default budget follows the graph size class") {
    CHECK(default_sample_budget(20'000) == 1000);
    CHECK(default_sample_budget(169'343) == 3000);
    CHECK(default_sample_budget(2'449'029) == 5000);
}

TEST_CASE("a single task gives a 1x1 matrix and one buffer update") {
    const Dataset ds = small_sbm(1);
    const RunRecord r = run_continual(ds.graph, ds.tasks, quick_config(Regime::task_il), Method::ecgl);
    CHECK(r.performance.size() == 1);
    CHECK(r.performance.populated(0, 0));
    CHECK(r.buffer_sizes == std::vector<std::size_t>{20});
    CHECK(r.timings.size() == 1);
    CHECK(r.timings[0].train_epoch_ms.size() == 60);
    CHECK_THROWS(r.performance.average_forgetting(0));
}

TEST_CASE("every method fills the lower triangle; buffers grow by the budget") {
    const Dataset ds = small_sbm(3);
    for (Method m : {Method::ecgl, Method::ecgl_gcn_trainer, Method::finetune, Method::joint}) {
        for (Regime g : {Regime::task_il, Regime::class_il}) {
            const RunRecord r = run_continual(ds.graph, ds.tasks, quick_config(g), m);
            for (std::size_t i = 0; i < 3; ++i) CHECK(r.performance.row_complete(i));
            const bool replays = m == Method::ecgl || m == Method::ecgl_gcn_trainer;
            for (std::size_t t = 0; t < 3; ++t) {
                CHECK(r.buffer_sizes[t] <= (t + 1) * 20);
                CHECK(r.buffer_sizes[t] == (replays ? (t + 1) * 20 : 0));
            }
            CHECK(r.convergence_flags == std::vector<bool>(3, true));
        }
    }
}

TEST_CASE("finetune forgets, replay and joint training mitigate it") {
    const Dataset ds = small_sbm(2, 4.0);
    const RegimeConfig c = quick_config(Regime::class_il);
    const RunRecord ft = run_continual(ds.graph, ds.tasks, c, Method::finetune);
    const RunRecord joint = run_continual(ds.graph, ds.tasks, c, Method::joint);
    const RunRecord ecgl = run_continual(ds.graph, ds.tasks, c, Method::ecgl);
    CHECK(ft.performance.at(1, 0) < ft.performance.at(0, 0));
    CHECK(joint.performance.average_accuracy(1) >= ft.performance.average_accuracy(1));
    CHECK(ecgl.performance.average_forgetting(1) > ft.performance.average_forgetting(1));
}

TEST_CASE("training reads only the current task plus the buffer") {
    const Dataset ds = small_sbm(3);
    for (Method m : {Method::ecgl, Method::ecgl_gcn_trainer, Method::finetune}) {
        Recorder rec;
        run_continual(ds.graph, ds.tasks, quick_config(Regime::task_il), m, &rec);
        for (TaskId t = 0; t < 3; ++t) {
            const auto& task = ds.tasks.at(t);
            const std::set<NodeId> train(task.train_ids.begin(), task.train_ids.end());
            const std::set<NodeId> nodes(task.node_ids.begin(), task.node_ids.end());
            CHECK(rec.labelled_[t] == train);
            for (NodeId v : rec.unlabelled_[t]) CHECK(nodes.count(v) == 1);
            const bool replays = m != Method::finetune;
            CHECK(rec.buffer_[t] == (replays ? static_cast<std::size_t>(t) * 20 : 0));
        }
    }
    Recorder joint;
    run_continual(ds.graph, ds.tasks, quick_config(Regime::task_il), Method::joint, &joint);
    CHECK(joint.labelled_[2].size() == ds.tasks.at(0).train_ids.size() * 3);
}

TEST_CASE("runs are reproducible bit for bit") {
    const Dataset ds = small_sbm(2);
    RegimeConfig c = quick_config(Regime::class_il);
    c.train.seed = 3;
    const RunRecord a = run_continual(ds.graph, ds.tasks, c, Method::ecgl);
    const RunRecord b = run_continual(ds.graph, ds.tasks, c, Method::ecgl);
    CHECK(run_record_json(a, 3, {}).dump() == run_record_json(b, 3, {}).dump());
    CHECK(a.weights == b.weights);
    c.train.seed = 4;
    const RunRecord other = run_continual(ds.graph, ds.tasks, c, Method::ecgl);
    CHECK_FALSE(other.weights == a.weights);
}

TEST_CASE("evaluation with prior edges runs and differs only through inter-task edges") {
    const Dataset ds = small_sbm(2);
    RegimeConfig c = quick_config(Regime::task_il);
    c.eval_include_prior_edges = true;
    const RunRecord r = run_continual(ds.graph, ds.tasks, c, Method::ecgl);
    CHECK(r.performance.row_complete(1));
}

TEST_CASE("invalid regime configs are rejected") {
    const Dataset ds = small_sbm(1);
    RegimeConfig c = quick_config(Regime::task_il);
    c.diversity_ratio = 1.5;
    CHECK_THROWS_AS(run_continual(ds.graph, ds.tasks, c, Method::ecgl), ConfigError);
    c = quick_config(Regime::task_il);
    c.train.epochs = 0;
    CHECK_THROWS_AS(run_continual(ds.graph, ds.tasks, c, Method::ecgl), ConfigError);
}

TEST_CASE("epoch benchmark yields one sample per phase per epoch") {
    const Dataset ds = small_sbm(1);
    RegimeConfig c = quick_config(Regime::task_il);
    c.train.epochs = 3;
    const auto mlp = benchmark_epochs(ds.graph, ds.tasks, c, Method::ecgl, 0);
    CHECK(mlp.samples.train_ms.size() == 3);
    CHECK(mlp.samples.inference_ms.size() == 3);
    CHECK(mlp.training_csr_traversals == 0);
    const auto gcn = benchmark_epochs(ds.graph, ds.tasks, c, Method::ecgl_gcn_trainer, 0);
    CHECK(gcn.training_csr_traversals > 0);
    CHECK_THROWS_AS(benchmark_epochs(ds.graph, ds.tasks, c, Method::joint, 0), ConfigError);
}
