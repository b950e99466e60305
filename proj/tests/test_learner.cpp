#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "ecgl/efficient_learner.hpp"
#include "ecgl/op_counter.hpp"
#include "oracles.hpp"

using namespace ecgl;

namespace {

std::vector<ClassId> random_labels(std::size_t n, const std::vector<ClassId>& allowed, Rng& rng) {
    std::vector<ClassId> out(n);
    for (auto& y : out) y = allowed[rng.index(allowed.size())];
    return out;
}

ModelWeights random_weights(std::vector<std::size_t> dims, Rng& rng, double scale = 0.5) {
    ModelWeights w = init_weights(dims, rng.next_u64());
    for (auto& layer : w.layers) {
        for (double& x : layer.weight.data()) x = scale * rng.normal();
        for (double& b : layer.bias) b = 0.1 * rng.normal();
    }
    return w;
}

// Every parameter of `w` in a fixed order, so analytic and numeric gradients line up.
std::vector<double*> parameters(ModelWeights& w) {
    std::vector<double*> out;
    for (auto& layer : w.layers) {
        for (double& x : layer.weight.data()) out.push_back(&x);
        for (double& b : layer.bias) out.push_back(&b);
    }
    return out;
}

std::vector<double> flatten(const Gradients& g) {
    std::vector<double> out;
    for (const auto& layer : g) {
        out.insert(out.end(), layer.weight.data().begin(), layer.weight.data().end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

// Worst relative error of `analytic` against central differences of `loss`.
double worst_fd_error(ModelWeights w, const std::vector<double>& analytic, const std::function<double(const ModelWeights&)>& loss,
                      double h = 1e-5) {
    auto params = parameters(w);
    REQUIRE(params.size() == analytic.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double saved = *params[k];
        *params[k] = saved + h;
        const double up = loss(w);
        *params[k] = saved - h;
        const double down = loss(w);
        *params[k] = saved;
        worst = std::max(worst, oracle::relative_error(analytic[k], (up - down) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST_CASE("init_weights examples") {
    const std::vector<std::size_t> d43{4, 3};
    const ModelWeights w = init_weights(d43, 5);
    REQUIRE(w.layers.size() == 1);
    CHECK(w.layers[0].weight.rows() == 4);
    CHECK(w.layers[0].weight.cols() == 3);
    CHECK(w.layers[0].bias == std::vector<double>(3, 0.0));
    CHECK(init_weights(d43, 5) == w);
    CHECK_FALSE(init_weights(d43, 6) == w);

    const std::vector<std::size_t> d{8, 16, 5};
    const ModelWeights v = init_weights(d, 1);
    const double bound = std::sqrt(6.0 / 24.0);
    double mx = 0.0;
    for (double x : v.layers[0].weight.data()) mx = std::max(mx, std::abs(x));
    CHECK(mx <= bound);
    CHECK(mx > 0.5 * bound);
    CHECK_THROWS_AS(init_weights(std::vector<std::size_t>{3}, 0), std::invalid_argument);
}

TEST_CASE("mlp_forward examples") {
    Rng rng(3);
    const Matrix x = oracle::random_matrix(6, 4, rng);
    ModelWeights zero = init_weights(std::vector<std::size_t>{4, 5, 3}, 0);
    for (auto& l : zero.layers) std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    const Matrix zero_logits = mlp_forward(zero, x).logits;
    for (double v : zero_logits.data()) CHECK(v == 0.0);

    ModelWeights id = init_weights(std::vector<std::size_t>{4, 4}, 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) id.layers[0].weight(i, j) = i == j ? 1.0 : 0.0;
    CHECK(mlp_forward(id, x).logits == x);

    const ModelWeights w = random_weights({4, 7, 3}, rng);
    const auto got = mlp_forward(w, x).logits;
    const auto want = oracle::forward(w, x);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(got(i, j) == doctest::Approx(want[i][j]).epsilon(1e-13));
    CHECK_THROWS_AS(mlp_forward(w, Matrix(2, 5)), std::invalid_argument);
}

TEST_CASE("cross_entropy examples") {
    const Matrix uniform(3, 5, 0.7);
    const std::vector<ClassId> labels{0, 2, 4};
    CHECK(cross_entropy(uniform, labels, std::nullopt).loss == doctest::Approx(std::log(5.0)));
    CHECK(cross_entropy(uniform, labels, ClassMask{0, 2, 4}).loss == doctest::Approx(std::log(3.0)));
    const std::vector<ClassId> one{2};
    CHECK(cross_entropy(Matrix(1, 5), one, ClassMask{2}).loss == doctest::Approx(0.0));

    Matrix sat(1, 3);
    sat(0, 1) = 1000.0;
    const std::vector<ClassId> y1{1};
    const auto ce = cross_entropy(sat, y1, std::nullopt);
    CHECK(ce.loss == doctest::Approx(0.0));
    CHECK(std::isfinite(ce.loss));

    CHECK_THROWS_AS(cross_entropy(uniform, labels, ClassMask{0, 2}), std::invalid_argument);

    const auto masked = cross_entropy(uniform, labels, ClassMask{0, 2, 4});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(masked.grad_logits(i, 1) == 0.0);
        CHECK(masked.grad_logits(i, 3) == 0.0);
    }
}

TEST_CASE("cross_entropy gradient matches finite differences and softmax rows sum to 1") {
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix z = oracle::random_matrix(7, 6, rng, 2.0);
        const ClassMask mask{1, 2, 4};
        const auto labels = random_labels(7, mask, rng);
        const auto ce = cross_entropy(z, labels, mask);
        CHECK(ce.loss >= 0.0);
        const std::vector<std::vector<ClassId>> m{mask};
        for (std::size_t i = 0; i < 7; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                const double saved = z(i, j);
                z(i, j) = saved + 1e-5;
                const double up = oracle::nll(oracle::to_dense(z), labels, m);
                z(i, j) = saved - 1e-5;
                const double down = oracle::nll(oracle::to_dense(z), labels, m);
                z(i, j) = saved;
                CHECK(oracle::relative_error(ce.grad_logits(i, j), (up - down) / 2e-5) <= 1e-4);
            }
        }
        for (const RowMasks& rm : {RowMasks::all(), RowMasks::uniform(mask), RowMasks::per_row({{0}, {3, 5}}, {0, 1, 0, 1, 1, 0, 1})}) {
            const Matrix p = masked_softmax(z, rm);
            for (std::size_t i = 0; i < 7; ++i) {
                double s = 0.0;
                for (double v : p.row(i)) s += v;
                CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("combined loss gradients match finite differences") {
    Rng rng(2024);
    const std::size_t dim = 5;
    ModelWeights w = random_weights({dim, 6, 4}, rng);
    LabeledBatch fresh{oracle::random_matrix(12, dim, rng), {}, RowMasks::uniform({2, 3})};
    fresh.labels = random_labels(12, {2, 3}, rng);
    LabeledBatch replay{oracle::random_matrix(8, dim, rng), {}, RowMasks::per_row({{0, 1}, {2, 3}}, {0, 0, 1, 0, 1, 1, 0, 0})};
    replay.labels = {0, 1, 2, 1, 3, 2, 0, 0};
    const std::vector<std::vector<ClassId>> fresh_masks{{2, 3}};
    const std::vector<std::vector<ClassId>> replay_masks{{0, 1}, {0, 1}, {2, 3}, {0, 1}, {2, 3}, {2, 3}, {0, 1}, {0, 1}};

    for (double lambda : {1.0, 0.3, 0.0}) {
        const auto lg = mlp_loss_and_gradients(w, fresh, replay, lambda);
        auto loss = [&](const ModelWeights& m) {
            return oracle::nll(oracle::forward(m, fresh.features), fresh.labels, fresh_masks) +
                   lambda * oracle::nll(oracle::forward(m, replay.features), replay.labels, replay_masks);
        };
        CHECK(lg.total == doctest::Approx(loss(w)).epsilon(1e-12));
        CHECK(worst_fd_error(w, flatten(lg.grads), loss) <= 1e-4);
    }
}

TEST_CASE("message-passing trainer gradients match finite differences") {
    Rng rng(8);
    const Graph g = oracle::random_graph(15, 0.25, false, 4, rng);
    const NormalizedAdjacency adj(g);
    const auto dense_adj = oracle::dense_normalized_adjacency(g);
    ModelWeights w = random_weights({4, 5, 3}, rng);
    GraphBatch batch{&adj, &g.features, {0, 3, 4, 9, 14}, {0, 1, 2, 1, 0}, RowMasks::all()};
    LabeledBatch replay{oracle::random_matrix(4, 4, rng), {2, 2, 1, 0}, RowMasks::all()};
    const auto lg = gcn_loss_and_gradients(w, batch, replay, 1.0);
    auto loss = [&](const ModelWeights& m) {
        const auto logits = oracle::forward(m, g.features, dense_adj);
        oracle::Dense picked;
        for (NodeId r : batch.rows) picked.push_back(logits[static_cast<std::size_t>(r)]);
        return oracle::nll(picked, batch.labels, {{}}) + oracle::nll(oracle::forward(m, replay.features), replay.labels, {{}});
    };
    CHECK(lg.total == doctest::Approx(loss(w)).epsilon(1e-12));
    CHECK(worst_fd_error(w, flatten(lg.grads), loss) <= 1e-4);

    // Directed graphs need the transposed operator on the way back.
    const Graph d = oracle::random_graph(12, 0.3, true, 4, rng);
    const NormalizedAdjacency dadj(d);
    const auto ddense = oracle::dense_normalized_adjacency(d);
    GraphBatch dbatch{&dadj, &d.features, {1, 2, 7}, {0, 2, 1}, RowMasks::all()};
    const auto dl = gcn_loss_and_gradients(w, dbatch, LabeledBatch{}, 1.0);
    auto dloss = [&](const ModelWeights& m) {
        const auto logits = oracle::forward(m, d.features, ddense);
        oracle::Dense picked;
        for (NodeId r : dbatch.rows) picked.push_back(logits[static_cast<std::size_t>(r)]);
        return oracle::nll(picked, dbatch.labels, {{}});
    };
    CHECK(worst_fd_error(w, flatten(dl.grads), dloss) <= 1e-4);
}

TEST_CASE("train_step behaviour") {
    Rng rng(12);
    const ModelWeights start = random_weights({3, 4, 2}, rng);
    LabeledBatch fresh{oracle::random_matrix(10, 3, rng), random_labels(10, {0, 1}, rng), RowMasks::all()};
    TrainConfig cfg;
    cfg.replay_lambda = 0.0;

    SUBCASE("lambda 0 ignores replay contents") {
        ModelWeights a = start, b = start, c = start;
        OptimizerState sa, sb, sc;
        train_step(a, fresh, LabeledBatch{}, cfg, sa);
        LabeledBatch junk{oracle::random_matrix(5, 3, rng), random_labels(5, {0, 1}, rng), RowMasks::all()};
        train_step(b, fresh, junk, cfg, sb);
        CHECK(a == b);
        // Plain supervised step by hand.
        const auto lg = mlp_loss_and_gradients(start, fresh, LabeledBatch{}, 0.0);
        for (std::size_t l = 0; l < c.layers.size(); ++l) {
            auto& wd = c.layers[l].weight.data();
            for (std::size_t k = 0; k < wd.size(); ++k)
                wd[k] = wd[k] * (1 - cfg.learning_rate * cfg.weight_decay) - cfg.learning_rate * lg.grads[l].weight.data()[k];
            auto& bd = c.layers[l].bias;
            for (std::size_t k = 0; k < bd.size(); ++k)
                bd[k] = bd[k] * (1 - cfg.learning_rate * cfg.weight_decay) - cfg.learning_rate * lg.grads[l].bias[k];
        }
        CHECK(a == c);
    }
    SUBCASE("default lambda is 1 and both losses contribute") {
        CHECK(TrainConfig{}.replay_lambda == 1.0);
        LabeledBatch replay{oracle::random_matrix(5, 3, rng), random_labels(5, {0, 1}, rng), RowMasks::all()};
        const auto both = mlp_loss_and_gradients(start, fresh, replay, 1.0);
        CHECK(both.total == doctest::Approx(both.loss_new + both.loss_replay));
        const auto only_new = mlp_loss_and_gradients(start, fresh, LabeledBatch{}, 1.0);
        const auto only_replay = mlp_loss_and_gradients(start, LabeledBatch{}, replay, 1.0);
        const auto f = flatten(both.grads), a = flatten(only_new.grads), b = flatten(only_replay.grads);
        for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == doctest::Approx(a[k] + b[k]).epsilon(1e-12));
    }
    SUBCASE("loss decreases on a separable toy set") {
        Matrix x(40, 2);
        std::vector<ClassId> y(40);
        for (std::size_t i = 0; i < 40; ++i) {
            y[i] = static_cast<ClassId>(i % 2);
            x(i, 0) = (y[i] ? 2.0 : -2.0) + 0.3 * rng.normal();
            x(i, 1) = rng.normal();
        }
        LabeledBatch toy{x, y, RowMasks::all()};
        for (Optimizer opt : {Optimizer::gradient_descent, Optimizer::adam}) {
            ModelWeights w = init_weights(std::vector<std::size_t>{2, 8, 2}, 4);
            TrainConfig c;
            c.optimizer = opt;
            c.learning_rate = opt == Optimizer::adam ? 0.01 : 0.1;
            OptimizerState s;
            const double first = train_step(w, toy, {}, c, s).loss_new;
            double last = first;
            for (int e = 1; e < 200; ++e) last = train_step(w, toy, {}, c, s).loss_new;
            CHECK(last < first);
            CHECK(last < 0.1);
        }
    }
    SUBCASE("mini-batches cover every row once per epoch") {
        ModelWeights a = start;
        OptimizerState s;
        TrainConfig c = cfg;
        c.batch_size = 4;
        const auto out = train_epoch(a, fresh, {}, c, s);
        CHECK(out.loss_new > 0.0);
        CHECK_FALSE(a == start);
    }
    SUBCASE("invalid configs") {
        TrainConfig c;
        c.epochs = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = {};
        c.learning_rate = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = {};
        c.replay_lambda = -1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_CASE("MLP training performs no sparse traversal") {
    Rng rng(5);
    ModelWeights w = random_weights({6, 8, 3}, rng);
    LabeledBatch fresh{oracle::random_matrix(50, 6, rng), random_labels(50, {0, 1, 2}, rng), RowMasks::all()};
    LabeledBatch replay{oracle::random_matrix(10, 6, rng), random_labels(10, {0, 1, 2}, rng), RowMasks::all()};
    TrainConfig c;
    OptimizerState s;
    const auto before = csr_traversals();
    for (int e = 0; e < 5; ++e) train_epoch(w, fresh, replay, c, s);
    CHECK(csr_traversals() == before);
}

TEST_CASE("normalized adjacency examples") {
    const Graph empty = Graph::from_edges(3, std::vector<std::pair<NodeId, NodeId>>{}, false, Matrix(3, 1), {0, 0, 0}, {0, 0, 0});
    const Matrix h = [] {
        Matrix m(3, 2);
        for (std::size_t i = 0; i < 6; ++i) m.data()[i] = static_cast<double>(i) - 2.5;
        return m;
    }();
    CHECK(NormalizedAdjacency(empty).apply(h) == h);

    const Graph two = Graph::from_edges(2, std::vector<std::pair<NodeId, NodeId>>{{0, 1}}, false, Matrix(2, 1), {0, 0}, {0, 0});
    const NormalizedAdjacency two_adj(two);
    const auto& m = two_adj.matrix();
    CHECK(m.nnz() == 4);
    for (double v : m.values) CHECK(v == doctest::Approx(0.5));

    const Graph path = Graph::from_edges(3, std::vector<std::pair<NodeId, NodeId>>{{0, 1}, {1, 2}}, false, Matrix(3, 1), {0, 0, 0},
                                         {0, 0, 0});
    const auto dense = oracle::dense_normalized_adjacency(path);
    CHECK(dense[0][1] == doctest::Approx(1.0 / std::sqrt(6.0)));
    const Matrix eye = [] {
        Matrix e(3, 3);
        for (std::size_t i = 0; i < 3; ++i) e(i, i) = 1.0;
        return e;
    }();
    const Matrix got = NormalizedAdjacency(path).apply(eye);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(got(i, j) == doctest::Approx(dense[i][j]).epsilon(1e-15));
}

TEST_CASE("gcn inference matches the dense GCN") {
    Rng rng(19);
    for (bool directed : {false, true}) {
        const Graph g = oracle::random_graph(14, 0.2, directed, 3, rng);
        const ModelWeights w = random_weights({3, 6, 4}, rng);
        const NormalizedAdjacency adj(g);
        const Matrix logits = gcn_logits(w, adj, g.features);
        const auto want = oracle::forward(w, g.features, oracle::dense_normalized_adjacency(g));
        for (std::size_t i = 0; i < 14; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(logits(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
        const auto pred = gcn_inference(w, g, g.features, ClassMask{1, 3});
        for (std::size_t i = 0; i < 14; ++i) {
            const ClassId expect = want[i][3] > want[i][1] ? 3 : 1;
            CHECK(pred[i] == expect);
        }
    }
}

TEST_CASE("gcn inference on an edgeless graph is the MLP, bit for bit") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        const Graph g = oracle::random_graph(20, 0.0, false, 5, rng);
        const ModelWeights w = random_weights({5, 9, 7, 3}, rng);
        CHECK(gcn_logits(w, NormalizedAdjacency(g), g.features) == mlp_forward(w, g.features).logits);
    }
}

TEST_CASE("identical features on a connected graph give one prediction") {
    Rng rng(6);
    std::vector<std::pair<NodeId, NodeId>> ring;
    for (NodeId i = 0; i < 9; ++i) ring.emplace_back(i, (i + 1) % 9);
    const Graph g = Graph::from_edges(9, ring, false, Matrix(9, 3, 0.4), std::vector<ClassId>(9, 0), std::vector<TaskId>(9, 0));
    const auto pred = gcn_inference(random_weights({3, 5, 4}, rng), g, g.features, std::nullopt);
    for (ClassId p : pred) CHECK(p == pred[0]);
}

TEST_CASE("predict_classes breaks ties toward the smaller class") {
    Matrix z(1, 4, 1.0);
    CHECK(predict_classes(z, std::nullopt) == std::vector<ClassId>{0});
    CHECK(predict_classes(z, ClassMask{2, 3}) == std::vector<ClassId>{2});
}

TEST_CASE("checkpoint round trip") {
    Rng rng(1);
    const ModelWeights w = random_weights({4, 3, 2}, rng);
    const auto path = std::filesystem::temp_directory_path() / "ecgl_test_weights.bin";
    save_checkpoint(path, w, 17, R"({"lr": 0.5})");
    CHECK(load_checkpoint(path) == w);
    std::ifstream side(path.string() + ".json");
    const auto meta = nlohmann::json::parse(side);
    CHECK(meta.at("seed") == 17);
    CHECK(meta.at("dims") == nlohmann::json::array({4, 3, 2}));
    CHECK(meta.at("config").at("lr") == 0.5);

    {
        std::ofstream trunc(path, std::ios::binary | std::ios::trunc);
        trunc << "abc";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}
