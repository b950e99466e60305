#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecgl/continual_driver.hpp"
#include "ecgl/evaluation.hpp"
#include "ecgl/graph_store.hpp"
#include "ecgl/report.hpp"

namespace ecgl::cli {
namespace fs = std::filesystem;
namespace {

struct DatasetOptions {
    std::string path;
    SbmParams sbm;
};

struct LearnOptions {
    std::string regime = "task_il";
    std::optional<std::size_t> budget;
    RegimeConfig defaults;
    std::string optimizer = "gd";
    bool exact_attribute = false;
    bool no_center = false;
    std::optional<double> rbf_gamma;
};

void add_sbm_options(CLI::App* app, SbmParams& p) {
    app->add_option("--sbm-tasks", p.num_tasks, "SBM task count")->capture_default_str();
    app->add_option("--sbm-classes-per-task", p.classes_per_task, "SBM classes per task")->capture_default_str();
    app->add_option("--sbm-nodes-per-class", p.nodes_per_class, "SBM nodes per class")->capture_default_str();
    app->add_option("--sbm-p-intra", p.p_intra, "edge probability inside a class")->capture_default_str();
    app->add_option("--sbm-p-inter", p.p_inter, "edge probability across classes of a task")->capture_default_str();
    app->add_option("--sbm-p-intertask", p.p_intertask, "edge probability across tasks")->capture_default_str();
    app->add_option("--sbm-feature-dim", p.feature_dim, "feature dimension")->capture_default_str();
    app->add_option("--sbm-feature-shift", p.feature_shift, "distance of class means from the origin")->capture_default_str();
    app->add_option("--sbm-train-fraction", p.train_fraction, "per-class train fraction")->capture_default_str();
    app->add_option("--sbm-seed", p.seed, "generator seed")->capture_default_str();
}

void add_dataset_options(CLI::App* app, DatasetOptions& d) {
    app->add_option("--dataset", d.path, "dataset file; SBM parameters are used when absent");
    add_sbm_options(app, d.sbm);
}

void add_learn_options(CLI::App* app, LearnOptions& o) {
    RegimeConfig& c = o.defaults;
    app->add_option("--regime", o.regime, "task_il or class_il")->capture_default_str();
    app->add_option("--budget", o.budget, "replay samples per task (default by graph size: 1000/3000/5000)");
    app->add_option("--diversity-ratio", c.diversity_ratio, "share of the budget picked by diversity")->capture_default_str();
    app->add_option("--damping", c.importance.damping, "PageRank damping d")->capture_default_str();
    app->add_option("--rbf-gamma", o.rbf_gamma, "RBF gamma (default from the median pairwise distance)");
    app->add_option("--max-iter", c.importance.max_iterations, "PageRank iteration cap")->capture_default_str();
    app->add_option("--tol", c.importance.tolerance, "PageRank L1 tolerance")->capture_default_str();
    app->add_flag("--exact-attribute", o.exact_attribute, "quadratic exact r instead of the Taylor surrogate");
    app->add_flag("--no-center", o.no_center, "do not center features before the Taylor expansion");
    app->add_option("--epochs", c.train.epochs, "epochs per task")->capture_default_str();
    app->add_option("--lr", c.train.learning_rate, "learning rate")->capture_default_str();
    app->add_option("--weight-decay", c.train.weight_decay, "decoupled weight decay")->capture_default_str();
    app->add_option("--lambda", c.train.replay_lambda, "replay loss weight")->capture_default_str();
    app->add_option("--optimizer", o.optimizer, "gd or adam")->capture_default_str();
    app->add_option("--batch-size", c.train.batch_size, "rows per step, 0 for full batch")->capture_default_str();
    app->add_option("--hidden", c.train.hidden_dims, "hidden layer widths")->delimiter(',')->capture_default_str();
    app->add_flag("--eval-prior-edges", c.eval_include_prior_edges, "keep edges to earlier tasks at evaluation");
}

Dataset load_or_generate(const DatasetOptions& d) {
    if (!d.path.empty()) return load_dataset(d.path);
    return generate_sbm(d.sbm);
}

nlohmann::json dataset_echo(const DatasetOptions& d) {
    if (!d.path.empty()) return {{"path", d.path}};
    const SbmParams& p = d.sbm;
    return {{"sbm",
             {{"num_tasks", p.num_tasks},
              {"classes_per_task", p.classes_per_task},
              {"nodes_per_class", p.nodes_per_class},
              {"p_intra", p.p_intra},
              {"p_inter", p.p_inter},
              {"p_intertask", p.p_intertask},
              {"feature_dim", p.feature_dim},
              {"feature_shift", p.feature_shift},
              {"train_fraction", p.train_fraction},
              {"seed", p.seed}}}};
}

RegimeConfig regime_config(const LearnOptions& o, std::size_t num_nodes) {
    RegimeConfig c = o.defaults;
    c.regime = parse_regime(o.regime);
    c.sample_budget = o.budget ? *o.budget : default_sample_budget(num_nodes);
    c.importance.rbf_gamma = o.rbf_gamma;
    c.importance.use_taylor_surrogate = !o.exact_attribute;
    c.importance.center_features = !o.no_center;
    if (o.optimizer == "gd") {
        c.train.optimizer = Optimizer::gradient_descent;
    } else if (o.optimizer == "adam") {
        c.train.optimizer = Optimizer::adam;
    } else {
        throw ConfigError("unknown optimizer '" + o.optimizer + "' (expected gd or adam)");
    }
    c.validate();
    return c;
}

nlohmann::json config_echo(const RegimeConfig& c, Method method, const nlohmann::json& dataset) {
    nlohmann::json imp = {{"damping", c.importance.damping},
                          {"rbf_gamma", c.importance.rbf_gamma ? nlohmann::json(*c.importance.rbf_gamma) : nlohmann::json(nullptr)},
                          {"max_iterations", c.importance.max_iterations},
                          {"tolerance", c.importance.tolerance},
                          {"use_taylor_surrogate", c.importance.use_taylor_surrogate},
                          {"center_features", c.importance.center_features}};
    nlohmann::json train = {{"epochs", c.train.epochs},
                            {"learning_rate", c.train.learning_rate},
                            {"weight_decay", c.train.weight_decay},
                            {"replay_lambda", c.train.replay_lambda},
                            {"optimizer", c.train.optimizer == Optimizer::adam ? "adam" : "gd"},
                            {"batch_size", c.train.batch_size},
                            {"hidden_dims", c.train.hidden_dims}};
    return {{"method", to_string(method)},
            {"regime", to_string(c.regime)},
            {"sample_budget", c.sample_budget},
            {"diversity_ratio", c.diversity_ratio},
            {"eval_include_prior_edges", c.eval_include_prior_edges},
            {"importance", std::move(imp)},
            {"train", std::move(train)},
            {"dataset", dataset}};
}

fs::path prepare_output_dir(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw ConfigError("output directory " + dir + " is not writable");
    const fs::path probe = p / ".ecgl_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory " + dir + " is not writable");
    }
    fs::remove(probe, ec);
    return p;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    return f;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    auto f = open_output(path);
    f << doc.dump(2) << '\n';
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
    return buf;
}

std::string ms(const TimingSummary& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f +- %.3f", s.mean_ms, s.stddev_ms);
    return buf;
}

int cmd_run(const DatasetOptions& data, const LearnOptions& learn, const std::string& method_name,
            const std::vector<std::uint64_t>& seeds, const std::string& output_dir, bool save_weights, bool dump_selection,
            std::ostream& out) {
    const Method method = parse_method(method_name);
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    const fs::path dir = prepare_output_dir(output_dir);
    const Dataset ds = load_or_generate(data);
    RegimeConfig config = regime_config(learn, ds.graph.num_nodes());
    if (dump_selection) config.selection_dump_dir = dir;
    const nlohmann::json echo = config_echo(config, method, dataset_echo(data));

    std::vector<nlohmann::json> runs;
    std::map<std::string, PhaseSamples> pooled;
    for (std::uint64_t seed : seeds) {
        config.train.seed = seed;
        if (dump_selection) {
            config.selection_dump_dir = dir / ("selection_seed" + std::to_string(seed));
            fs::create_directories(*config.selection_dump_dir);
        }
        const RunRecord record = run_continual(ds.graph, ds.tasks, config, method);
        const std::string suffix = "_seed" + std::to_string(seed);
        nlohmann::json doc = run_record_json(record, seed, echo);
        write_json(dir / ("run" + suffix + ".json"), doc);
        write_json(dir / ("timing" + suffix + ".json"), timing_json(record));
        {
            auto f = open_output(dir / ("performance" + suffix + ".csv"));
            write_performance_csv(f, record.performance);
        }
        {
            const auto report = timing_report({{to_string(method), pooled_samples(record)}});
            auto f = open_output(dir / ("timing" + suffix + ".csv"));
            write_timing_csv(f, report);
        }
        if (save_weights) save_checkpoint(dir / ("weights" + suffix + ".bin"), record.weights, seed, echo.dump());

        const std::size_t last = record.performance.size() - 1;
        out << "seed " << seed << ": AA " << percent(record.performance.average_accuracy(last)) << "%";
        if (last > 0) out << "  AF " << percent(record.performance.average_forgetting(last)) << "%";
        out << '\n';
        runs.push_back(std::move(doc));
    }
    const nlohmann::json agg = aggregate_json(runs);
    write_json(dir / "aggregate.json", agg);
    const auto& aa = agg.at("final_average_accuracy");
    out << to_string(method) << " " << to_string(config.regime) << " over " << seeds.size() << " seed(s): AA "
        << percent(aa.at("mean").get<double>()) << " +- " << percent(aa.at("std").get<double>()) << "%";
    if (!agg.at("final_average_forgetting").is_null()) {
        const auto& af = agg.at("final_average_forgetting");
        out << "  AF " << percent(af.at("mean").get<double>()) << " +- " << percent(af.at("std").get<double>()) << "%";
    }
    out << "\nwrote " << dir.string() << '\n';
    return exit_ok;
}

int cmd_gen(const SbmParams& params, const std::string& path, std::ostream& out) {
    const Dataset ds = generate_sbm(params);
    save_dataset(path, ds);
    out << "wrote " << path << ": " << ds.graph.num_nodes() << " nodes, " << ds.graph.num_edges() << " edges, "
        << ds.tasks.size() << " tasks, " << ds.tasks.size() * ds.tasks.classes_per_task << " classes\n";
    return exit_ok;
}

int cmd_bench(const DatasetOptions& data, const LearnOptions& learn, std::uint64_t seed, TaskId task,
              const std::string& output_dir, std::ostream& out) {
    const fs::path dir = prepare_output_dir(output_dir);
    const Dataset ds = load_or_generate(data);
    RegimeConfig config = regime_config(learn, ds.graph.num_nodes());
    config.train.seed = seed;
    if (task < 0 || static_cast<std::size_t>(task) >= ds.tasks.size()) throw ConfigError("--task is out of range");

    std::map<std::string, PhaseSamples> samples;
    std::uint64_t mlp_traversals = 0;
    for (Method m : {Method::ecgl_gcn_trainer, Method::ecgl}) {
        auto b = benchmark_epochs(ds.graph, ds.tasks, config, m, task);
        if (m == Method::ecgl) mlp_traversals = b.training_csr_traversals;
        samples[to_string(m)] = std::move(b.samples);
    }
    const TimingReport report = timing_report(samples);
    {
        auto f = open_output(dir / "bench_timing.csv");
        write_timing_csv(f, report);
    }
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %-24s %-24s\n", "method", "train ms/epoch", "inference ms/epoch");
    out << line;
    for (const std::string name : {"ecgl_gcn_trainer", "ecgl"}) {
        const MethodTiming& t = report.methods.at(name);
        std::snprintf(line, sizeof line, "%-18s %-24s %-24s\n", name.c_str(), ms(t.train).c_str(), ms(t.inference).c_str());
        out << line;
    }
    std::snprintf(line, sizeof line, "%-18s %-24s %-24s\n", "Improv.", format_speedup(*report.train_speedup).c_str(),
                  format_speedup(*report.inference_speedup).c_str());
    out << line;
    out << "samples per phase: " << config.train.epochs << "; CSR traversals in ecgl training: " << mlp_traversals << '\n';
    return exit_ok;
}

int cmd_validate(const std::string& path, std::ostream& out) {
    const Dataset ds = load_dataset(path);
    const Graph& g = ds.graph;
    std::size_t isolated = 0;
    std::size_t intertask = 0;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        const auto nbrs = g.neighbors(static_cast<NodeId>(v));
        if (nbrs.empty()) ++isolated;
        for (NodeId u : nbrs) intertask += g.node_task[static_cast<std::size_t>(u)] != g.node_task[v] ? 1 : 0;
    }
    if (!g.directed) intertask /= 2;
    out << path << ": ok\n"
        << "  nodes " << g.num_nodes() << ", edges " << g.num_edges() << (g.directed ? " (directed)" : "") << ", features "
        << g.feature_dim() << '\n'
        << "  tasks " << ds.tasks.size() << ", classes per task " << ds.tasks.classes_per_task << '\n'
        << "  inter-task edges " << intertask << ", isolated nodes " << isolated << '\n';
    for (const TaskView& t : ds.tasks.tasks) {
        out << "  task " << t.task_id << ": " << t.node_ids.size() << " nodes, " << t.train_ids.size() << " train, "
            << t.test_ids.size() << " test\n";
    }
    return exit_ok;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Continual node classification with replay and an MLP-trained GCN"};
    app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
    app.require_subcommand(1);

    DatasetOptions data;
    LearnOptions learn;
    std::string method = "ecgl";
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::string output_dir = "ecgl_out";
    bool save_weights = false;
    bool dump_selection = false;

    CLI::App* run_cmd = app.add_subcommand("run", "run the continual protocol for each seed");
    add_dataset_options(run_cmd, data);
    add_learn_options(run_cmd, learn);
    run_cmd->add_option("--method", method, "ecgl, ecgl_gcn_trainer, finetune or joint")->capture_default_str();
    run_cmd->add_option("--seeds", seeds, "model seeds")->delimiter(',')->capture_default_str();
    run_cmd->add_option("--output-dir", output_dir, "output directory")->envname("ECGL_OUTPUT_DIR")->capture_default_str();
    run_cmd->add_flag("--save-weights", save_weights, "write final weights per seed");
    run_cmd->add_flag("--dump-selection", dump_selection, "write per-task replay score CSVs");

    SbmParams gen_params;
    std::string gen_out;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate an SBM dataset file");
    add_sbm_options(gen_cmd, gen_params);
    gen_cmd->add_option("--out,-o", gen_out, "dataset file to write")->required();

    DatasetOptions bench_data;
    LearnOptions bench_learn;
    std::uint64_t bench_seed = 0;
    TaskId bench_task = 0;
    std::string bench_dir = "ecgl_out";
    CLI::App* bench_cmd = app.add_subcommand("bench", "time ecgl against ecgl_gcn_trainer per epoch");
    add_dataset_options(bench_cmd, bench_data);
    add_learn_options(bench_cmd, bench_learn);
    bench_cmd->add_option("--seed", bench_seed, "model seed")->capture_default_str();
    bench_cmd->add_option("--task", bench_task, "task to train on")->capture_default_str();
    bench_cmd->add_option("--output-dir", bench_dir, "output directory")->envname("ECGL_OUTPUT_DIR")->capture_default_str();

    std::string validate_path;
    CLI::App* validate_cmd = app.add_subcommand("validate", "lint a dataset file");
    validate_cmd->add_option("dataset", validate_path, "dataset file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*run_cmd) return cmd_run(data, learn, method, seeds, output_dir, save_weights, dump_selection, out);
        if (*gen_cmd) return cmd_gen(gen_params, gen_out, out);
        if (*bench_cmd) return cmd_bench(bench_data, bench_learn, bench_seed, bench_task, bench_dir, out);
        if (*validate_cmd) return cmd_validate(validate_path, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_failure;
}

}  // namespace ecgl::cli
