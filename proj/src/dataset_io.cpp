#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "ecgl/graph_store.hpp"

namespace ecgl {
namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

class LineError {
public:
    explicit LineError(std::size_t line) : line_(line) {}
    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError("line " + std::to_string(line_) + ": " + msg);
    }

private:
    std::size_t line_;
};

template <typename T>
T parse_int(std::string_view tok, const LineError& err, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) err.fail(std::string("bad ") + what + " '" + std::string(tok) + "'");
    return value;
}

double parse_double(std::string_view tok, const LineError& err) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) err.fail("bad feature value '" + std::string(tok) + "'");
    return value;
}

struct Header {
    std::size_t num_nodes = 0;
    std::size_t num_edges = 0;
    std::size_t feature_dim = 0;
    std::size_t num_tasks = 0;
    std::size_t classes_per_task = 0;
    bool directed = false;
};

}  // namespace

Dataset read_dataset(std::istream& in) {
    std::optional<Header> header;
    Matrix features;
    std::vector<ClassId> labels;
    std::vector<TaskId> node_task;
    std::vector<char> seen_node;
    std::size_t node_count = 0;
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::map<TaskId, std::pair<std::vector<NodeId>, std::vector<NodeId>>> splits;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const LineError err(line_no);
        std::string_view line(raw);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto tok = tokenize(line);
        if (tok.empty()) continue;
        const std::string_view kind = tok[0];

        if (kind == "HEADER") {
            if (header) err.fail("duplicate HEADER");
            if (tok.size() != 7) err.fail("malformed header: expected 6 fields");
            Header h;
            h.num_nodes = parse_int<std::size_t>(tok[1], err, "num_nodes");
            h.num_edges = parse_int<std::size_t>(tok[2], err, "num_edges");
            h.feature_dim = parse_int<std::size_t>(tok[3], err, "feature_dim");
            h.num_tasks = parse_int<std::size_t>(tok[4], err, "num_tasks");
            h.classes_per_task = parse_int<std::size_t>(tok[5], err, "classes_per_task");
            const int directed = parse_int<int>(tok[6], err, "directed flag");
            if (directed != 0 && directed != 1) err.fail("malformed header: directed flag must be 0 or 1");
            h.directed = directed == 1;
            header = h;
            features = Matrix(h.num_nodes, h.feature_dim);
            labels.assign(h.num_nodes, 0);
            node_task.assign(h.num_nodes, 0);
            seen_node.assign(h.num_nodes, 0);
            continue;
        }
        if (!header) err.fail("malformed header: first record must be HEADER");

        if (kind == "NODE") {
            if (tok.size() != 4 + header->feature_dim) {
                err.fail("NODE record needs " + std::to_string(4 + header->feature_dim) + " fields, got " + std::to_string(tok.size()));
            }
            const auto id = parse_int<std::int64_t>(tok[1], err, "node id");
            if (id < 0 || static_cast<std::size_t>(id) >= header->num_nodes) err.fail("node id " + std::to_string(id) + " out of range");
            const auto v = static_cast<std::size_t>(id);
            if (seen_node[v]) err.fail("duplicate node id " + std::to_string(id));
            seen_node[v] = 1;
            ++node_count;
            const auto task = parse_int<TaskId>(tok[2], err, "task id");
            if (task < 0 || static_cast<std::size_t>(task) >= header->num_tasks) err.fail("task id " + std::to_string(task) + " out of range");
            node_task[v] = task;
            labels[v] = parse_int<ClassId>(tok[3], err, "class id");
            if (labels[v] < 0) err.fail("negative class id");
            for (std::size_t k = 0; k < header->feature_dim; ++k) features(v, k) = parse_double(tok[4 + k], err);
        } else if (kind == "EDGE") {
            if (tok.size() != 3) err.fail("EDGE record needs 2 endpoints");
            const auto u = parse_int<std::int64_t>(tok[1], err, "edge endpoint");
            const auto v = parse_int<std::int64_t>(tok[2], err, "edge endpoint");
            const auto n = static_cast<std::int64_t>(header->num_nodes);
            if (u < 0 || u >= n || v < 0 || v >= n) {
                err.fail("edge endpoint out of range (" + std::to_string(u) + ", " + std::to_string(v) + ")");
            }
            if (u == v) err.fail("self-loop edge at node " + std::to_string(u));
            edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        } else if (kind == "TASK") {
            if (tok.size() < 3) err.fail("TASK record needs a task id and 'train:'");
            const auto t = parse_int<TaskId>(tok[1], err, "task id");
            if (t < 0 || static_cast<std::size_t>(t) >= header->num_tasks) err.fail("task id " + std::to_string(t) + " out of range");
            if (splits.count(t)) err.fail("duplicate TASK record for task " + std::to_string(t));
            if (tok[2] != "train:") err.fail("TASK record must continue with 'train:'");
            auto& [train, test] = splits[t];
            std::vector<NodeId>* target = &train;
            bool saw_test = false;
            for (std::size_t i = 3; i < tok.size(); ++i) {
                if (tok[i] == "test:") {
                    if (saw_test) err.fail("repeated 'test:' marker");
                    saw_test = true;
                    target = &test;
                    continue;
                }
                const auto id = parse_int<std::int64_t>(tok[i], err, "split node id");
                if (id < 0 || static_cast<std::size_t>(id) >= header->num_nodes) {
                    err.fail("split node id " + std::to_string(id) + " out of range");
                }
                target->push_back(static_cast<NodeId>(id));
            }
            if (!saw_test) err.fail("TASK record is missing 'test:'");
        } else {
            err.fail("unknown record type '" + std::string(kind) + "'");
        }
    }

    if (!header) throw DataError("malformed header: no HEADER record found");
    if (node_count != header->num_nodes) {
        throw DataError("expected " + std::to_string(header->num_nodes) + " NODE records, found " + std::to_string(node_count));
    }
    if (edges.size() != header->num_edges) {
        throw DataError("expected " + std::to_string(header->num_edges) + " EDGE records, found " + std::to_string(edges.size()));
    }
    if (splits.size() != header->num_tasks) {
        throw DataError("expected " + std::to_string(header->num_tasks) + " TASK records, found " + std::to_string(splits.size()));
    }

    Dataset ds;
    ds.graph = Graph::from_edges(header->num_nodes, edges, header->directed, std::move(features), std::move(labels),
                                 std::move(node_task));
    ds.tasks.classes_per_task = header->classes_per_task;
    ds.tasks.tasks.resize(header->num_tasks);
    for (std::size_t t = 0; t < header->num_tasks; ++t) ds.tasks.tasks[t].task_id = static_cast<TaskId>(t);
    std::vector<std::set<ClassId>> classes(header->num_tasks);
    for (std::size_t v = 0; v < header->num_nodes; ++v) {
        const auto t = static_cast<std::size_t>(ds.graph.node_task[v]);
        ds.tasks.tasks[t].node_ids.push_back(static_cast<NodeId>(v));
        classes[t].insert(ds.graph.labels[v]);
    }
    for (auto& [t, split] : splits) {
        TaskView& view = ds.tasks.tasks[static_cast<std::size_t>(t)];
        view.train_ids = std::move(split.first);
        view.test_ids = std::move(split.second);
        std::sort(view.train_ids.begin(), view.train_ids.end());
        std::sort(view.test_ids.begin(), view.test_ids.end());
        view.class_ids.assign(classes[static_cast<std::size_t>(t)].begin(), classes[static_cast<std::size_t>(t)].end());
    }
    ds.tasks.validate(ds.graph);
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file " + path.string());
    try {
        return read_dataset(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
    const Graph& g = dataset.graph;
    const auto edges = g.edge_list();
    out << "HEADER " << g.num_nodes() << ' ' << edges.size() << ' ' << g.feature_dim() << ' ' << dataset.tasks.size() << ' '
        << dataset.tasks.classes_per_task << ' ' << (g.directed ? 1 : 0) << '\n';
    char buf[64];
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        out << "NODE " << v << ' ' << g.node_task[v] << ' ' << g.labels[v];
        for (double x : g.features.row(v)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
    for (const auto& [u, v] : edges) out << "EDGE " << u << ' ' << v << '\n';
    for (const TaskView& task : dataset.tasks.tasks) {
        out << "TASK " << task.task_id << " train:";
        for (NodeId v : task.train_ids) out << ' ' << v;
        out << " test:";
        for (NodeId v : task.test_ids) out << ' ' << v;
        out << '\n';
    }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file " + path.string());
    write_dataset(out, dataset);
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace ecgl
