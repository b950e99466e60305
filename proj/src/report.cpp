#include "ecgl/report.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ecgl {
namespace {

nlohmann::json spread(const std::vector<double>& values) {
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return {{"mean", mean}, {"std", sample_stddev(values)}, {"values", values}};
}

}  // namespace

double sample_stddev(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

nlohmann::json run_record_json(const RunRecord& record, std::uint64_t seed, const nlohmann::json& config_echo) {
    const PerformanceMatrix& m = record.performance;
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json aa = nlohmann::json::array();
    nlohmann::json af = nlohmann::json::array();
    for (std::size_t i = 0; i < m.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j <= i; ++j) row.push_back(m.at(i, j));
        rows.push_back(std::move(row));
        aa.push_back(m.average_accuracy(i));
        af.push_back(i == 0 ? nlohmann::json(nullptr) : nlohmann::json(m.average_forgetting(i)));
    }
    nlohmann::json out;
    out["method"] = to_string(record.method);
    out["regime"] = to_string(record.regime);
    out["seed"] = seed;
    out["num_tasks"] = m.size();
    out["performance_matrix"] = std::move(rows);
    out["average_accuracy"] = std::move(aa);
    out["average_forgetting"] = std::move(af);
    out["buffer_sizes"] = record.buffer_sizes;
    out["importance_converged"] = record.convergence_flags;
    out["final_loss_new"] = record.final_loss_new;
    out["final_loss_replay"] = record.final_loss_replay;
    out["config"] = config_echo;
    return out;
}

nlohmann::json timing_json(const RunRecord& record) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const TaskTiming& t : record.timings) {
        nlohmann::json entry;
        if (!t.train_epoch_ms.empty()) {
            const auto s = summarize_timings(t.train_epoch_ms);
            entry["train_epoch_ms"] = {{"mean", s.mean_ms}, {"std", s.stddev_ms}, {"samples", s.samples}};
        }
        entry["sampler_ms"] = t.sampler_ms;
        entry["inference_ms"] = t.inference_ms;
        tasks.push_back(std::move(entry));
    }
    return {{"method", to_string(record.method)}, {"tasks", std::move(tasks)}};
}

PhaseSamples pooled_samples(const RunRecord& record) {
    PhaseSamples out;
    for (const TaskTiming& t : record.timings) {
        out.train_ms.insert(out.train_ms.end(), t.train_epoch_ms.begin(), t.train_epoch_ms.end());
        out.inference_ms.push_back(t.inference_ms);
    }
    return out;
}

nlohmann::json aggregate_json(std::span<const nlohmann::json> runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_json: no runs");
    const std::size_t n = runs.front().at("num_tasks").get<std::size_t>();
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<double>> aa(n), af(n);
    for (const auto& run : runs) {
        if (run.at("num_tasks").get<std::size_t>() != n) throw std::invalid_argument("aggregate_json: task counts differ");
        seeds.push_back(run.at("seed").get<std::uint64_t>());
        for (std::size_t i = 0; i < n; ++i) {
            aa[i].push_back(run.at("average_accuracy").at(i).get<double>());
            if (i > 0) af[i].push_back(run.at("average_forgetting").at(i).get<double>());
        }
    }
    nlohmann::json out;
    out["seeds"] = seeds;
    out["method"] = runs.front().at("method");
    out["regime"] = runs.front().at("regime");
    out["num_tasks"] = n;
    out["final_average_accuracy"] = spread(aa[n - 1]);
    out["final_average_forgetting"] = n > 1 ? spread(af[n - 1]) : nlohmann::json(nullptr);
    nlohmann::json aa_series = nlohmann::json::array();
    nlohmann::json af_series = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
        aa_series.push_back(spread(aa[i]));
        af_series.push_back(i == 0 ? nlohmann::json(nullptr) : spread(af[i]));
    }
    out["average_accuracy"] = std::move(aa_series);
    out["average_forgetting"] = std::move(af_series);
    return out;
}

}  // namespace ecgl
