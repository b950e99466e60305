#include "ecgl/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ecgl {

PerformanceMatrix::PerformanceMatrix(std::size_t num_tasks)
    : n_(num_tasks), entries_(num_tasks * num_tasks, 0.0), populated_(num_tasks * num_tasks, 0) {}

void PerformanceMatrix::check_index(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_) {
        throw std::invalid_argument("performance entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                    ") out of range for " + std::to_string(n_) + " tasks");
    }
}

void PerformanceMatrix::record(std::size_t i, std::size_t j, double accuracy) {
    check_index(i, j);
    if (j > i) {
        throw std::invalid_argument("cannot record accuracy of future task " + std::to_string(j) + " after task " +
                                    std::to_string(i));
    }
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy must lie in [0, 1]");
    const std::size_t k = i * n_ + j;
    if (populated_[k]) {
        throw std::logic_error("performance entry (" + std::to_string(i) + ", " + std::to_string(j) + ") already recorded");
    }
    entries_[k] = accuracy;
    populated_[k] = 1;
}

bool PerformanceMatrix::populated(std::size_t i, std::size_t j) const {
    check_index(i, j);
    return populated_[i * n_ + j] != 0;
}

double PerformanceMatrix::at(std::size_t i, std::size_t j) const {
    if (!populated(i, j)) {
        throw std::logic_error("performance entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is not populated");
    }
    return entries_[i * n_ + j];
}

bool PerformanceMatrix::row_complete(std::size_t i) const {
    for (std::size_t j = 0; j <= i; ++j) {
        if (!populated(i, j)) return false;
    }
    return true;
}

double PerformanceMatrix::average_accuracy(std::size_t i) const {
    double sum = 0.0;
    for (std::size_t j = 0; j <= i; ++j) sum += at(i, j);
    return sum / static_cast<double>(i + 1);
}

double PerformanceMatrix::average_forgetting(std::size_t i) const {
    if (i == 0) throw std::invalid_argument("average forgetting is undefined after the first task");
    double sum = 0.0;
    for (std::size_t j = 0; j < i; ++j) sum += at(i, j) - at(j, j);
    return sum / static_cast<double>(i);
}

TimingSummary summarize_timings(std::span<const double> samples_ms) {
    if (samples_ms.empty()) throw std::invalid_argument("timing summary needs at least one sample");
    TimingSummary s;
    s.samples = samples_ms.size();
    double sum = 0.0;
    for (double x : samples_ms) sum += x;
    s.mean_ms = sum / static_cast<double>(s.samples);
    if (s.samples > 1) {
        double sq = 0.0;
        for (double x : samples_ms) sq += (x - s.mean_ms) * (x - s.mean_ms);
        s.stddev_ms = std::sqrt(sq / static_cast<double>(s.samples - 1));
    }
    return s;
}

TimingReport timing_report(const std::map<std::string, PhaseSamples>& samples, const std::string& baseline,
                           const std::string& accelerated) {
    if (samples.empty()) throw std::invalid_argument("timing report needs at least one method");
    TimingReport report;
    report.baseline = baseline;
    report.accelerated = accelerated;
    for (const auto& [method, phases] : samples) {
        MethodTiming t;
        t.train = summarize_timings(phases.train_ms);
        if (!phases.inference_ms.empty()) t.inference = summarize_timings(phases.inference_ms);
        report.methods.emplace(method, t);
    }
    auto slow = report.methods.find(baseline);
    auto fast = report.methods.find(accelerated);
    if (slow != report.methods.end() && fast != report.methods.end()) {
        if (fast->second.train.mean_ms > 0.0) report.train_speedup = slow->second.train.mean_ms / fast->second.train.mean_ms;
        if (fast->second.inference.samples > 0 && slow->second.inference.samples > 0 && fast->second.inference.mean_ms > 0.0) {
            report.inference_speedup = slow->second.inference.mean_ms / fast->second.inference.mean_ms;
        }
    }
    return report;
}

std::string format_speedup(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2fx", ratio);
    return buf;
}

void write_performance_csv(std::ostream& out, const PerformanceMatrix& matrix) {
    out << "trained_through";
    for (std::size_t j = 0; j < matrix.size(); ++j) out << ",task_" << j;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        out << i;
        for (std::size_t j = 0; j < matrix.size(); ++j) {
            out << ',';
            if (j <= i && matrix.populated(i, j)) {
                std::snprintf(buf, sizeof buf, "%.17g", matrix.at(i, j));
                out << buf;
            }
        }
        out << '\n';
    }
}

void write_timing_csv(std::ostream& out, const TimingReport& report) {
    out << "method,train_ms_mean,train_ms_std,train_samples,inference_ms_mean,inference_ms_std,inference_samples\n";
    char buf[256];
    for (const auto& [method, t] : report.methods) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu,%.6f,%.6f,%zu\n", method.c_str(), t.train.mean_ms, t.train.stddev_ms,
                      t.train.samples, t.inference.mean_ms, t.inference.stddev_ms, t.inference.samples);
        out << buf;
    }
    if (report.train_speedup || report.inference_speedup) {
        out << "improvement," << (report.train_speedup ? format_speedup(*report.train_speedup) : "") << ",,,"
            << (report.inference_speedup ? format_speedup(*report.inference_speedup) : "") << ",,\n";
    }
}

}  // namespace ecgl
