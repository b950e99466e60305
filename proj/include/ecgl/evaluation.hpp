#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecgl {

/// Lower-triangular accuracy matrix: entry (i, j) is the accuracy on task j
/// after training through task i (0-based, j <= i). Values are fractions.
class PerformanceMatrix {
public:
    PerformanceMatrix() = default;
    explicit PerformanceMatrix(std::size_t num_tasks);

    std::size_t size() const noexcept { return n_; }

    /// Throws std::invalid_argument for j > i, out-of-range indices or accuracy
    /// outside [0, 1], and std::logic_error when (i, j) is already populated.
    void record(std::size_t i, std::size_t j, double accuracy);

    bool populated(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j) const;

    /// Mean of row i over j <= i.
    double average_accuracy(std::size_t i) const;
    /// Mean over j < i of (M[i][j] - M[j][j]); undefined (throws) for i == 0.
    double average_forgetting(std::size_t i) const;

    bool row_complete(std::size_t i) const;

private:
    void check_index(std::size_t i, std::size_t j) const;

    std::size_t n_ = 0;
    std::vector<double> entries_;
    std::vector<char> populated_;
};

struct TimingSummary {
    std::size_t samples = 0;
    double mean_ms = 0.0;
    double stddev_ms = 0.0;  // sample standard deviation; 0 for a single sample
};

/// Throws std::invalid_argument on an empty sample set.
TimingSummary summarize_timings(std::span<const double> samples_ms);

struct PhaseSamples {
    std::vector<double> train_ms;      // one entry per training epoch
    std::vector<double> inference_ms;  // one entry per inference pass
};

struct MethodTiming {
    TimingSummary train;
    TimingSummary inference;
};

struct TimingReport {
    std::map<std::string, MethodTiming> methods;
    std::optional<double> train_speedup;      // mean(baseline) / mean(accelerated)
    std::optional<double> inference_speedup;
    std::string baseline;
    std::string accelerated;
};

/// Summaries per method plus the baseline/accelerated ratios when both are present.
TimingReport timing_report(const std::map<std::string, PhaseSamples>& samples,
                           const std::string& baseline = "ecgl_gcn_trainer", const std::string& accelerated = "ecgl");

/// "N.NNx"
std::string format_speedup(double ratio);

void write_performance_csv(std::ostream& out, const PerformanceMatrix& matrix);
/// method,train_ms_mean,train_ms_std,train_samples,inference_ms_mean,inference_ms_std,inference_samples
/// followed by an "improvement" row holding the ratios.
void write_timing_csv(std::ostream& out, const TimingReport& report);

}  // namespace ecgl
