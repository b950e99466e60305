#pragma once

#include <cstdint>
#include <span>

#include <json.hpp>

#include "ecgl/continual_driver.hpp"

namespace ecgl {

/// Metric JSON of one run. Holds no timings, so identical (config, seed) runs
/// serialize byte-identically. Keys are sorted; AF is null at index 0.
nlohmann::json run_record_json(const RunRecord& record, std::uint64_t seed, const nlohmann::json& config_echo);

/// Wall-clock side of a run: per-task epoch summaries, sampler and inference ms.
nlohmann::json timing_json(const RunRecord& record);

/// All epoch and inference samples of a run pooled under its method name.
PhaseSamples pooled_samples(const RunRecord& record);

/// Mean and sample standard deviation of final AA/AF and of the per-index
/// series, recomputed from per-seed run_record_json documents.
nlohmann::json aggregate_json(std::span<const nlohmann::json> runs);

/// Sample standard deviation, 0 for fewer than two values.
double sample_stddev(std::span<const double> values);

}  // namespace ecgl
