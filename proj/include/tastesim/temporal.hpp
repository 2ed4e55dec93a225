#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/ingest.hpp"
#include "tastesim/topics.hpp"

namespace tastesim::temporal {

// Consecutive same-user listen pair: gap time (units of time_scale minutes,
// clamped below at 1 before the log) and the pair's taste similarity.
struct GapObservation {
    std::string user_id;
    double delta_t = 0.0;
    double log_delta_t = 0.0;
    double sim = 0.0;
};

struct GapScanResult {
    std::vector<GapObservation> observations;
    std::size_t skipped_pairs = 0;  // a song lacked a theme distribution
};

// Events must be time-sorted within each user (throws DataError otherwise).
// Users are processed in sorted user_id order.
GapScanResult gap_similarity_scan(
    std::span<const ingest::ListeningEvent> events, const topics::TopicModel& model,
    double time_scale_minutes = 1.0,
    topics::InversionMode mode = topics::InversionMode::BayesWeighted);

struct GapHistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double mean_sim = 0.0;
};

// Uniform bins over log_delta_t; out-of-range values clamp into the first or
// last bin so the counts always partition the observations.
std::vector<GapHistogramBin> gap_histogram(std::span<const GapObservation> observations,
                                           int bins, std::optional<double> lo = std::nullopt,
                                           std::optional<double> hi = std::nullopt);

struct SkipDistribution {
    int n = 0;
    std::vector<double> similarities;
    double mean = 0.0;
    double stddev = 0.0;
};

// For each skip level n in 0..max_skip, taste similarity of pairs
// (s_i, s_{i+n+1}) within each user stream.
std::vector<SkipDistribution> n_skip_analysis(
    std::span<const ingest::ListeningEvent> events, const topics::TopicModel& model,
    int max_skip, topics::InversionMode mode = topics::InversionMode::BayesWeighted);

void write_gap_csv(std::span<const GapHistogramBin> bins, std::ostream& out);
void write_nskip_csv(std::span<const SkipDistribution> levels, std::ostream& out);

}  // namespace tastesim::temporal
