#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/corpus.hpp"
#include "tastesim/topics.hpp"

namespace tastesim::pairs {

enum class SamplingStrategy { UniformRandom, CoOccurrenceWeighted, StratifiedByLabel };
enum class Split { Train, Validation, Test };

const char* split_name(Split split);
Split split_from_name(const std::string& name);
SamplingStrategy strategy_from_name(const std::string& name);
const char* strategy_name(SamplingStrategy strategy);

// (song_x, song_y, taste similarity) training triple; canonicalized so that
// song_x < song_y lexicographically.
struct PairSample {
    std::string song_x;
    std::string song_y;
    double label = 0.0;
    Split split = Split::Train;
};

struct SampleOptions {
    std::size_t count = 10000;
    SamplingStrategy strategy = SamplingStrategy::StratifiedByLabel;
    std::uint64_t seed = 0;
    std::array<double, 3> split_fractions{0.8, 0.1, 0.1};  // train, validation, test
    int label_bins = 10;  // stratification bins over [0, 1]
    topics::InversionMode inversion = topics::InversionMode::BayesWeighted;
};

struct PairSet {
    std::vector<PairSample> samples;
    bool exhausted = false;  // count exceeded the number of distinct pairs
};

// Exactly `count` distinct unordered pairs (or every pair when the vocabulary
// is too small, with `exhausted` set), labeled with taste similarity and
// split by a seeded shuffle. Deterministic for a fixed seed.
PairSet sample_pairs(const corpus::Vocabulary& vocabulary, const topics::TopicModel& model,
                     const SampleOptions& options);

// Largest-remainder apportionment of n into the three split fractions.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

struct DatasetStats {
    std::array<std::size_t, 3> splits{0, 0, 0};
    std::vector<std::size_t> label_histogram;  // equal-width bins over [0, 1]
};

DatasetStats dataset_stats(std::span<const PairSample> samples, int bins = 10);

void write_pairs_csv(std::span<const PairSample> samples, std::ostream& out);
void write_pairs_csv_file(std::span<const PairSample> samples, const std::string& path);
std::vector<PairSample> read_pairs_csv(std::istream& in);
std::vector<PairSample> read_pairs_csv_file(const std::string& path);

}  // namespace tastesim::pairs
