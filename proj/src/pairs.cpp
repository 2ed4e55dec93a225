#include "tastesim/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "tastesim/csv.hpp"
#include "tastesim/rng.hpp"

namespace tastesim::pairs {

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "validation") return Split::Validation;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split: " + name);
}

SamplingStrategy strategy_from_name(const std::string& name) {
    if (name == "uniform-random") return SamplingStrategy::UniformRandom;
    if (name == "co-occurrence-weighted") return SamplingStrategy::CoOccurrenceWeighted;
    if (name == "stratified-by-label") return SamplingStrategy::StratifiedByLabel;
    throw ConfigError("unknown sampling strategy: " + name);
}

const char* strategy_name(SamplingStrategy strategy) {
    switch (strategy) {
        case SamplingStrategy::UniformRandom: return "uniform-random";
        case SamplingStrategy::CoOccurrenceWeighted: return "co-occurrence-weighted";
        case SamplingStrategy::StratifiedByLabel: return "stratified-by-label";
    }
    return "uniform-random";
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (total <= 0.0 || std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
    for (double f : fractions) {
        if (f < 0.0) throw ConfigError("split fractions must be non-negative");
    }
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = static_cast<double>(n) * fractions[i];
        sizes[i] = static_cast<std::size_t>(exact);
        remainders[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (remainders[i] > remainders[best]) best = i;
        }
        ++sizes[best];
        remainders[best] = -1.0;
        ++assigned;
    }
    return sizes;
}

namespace {

using PairIndex = std::pair<int, int>;  // vocab ids, first < second

std::uint64_t encode(int i, int j, std::size_t v) {
    return static_cast<std::uint64_t>(i) * v + static_cast<std::uint64_t>(j);
}

// All theme distributions up front; vocab order is sorted so vocab-id pairs
// (i < j) are already canonical by song_key.
std::vector<std::vector<double>> all_distributions(const corpus::Vocabulary& vocabulary,
                                                   const topics::TopicModel& model,
                                                   topics::InversionMode mode) {
    std::vector<std::vector<double>> dists(vocabulary.size());
    for (std::size_t w = 0; w < vocabulary.size(); ++w) {
        dists[w] = topics::song_theme_distribution(model, vocabulary.words[w], mode);
    }
    return dists;
}

std::vector<PairIndex> enumerate_all_pairs(int v) {
    std::vector<PairIndex> all;
    all.reserve(static_cast<std::size_t>(v) * (v - 1) / 2);
    for (int i = 0; i < v; ++i) {
        for (int j = i + 1; j < v; ++j) all.emplace_back(i, j);
    }
    return all;
}

std::vector<PairIndex> sample_uniform(int v, std::size_t requested, std::size_t total_pairs,
                                      SplitMix64& rng) {
    if (total_pairs <= 4'000'000 || requested * 4 >= total_pairs) {
        auto all = enumerate_all_pairs(v);
        rng.shuffle(all);
        all.resize(std::min(requested, all.size()));
        return all;
    }
    std::vector<PairIndex> out;
    std::unordered_set<std::uint64_t> used;
    out.reserve(requested);
    while (out.size() < requested) {
        int i = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(v)));
        int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(v)));
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (used.insert(encode(i, j, v)).second) out.emplace_back(i, j);
    }
    return out;
}

// Pick theme ~ p(z), then both songs ~ phi[theme]; pairs co-occurring inside
// a theme are drawn more often.
std::vector<PairIndex> sample_cooccurrence(const topics::TopicModel& model, int v,
                                           std::size_t requested, std::size_t total_pairs,
                                           SplitMix64& rng) {
    if (requested >= total_pairs) return enumerate_all_pairs(v);
    std::vector<double> topic_cdf(model.k);
    double acc = 0.0;
    for (int t = 0; t < model.k; ++t) {
        acc += model.topic_weights[t];
        topic_cdf[t] = acc;
    }
    std::vector<std::vector<double>> word_cdf(model.k, std::vector<double>(v));
    for (int t = 0; t < model.k; ++t) {
        double s = 0.0;
        for (int w = 0; w < v; ++w) {
            s += model.phi[t][w];
            word_cdf[t][w] = s;
        }
    }
    auto draw = [&](const std::vector<double>& cdf) {
        double u = rng.next_unit() * cdf.back();
        return static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    };
    std::vector<PairIndex> out;
    std::unordered_set<std::uint64_t> used;
    out.reserve(requested);
    std::size_t attempts = 0;
    const std::size_t max_attempts = std::max<std::size_t>(1'000'000, requested * 200);
    while (out.size() < requested && attempts < max_attempts) {
        ++attempts;
        int t = draw(topic_cdf);
        int i = draw(word_cdf[t]);
        int j = draw(word_cdf[t]);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (used.insert(encode(i, j, v)).second) out.emplace_back(i, j);
    }
    // Stalled sampler: top up deterministically so the count contract holds.
    for (int i = 0; i < v && out.size() < requested; ++i) {
        for (int j = i + 1; j < v && out.size() < requested; ++j) {
            if (used.insert(encode(i, j, v)).second) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<PairIndex> sample_stratified(const std::vector<std::vector<double>>& dists, int v,
                                         std::size_t requested, std::size_t total_pairs,
                                         int label_bins, SplitMix64& rng) {
    if (label_bins < 1) throw ConfigError("label_bins must be positive");
    // Candidate pool: every pair when feasible, otherwise a large uniform draw.
    std::vector<PairIndex> pool;
    if (total_pairs <= std::max<std::size_t>(4'000'000, requested * 20)) {
        pool = enumerate_all_pairs(v);
    } else {
        pool = sample_uniform(v, requested * 20, total_pairs, rng);
    }
    std::vector<std::vector<PairIndex>> buckets(label_bins);
    for (const auto& [i, j] : pool) {
        double label = topics::taste_similarity(dists[i], dists[j]);
        int b = std::min(static_cast<int>(label * label_bins), label_bins - 1);
        buckets[b].emplace_back(i, j);
    }
    for (auto& bucket : buckets) rng.shuffle(bucket);

    // Equal quotas by largest remainder, then round-robin redistribution of
    // whatever under-filled bins could not supply.
    std::vector<std::size_t> quota(label_bins, requested / label_bins);
    std::size_t leftover = requested - quota[0] * label_bins;
    for (std::size_t b = 0; b < leftover; ++b) ++quota[b];

    std::vector<std::size_t> taken(label_bins, 0);
    std::vector<PairIndex> out;
    out.reserve(requested);
    for (int b = 0; b < label_bins; ++b) {
        taken[b] = std::min(quota[b], buckets[b].size());
        for (std::size_t i = 0; i < taken[b]; ++i) out.push_back(buckets[b][i]);
    }
    while (out.size() < requested) {
        bool progressed = false;
        for (int b = 0; b < label_bins && out.size() < requested; ++b) {
            if (taken[b] < buckets[b].size()) {
                out.push_back(buckets[b][taken[b]++]);
                progressed = true;
            }
        }
        if (!progressed) break;  // pool exhausted
    }
    return out;
}

}  // namespace

PairSet sample_pairs(const corpus::Vocabulary& vocabulary, const topics::TopicModel& model,
                     const SampleOptions& options) {
    const int v = static_cast<int>(vocabulary.size());
    if (v < 2) throw ConfigError("pair sampling needs at least 2 songs in the vocabulary");
    if (options.count < 1) throw ConfigError("pair count must be at least 1");
    const std::size_t total_pairs =
        static_cast<std::size_t>(v) * static_cast<std::size_t>(v - 1) / 2;

    PairSet result;
    result.exhausted = options.count > total_pairs;
    const std::size_t requested = std::min(options.count, total_pairs);

    auto dists = all_distributions(vocabulary, model, options.inversion);
    SplitMix64 rng(options.seed);

    std::vector<PairIndex> picked;
    switch (options.strategy) {
        case SamplingStrategy::UniformRandom:
            picked = sample_uniform(v, requested, total_pairs, rng);
            break;
        case SamplingStrategy::CoOccurrenceWeighted:
            picked = sample_cooccurrence(model, v, requested, total_pairs, rng);
            break;
        case SamplingStrategy::StratifiedByLabel:
            picked = sample_stratified(dists, v, requested, total_pairs, options.label_bins, rng);
            break;
    }

    result.samples.reserve(picked.size());
    for (const auto& [i, j] : picked) {
        PairSample sample;
        sample.song_x = vocabulary.words[i];
        sample.song_y = vocabulary.words[j];
        sample.label = topics::taste_similarity(dists[i], dists[j]);
        result.samples.push_back(std::move(sample));
    }

    rng.shuffle(result.samples);
    auto sizes = split_sizes(result.samples.size(), options.split_fractions);
    for (std::size_t i = 0; i < result.samples.size(); ++i) {
        if (i < sizes[0]) result.samples[i].split = Split::Train;
        else if (i < sizes[0] + sizes[1]) result.samples[i].split = Split::Validation;
        else result.samples[i].split = Split::Test;
    }
    return result;
}

DatasetStats dataset_stats(std::span<const PairSample> samples, int bins) {
    if (bins < 1) throw ConfigError("label_bins must be positive");
    DatasetStats stats;
    stats.label_histogram.assign(bins, 0);
    for (const auto& s : samples) {
        ++stats.splits[static_cast<int>(s.split)];
        int b = std::clamp(static_cast<int>(s.label * bins), 0, bins - 1);
        ++stats.label_histogram[b];
    }
    return stats;
}

void write_pairs_csv(std::span<const PairSample> samples, std::ostream& out) {
    out << "song_x,song_y,label,split\n";
    for (const auto& s : samples) {
        out << csv_field(s.song_x) << ',' << csv_field(s.song_y) << ',' << format_double(s.label)
            << ',' << split_name(s.split) << '\n';
    }
}

void write_pairs_csv_file(std::span<const PairSample> samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write pairs file: " + path);
    write_pairs_csv(samples, out);
    if (!out) throw IoError("write failure: " + path);
}

std::vector<PairSample> read_pairs_csv(std::istream& in) {
    std::vector<PairSample> samples;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto fields = parse_csv_line(line);
        if (fields.size() != 4) {
            throw DataError("pairs line " + std::to_string(line_no) + ": expected 4 fields");
        }
        PairSample s;
        s.song_x = fields[0];
        s.song_y = fields[1];
        try {
            s.label = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw DataError("pairs line " + std::to_string(line_no) + ": bad label");
        }
        s.split = split_from_name(fields[3]);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<PairSample> read_pairs_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pairs file: " + path);
    return read_pairs_csv(in);
}

}  // namespace tastesim::pairs
