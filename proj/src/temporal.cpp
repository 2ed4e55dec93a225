#include "tastesim/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_map>

#include "tastesim/csv.hpp"
#include "tastesim/mathutil.hpp"

namespace tastesim::temporal {

namespace {

// Theme distributions for every vocabulary song, indexed by vocab id;
// songs outside the vocabulary have no distribution and their pairs are skipped.
struct DistributionCache {
    const topics::TopicModel* model;
    topics::InversionMode mode;
    std::unordered_map<std::string, std::vector<double>> cache;

    const std::vector<double>* lookup(const std::string& song_key) {
        auto it = cache.find(song_key);
        if (it != cache.end()) return it->second.empty() ? nullptr : &it->second;
        std::vector<double> dist;
        try {
            dist = topics::song_theme_distribution(*model, song_key, mode);
        } catch (const DataError&) {
            // unknown song: cache the miss
        }
        auto [slot, _] = cache.emplace(song_key, std::move(dist));
        return slot->second.empty() ? nullptr : &slot->second;
    }
};

std::map<std::string, std::vector<const ingest::ListeningEvent*>> group_by_user(
    std::span<const ingest::ListeningEvent> events) {
    std::map<std::string, std::vector<const ingest::ListeningEvent*>> streams;
    for (const auto& ev : events) streams[ev.user_id].push_back(&ev);
    for (auto& [user, stream] : streams) {
        for (std::size_t i = 1; i < stream.size(); ++i) {
            if (stream[i]->timestamp < stream[i - 1]->timestamp) {
                throw DataError("events for user " + user + " are not time-sorted");
            }
        }
    }
    return streams;
}

}  // namespace

GapScanResult gap_similarity_scan(std::span<const ingest::ListeningEvent> events,
                                  const topics::TopicModel& model, double time_scale_minutes,
                                  topics::InversionMode mode) {
    if (time_scale_minutes <= 0.0) throw ConfigError("time scale must be positive");
    DistributionCache dists{&model, mode, {}};
    GapScanResult result;
    for (const auto& [user, stream] : group_by_user(events)) {
        for (std::size_t i = 1; i < stream.size(); ++i) {
            const auto* px = dists.lookup(stream[i - 1]->song_key);
            const auto* py = dists.lookup(stream[i]->song_key);
            if (!px || !py) {
                ++result.skipped_pairs;
                continue;
            }
            GapObservation obs;
            obs.user_id = user;
            double gap_seconds =
                static_cast<double>(stream[i]->timestamp - stream[i - 1]->timestamp);
            obs.delta_t = gap_seconds / (60.0 * time_scale_minutes);
            obs.log_delta_t = std::log(std::max(obs.delta_t, 1.0));
            obs.sim = topics::taste_similarity(*px, *py);
            result.observations.push_back(std::move(obs));
        }
    }
    return result;
}

std::vector<GapHistogramBin> gap_histogram(std::span<const GapObservation> observations,
                                           int bins, std::optional<double> lo,
                                           std::optional<double> hi) {
    if (bins <= 0) throw ConfigError("gap histogram needs at least one bin");
    if (observations.empty()) throw DataError("gap histogram needs at least one observation");
    double min_v = lo.value_or(observations[0].log_delta_t);
    double max_v = hi.value_or(observations[0].log_delta_t);
    if (!lo || !hi) {
        for (const auto& obs : observations) {
            if (!lo) min_v = std::min(min_v, obs.log_delta_t);
            if (!hi) max_v = std::max(max_v, obs.log_delta_t);
        }
    }
    if (max_v <= min_v) max_v = min_v + 1.0;
    double width = (max_v - min_v) / bins;
    std::vector<GapHistogramBin> hist(bins);
    for (int b = 0; b < bins; ++b) {
        hist[b].lo = min_v + b * width;
        hist[b].hi = min_v + (b + 1) * width;
    }
    for (const auto& obs : observations) {
        int b = static_cast<int>((obs.log_delta_t - min_v) / width);
        b = std::clamp(b, 0, bins - 1);
        ++hist[b].count;
        hist[b].mean_sim += obs.sim;
    }
    for (auto& bin : hist) {
        if (bin.count > 0) bin.mean_sim /= static_cast<double>(bin.count);
    }
    return hist;
}

std::vector<SkipDistribution> n_skip_analysis(std::span<const ingest::ListeningEvent> events,
                                              const topics::TopicModel& model, int max_skip,
                                              topics::InversionMode mode) {
    if (max_skip < 0) throw ConfigError("max_skip must be non-negative");
    DistributionCache dists{&model, mode, {}};
    std::vector<SkipDistribution> levels(max_skip + 1);
    for (int n = 0; n <= max_skip; ++n) levels[n].n = n;
    for (const auto& [user, stream] : group_by_user(events)) {
        for (int n = 0; n <= max_skip; ++n) {
            std::size_t stride = static_cast<std::size_t>(n) + 1;
            if (stream.size() <= stride) continue;
            for (std::size_t i = 0; i + stride < stream.size(); ++i) {
                const auto* px = dists.lookup(stream[i]->song_key);
                const auto* py = dists.lookup(stream[i + stride]->song_key);
                if (!px || !py) continue;
                levels[n].similarities.push_back(topics::taste_similarity(*px, *py));
            }
        }
    }
    for (auto& level : levels) {
        level.mean = mean_of(level.similarities);
        level.stddev = stddev_of(level.similarities);
    }
    return levels;
}

void write_gap_csv(std::span<const GapHistogramBin> bins, std::ostream& out) {
    out << "log_dt_lo,log_dt_hi,count,mean_sim\n";
    for (const auto& bin : bins) {
        out << format_double(bin.lo) << ',' << format_double(bin.hi) << ',' << bin.count << ','
            << format_double(bin.mean_sim) << '\n';
    }
}

void write_nskip_csv(std::span<const SkipDistribution> levels, std::ostream& out) {
    out << "n,count,mean,std,min,q25,median,q75,max\n";
    for (const auto& level : levels) {
        Quartiles q = quartiles_of(level.similarities);
        out << level.n << ',' << level.similarities.size() << ',' << format_double(level.mean)
            << ',' << format_double(level.stddev) << ',' << format_double(q.min) << ','
            << format_double(q.q25) << ',' << format_double(q.median) << ','
            << format_double(q.q75) << ',' << format_double(q.max) << '\n';
    }
}

}  // namespace tastesim::temporal
