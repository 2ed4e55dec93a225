#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/ingest.hpp"

namespace tastesim::synth {

// Synthetic world with planted themes: each song belongs to one theme, song
// attributes are the theme prototype plus noise, and user streams alternate
// between taste streaks (short gaps, one theme) and theme switches (long gaps).
struct WorldSpec {
    int themes = 4;
    int songs_per_theme = 25;
    int users = 50;
    int weeks = 20;
    double mean_streak_length = 8.0;  // geometric, at least 1
    double within_gap_mean_minutes = 3.0;
    double between_gap_mean_minutes = 1300.0;  // roughly one taste bundle per day
    double sigma_within = 0.25;   // song noise around its theme prototype
    double sigma_between = 1.0;   // prototype spread; must exceed sigma_within
    int attr_channels = 4;
    int attr_length = 64;
    std::uint64_t seed = 42;
    EpochSeconds start_time = 1578268800;  // 2020-01-06T00:00:00Z, a Monday

    void validate() const;
};

struct World {
    std::vector<ingest::ListeningEvent> events;  // time-sorted per user
    std::vector<ingest::SongAttributeRecord> attributes;
    std::map<std::string, int> true_theme;  // song_key -> planted theme
};

World generate_world(const WorldSpec& spec);

void write_world(const World& world, const std::string& events_path,
                 const std::string& attributes_path, const std::string& truth_path);
std::map<std::string, int> read_ground_truth_csv(const std::string& path);

}  // namespace tastesim::synth
