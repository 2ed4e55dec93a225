#include "tastesim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tastesim/csv.hpp"
#include "tastesim/rng.hpp"

namespace tastesim::synth {

void WorldSpec::validate() const {
    if (themes < 1) throw ConfigError("world needs at least one theme");
    if (songs_per_theme < 1) throw ConfigError("world needs at least one song per theme");
    if (users < 1) throw ConfigError("world needs at least one user");
    if (weeks < 1) throw ConfigError("world needs at least one week");
    if (mean_streak_length < 1.0) throw ConfigError("mean streak length must be at least 1");
    if (within_gap_mean_minutes <= 0.0 || between_gap_mean_minutes <= 0.0) {
        throw ConfigError("gap means must be positive");
    }
    if (sigma_within < 0.0 || sigma_between <= 0.0 || sigma_within >= sigma_between) {
        throw ConfigError("world requires 0 <= sigma_within < sigma_between");
    }
    if (attr_channels < 1 || attr_length < 1) {
        throw ConfigError("attribute tensor shape must be positive");
    }
}

namespace {

std::string song_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04d", index);
    return buf;
}

std::string user_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%03d", index);
    return buf;
}

std::string feature_name(int channel) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ch%02d", channel);
    return buf;
}

}  // namespace

World generate_world(const WorldSpec& spec) {
    spec.validate();
    World world;
    SplitMix64 rng(spec.seed);

    const int total_songs = spec.themes * spec.songs_per_theme;
    std::vector<int> theme_of(total_songs);
    for (int s = 0; s < total_songs; ++s) {
        theme_of[s] = s / spec.songs_per_theme;
        world.true_theme.emplace(song_name(s), theme_of[s]);
    }

    // Theme prototypes, then songs as prototype + within-theme noise.
    const int dims = spec.attr_channels * spec.attr_length;
    std::vector<std::vector<double>> prototypes(spec.themes, std::vector<double>(dims));
    for (auto& proto : prototypes) {
        for (auto& v : proto) v = rng.next_gaussian() * spec.sigma_between;
    }
    world.attributes.reserve(total_songs);
    for (int s = 0; s < total_songs; ++s) {
        ingest::SongAttributeRecord rec;
        rec.song_key = song_name(s);
        rec.artist_id = "a" + std::to_string(theme_of[s]);
        rec.title = rec.song_key;
        const auto& proto = prototypes[theme_of[s]];
        for (int c = 0; c < spec.attr_channels; ++c) {
            std::vector<double> seq(spec.attr_length);
            for (int t = 0; t < spec.attr_length; ++t) {
                seq[t] = proto[c * spec.attr_length + t] + rng.next_gaussian() * spec.sigma_within;
            }
            rec.features.emplace(feature_name(c), std::move(seq));
        }
        world.attributes.push_back(std::move(rec));
    }

    // Streams: geometric streak lengths within one theme, exponential gaps;
    // theme switches draw uniformly from the remaining themes.
    const double horizon_seconds = static_cast<double>(spec.weeks) * 7.0 * 86400.0;
    const double p_stop = 1.0 / spec.mean_streak_length;
    for (int u = 0; u < spec.users; ++u) {
        std::string user = user_name(u);
        double t = static_cast<double>(spec.start_time) +
                   rng.next_unit() * spec.within_gap_mean_minutes * 60.0;
        const double user_end = static_cast<double>(spec.start_time) + horizon_seconds;
        int theme = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.themes)));
        while (t < user_end) {
            // one streak in the current theme
            while (true) {
                int song = theme * spec.songs_per_theme +
                           static_cast<int>(rng.next_below(
                               static_cast<std::uint64_t>(spec.songs_per_theme)));
                ingest::ListeningEvent ev;
                ev.user_id = user;
                ev.timestamp = static_cast<EpochSeconds>(t);
                ev.artist_id = "a" + std::to_string(theme);
                ev.artist_name = "artist " + std::to_string(theme);
                ev.track_id = song_name(song);
                ev.song_title = song_name(song);
                world.events.push_back(std::move(ev));
                if (rng.next_unit() < p_stop) break;
                t += rng.next_exponential(spec.within_gap_mean_minutes * 60.0);
                if (t >= user_end) break;
            }
            t += rng.next_exponential(spec.between_gap_mean_minutes * 60.0);
            if (spec.themes > 1) {
                int offset = 1 + static_cast<int>(rng.next_below(
                                     static_cast<std::uint64_t>(spec.themes - 1)));
                theme = (theme + offset) % spec.themes;
            }
        }
    }
    return world;
}

void write_world(const World& world, const std::string& events_path,
                 const std::string& attributes_path, const std::string& truth_path) {
    ingest::write_events_file(world.events, events_path);
    ingest::write_attribute_records_file(world.attributes, attributes_path);
    std::ofstream truth(truth_path);
    if (!truth) throw IoError("cannot write ground truth file: " + truth_path);
    truth << "song_key,true_theme\n";
    for (const auto& [song, theme] : world.true_theme) {
        truth << csv_field(song) << ',' << theme << '\n';
    }
    if (!truth) throw IoError("write failure: " + truth_path);
}

std::map<std::string, int> read_ground_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ground truth file: " + path);
    std::map<std::string, int> truth;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto fields = parse_csv_line(line);
        if (fields.size() != 2) throw DataError("ground truth line needs 2 fields");
        truth.emplace(fields[0], std::stoi(fields[1]));
    }
    return truth;
}

}  // namespace tastesim::synth
