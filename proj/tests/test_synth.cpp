#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tastesim/ingest.hpp"
#include "tastesim/mathutil.hpp"
#include "tastesim/rng.hpp"
#include "tastesim/synth.hpp"

using namespace tastesim;
using namespace tastesim::synth;

namespace {

WorldSpec small_spec() {
    WorldSpec spec;
    spec.themes = 4;
    spec.songs_per_theme = 25;
    spec.users = 10;
    spec.weeks = 4;
    spec.seed = 13;
    spec.attr_channels = 3;
    spec.attr_length = 24;
    return spec;
}

}  // namespace

TEST_CASE("single-theme worlds put every song in that theme") {
    WorldSpec spec;
    spec.themes = 1;
    spec.songs_per_theme = 6;
    spec.users = 3;
    spec.weeks = 2;
    spec.seed = 1;
    auto world = generate_world(spec);
    CHECK(world.true_theme.size() == 6);
    for (const auto& [_, theme] : world.true_theme) CHECK(theme == 0);
    for (const auto& ev : world.events) CHECK(ev.artist_id == "a0");
}

TEST_CASE("world size follows the spec counts") {
    WorldSpec spec;
    spec.themes = 4;
    spec.songs_per_theme = 25;
    spec.users = 50;
    spec.weeks = 20;
    spec.seed = 42;
    auto world = generate_world(spec);
    CHECK(world.true_theme.size() == 100);
    CHECK(world.attributes.size() == 100);
    // at most users x weeks documents exist by construction
    std::vector<ingest::ListeningEvent> events = world.events;
    for (auto& ev : events) ev.song_key = ev.track_id;
    std::set<std::pair<std::string, std::int64_t>> buckets;
    for (const auto& ev : events) buckets.emplace(ev.user_id, week_index_of(ev.timestamp));
    CHECK(buckets.size() <= 1000);
}

TEST_CASE("gap samples respect their configured means within ten percent") {
    WorldSpec spec = small_spec();
    spec.users = 40;
    spec.weeks = 6;
    spec.within_gap_mean_minutes = 3.0;
    spec.between_gap_mean_minutes = 300.0;
    auto world = generate_world(spec);
    // Within-streak gaps are same-theme consecutive pairs; between-streak
    // gaps change theme. Theme is recoverable from artist_id.
    std::vector<double> within, between;
    std::map<std::string, std::vector<const ingest::ListeningEvent*>> streams;
    for (const auto& ev : world.events) streams[ev.user_id].push_back(&ev);
    for (const auto& [_, stream] : streams) {
        for (std::size_t i = 1; i < stream.size(); ++i) {
            double gap = static_cast<double>(stream[i]->timestamp - stream[i - 1]->timestamp) / 60.0;
            if (stream[i]->artist_id == stream[i - 1]->artist_id) within.push_back(gap);
            else between.push_back(gap);
        }
    }
    REQUIRE(within.size() > 1000);
    REQUIRE(between.size() > 200);
    CHECK(mean_of(within) == doctest::Approx(3.0).epsilon(0.1));
    CHECK(mean_of(between) == doctest::Approx(300.0).epsilon(0.1));
}

TEST_CASE("regeneration with the same seed is bit-identical") {
    auto a = generate_world(small_spec());
    auto b = generate_world(small_spec());
    REQUIRE(a.events.size() == b.events.size());
    CHECK(a.events == b.events);
    REQUIRE(a.attributes.size() == b.attributes.size());
    for (std::size_t i = 0; i < a.attributes.size(); ++i) {
        CHECK(a.attributes[i].song_key == b.attributes[i].song_key);
        CHECK(a.attributes[i].features == b.attributes[i].features);
    }
    auto spec = small_spec();
    spec.seed = 14;
    auto c = generate_world(spec);
    CHECK(a.events != c.events);
}

TEST_CASE("within-theme attribute similarity dominates between-theme") {
    auto world = generate_world(small_spec());
    ingest::TensorLayout layout;
    for (const auto& [name, _] : world.attributes.front().features) {
        layout.channel_order.push_back(name);
    }
    layout.target_length = 24;
    std::vector<ingest::FeatureTensor> tensors;
    std::vector<int> theme;
    for (const auto& rec : world.attributes) {
        tensors.push_back(ingest::assemble_tensor(rec, layout));
        theme.push_back(world.true_theme.at(rec.song_key));
    }
    double within_sum = 0, between_sum = 0;
    int within_n = 0, between_n = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        for (std::size_t j = i + 1; j < tensors.size(); ++j) {
            double sim = cosine_similarity(tensors[i].values, tensors[j].values);
            if (theme[i] == theme[j]) {
                within_sum += sim;
                ++within_n;
            } else {
                between_sum += sim;
                ++between_n;
            }
        }
    }
    double within_mean = within_sum / within_n;
    double between_mean = between_sum / between_n;
    CHECK(within_mean > between_mean + 0.1);
}

TEST_CASE("event streams are time-sorted per user by construction") {
    auto world = generate_world(small_spec());
    std::map<std::string, EpochSeconds> last;
    for (const auto& ev : world.events) {
        auto it = last.find(ev.user_id);
        if (it != last.end()) CHECK(ev.timestamp >= it->second);
        last[ev.user_id] = ev.timestamp;
    }
}

TEST_CASE("world files land in the ingest formats") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "tastesim_world_test";
    fs::create_directories(dir);
    auto world = generate_world(small_spec());
    std::string events = (dir / "events.tsv").string();
    std::string attrs = (dir / "attributes.jsonl").string();
    std::string truth = (dir / "ground_truth.csv").string();
    write_world(world, events, attrs, truth);

    auto report = ingest::parse_events_file(events, ingest::MalformedLinePolicy::Strict, true);
    CHECK(report.events.size() == world.events.size());
    CHECK(report.malformed_count == 0);
    auto records = ingest::parse_attribute_records_file(attrs);
    CHECK(records.size() == world.attributes.size());
    auto loaded_truth = read_ground_truth_csv(truth);
    CHECK(loaded_truth == world.true_theme);
    fs::remove_all(dir);
}

TEST_CASE("world spec validation rejects bad sigma ordering") {
    WorldSpec spec = small_spec();
    spec.sigma_within = 2.0;
    spec.sigma_between = 1.0;
    CHECK_THROWS_AS(generate_world(spec), ConfigError);
    spec = small_spec();
    spec.users = 0;
    CHECK_THROWS_AS(generate_world(spec), ConfigError);
}
