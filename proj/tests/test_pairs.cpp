#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "tastesim/pairs.hpp"

using namespace tastesim;
using namespace tastesim::pairs;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Model whose song theme distributions sit at chosen angles in the positive
// quadrant, so pair labels are cos(angle difference) by construction and can
// be placed in any label bin.
struct AngleWorld {
    topics::TopicModel model;
    corpus::Vocabulary vocabulary;
};

AngleWorld angle_world(const std::vector<double>& angles_deg) {
    AngleWorld world;
    const std::size_t v = angles_deg.size();
    std::vector<double> q(v);
    for (std::size_t i = 0; i < v; ++i) {
        double theta = angles_deg[i] * kPi / 180.0;
        q[i] = std::cos(theta) / (std::cos(theta) + std::sin(theta));
    }
    double sum_q = 0.0;
    for (double x : q) sum_q += x;
    double sum_r = static_cast<double>(v) - sum_q;

    world.model.k = 2;
    world.model.vocab.resize(v);
    world.model.phi.assign(2, std::vector<double>(v, 0.0));
    for (std::size_t i = 0; i < v; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "w%03zu", i);
        world.model.vocab[i] = buf;
        world.model.phi[0][i] = q[i] / sum_q;
        world.model.phi[1][i] = (1.0 - q[i]) / sum_r;
    }
    world.model.topic_weights = {sum_q / v, sum_r / v};
    world.vocabulary.words = world.model.vocab;
    for (std::size_t i = 0; i < v; ++i) {
        world.vocabulary.index.emplace(world.vocabulary.words[i], static_cast<int>(i));
    }
    return world;
}

// Six base offsets x eleven bin-center angles: every label bin is reachable
// with at least six exact-center pairs.
AngleWorld stratifiable_world() {
    std::vector<double> angles;
    for (int g = 0; g < 6; ++g) {
        double base = 0.5 * g;
        angles.push_back(base);
        for (int b = 0; b < 10; ++b) {
            double center = 0.05 + 0.1 * b;
            angles.push_back(base + std::acos(center) * 180.0 / kPi);
        }
    }
    return angle_world(angles);
}

}  // namespace

TEST_CASE("a two-song vocabulary forces the single unordered pair") {
    auto world = angle_world({10.0, 50.0});
    SampleOptions options;
    options.count = 1;
    options.strategy = SamplingStrategy::UniformRandom;
    auto set = sample_pairs(world.vocabulary, world.model, options);
    REQUIRE(set.samples.size() == 1);
    CHECK_FALSE(set.exhausted);
    CHECK(set.samples[0].song_x == "w000");
    CHECK(set.samples[0].song_y == "w001");
    CHECK(set.samples[0].label == doctest::Approx(std::cos(40.0 * kPi / 180.0)));
}

TEST_CASE("requesting more than C(V,2) pairs returns them all with a warning") {
    auto world = angle_world({5.0, 25.0, 45.0, 65.0});
    SampleOptions options;
    options.count = 100;
    options.strategy = SamplingStrategy::UniformRandom;
    auto set = sample_pairs(world.vocabulary, world.model, options);
    CHECK(set.exhausted);
    CHECK(set.samples.size() == 6);
}

TEST_CASE("stratified sampling fills label bins within one of equal") {
    auto world = stratifiable_world();
    SampleOptions options;
    options.count = 50;
    options.strategy = SamplingStrategy::StratifiedByLabel;
    options.label_bins = 10;
    options.seed = 19;
    auto set = sample_pairs(world.vocabulary, world.model, options);
    REQUIRE(set.samples.size() == 50);
    auto stats = dataset_stats(set.samples, 10);
    for (std::size_t b = 0; b < 10; ++b) {
        CHECK(stats.label_histogram[b] >= 4);
        CHECK(stats.label_histogram[b] <= 6);
    }
}

TEST_CASE("sampling rejects vocabularies under two songs") {
    auto world = angle_world({30.0});
    SampleOptions options;
    CHECK_THROWS_AS(sample_pairs(world.vocabulary, world.model, options), ConfigError);
}

TEST_CASE("no duplicate unordered pairs and canonical ordering") {
    auto world = stratifiable_world();
    for (auto strategy : {SamplingStrategy::UniformRandom, SamplingStrategy::CoOccurrenceWeighted,
                          SamplingStrategy::StratifiedByLabel}) {
        SampleOptions options;
        options.count = 200;
        options.strategy = strategy;
        options.seed = 4;
        auto set = sample_pairs(world.vocabulary, world.model, options);
        REQUIRE(set.samples.size() == 200);
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& s : set.samples) {
            CHECK(s.song_x < s.song_y);
            CHECK(seen.emplace(s.song_x, s.song_y).second);
            CHECK(s.label >= 0.0);
            CHECK(s.label <= 1.0);
        }
    }
}

TEST_CASE("labels equal taste_similarity recomputation bitwise") {
    auto world = stratifiable_world();
    SampleOptions options;
    options.count = 80;
    options.seed = 6;
    auto set = sample_pairs(world.vocabulary, world.model, options);
    for (const auto& s : set.samples) {
        auto px = topics::song_theme_distribution(world.model, s.song_x, options.inversion);
        auto py = topics::song_theme_distribution(world.model, s.song_y, options.inversion);
        CHECK(s.label == topics::taste_similarity(px, py));  // bitwise
    }
}

TEST_CASE("split assignment is a stable partition under the same seed") {
    auto world = stratifiable_world();
    SampleOptions options;
    options.count = 100;
    options.seed = 12;
    auto a = sample_pairs(world.vocabulary, world.model, options);
    auto b = sample_pairs(world.vocabulary, world.model, options);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].song_x == b.samples[i].song_x);
        CHECK(a.samples[i].song_y == b.samples[i].song_y);
        CHECK(a.samples[i].split == b.samples[i].split);
    }
    auto stats = dataset_stats(a.samples);
    CHECK(stats.splits[0] == 80);
    CHECK(stats.splits[1] == 10);
    CHECK(stats.splits[2] == 10);
}

TEST_CASE("largest remainder split sizes sum exactly") {
    CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8, 1, 1});
    CHECK(split_sizes(0, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{0, 0, 0});
    CHECK(split_sizes(1, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{1, 0, 0});
    CHECK(split_sizes(7, {1.0 / 3, 1.0 / 3, 1.0 / 3})[0] +
              split_sizes(7, {1.0 / 3, 1.0 / 3, 1.0 / 3})[1] +
              split_sizes(7, {1.0 / 3, 1.0 / 3, 1.0 / 3})[2] ==
          7);
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.2, 0.2}), ConfigError);
}

TEST_CASE("dataset_stats on an empty list is all zeros") {
    auto stats = dataset_stats(std::vector<PairSample>{});
    CHECK(stats.splits == std::array<std::size_t, 3>{0, 0, 0});
    for (auto c : stats.label_histogram) CHECK(c == 0);
}

TEST_CASE("dataset_stats two-bin fixture counts five and five") {
    std::vector<PairSample> samples;
    for (int i = 0; i < 5; ++i) samples.push_back({"a", "b", 0.1, Split::Train});
    for (int i = 0; i < 5; ++i) samples.push_back({"a", "b", 0.9, Split::Test});
    auto stats = dataset_stats(samples, 2);
    CHECK(stats.label_histogram == std::vector<std::size_t>{5, 5});
    CHECK(stats.splits[0] == 5);
    CHECK(stats.splits[2] == 5);
}

TEST_CASE("pairs CSV round-trips labels exactly") {
    auto world = stratifiable_world();
    SampleOptions options;
    options.count = 40;
    options.seed = 3;
    auto set = sample_pairs(world.vocabulary, world.model, options);
    std::ostringstream out;
    write_pairs_csv(set.samples, out);
    std::istringstream in(out.str());
    auto reread = read_pairs_csv(in);
    REQUIRE(reread.size() == set.samples.size());
    for (std::size_t i = 0; i < reread.size(); ++i) {
        CHECK(reread[i].song_x == set.samples[i].song_x);
        CHECK(reread[i].label == set.samples[i].label);  // bitwise through the file
        CHECK(reread[i].split == set.samples[i].split);
    }
}
