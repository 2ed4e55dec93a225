#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "tastesim/mathutil.hpp"
#include "tastesim/topics.hpp"

using namespace tastesim;
using namespace tastesim::topics;

namespace {

corpus::Corpus corpus_from(const std::vector<std::map<std::string, int>>& docs) {
    corpus::Corpus c;
    int week = 0;
    for (const auto& counts : docs) {
        corpus::CorpusDocument doc;
        doc.user_id = "u" + std::to_string(week);
        doc.week_index = week++;
        doc.counts = counts;
        c.documents.push_back(std::move(doc));
    }
    std::vector<std::string> words;
    for (const auto& doc : c.documents) {
        for (const auto& [song, _] : doc.counts) words.push_back(song);
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    c.vocabulary.words = words;
    for (std::size_t i = 0; i < words.size(); ++i) {
        c.vocabulary.index.emplace(words[i], static_cast<int>(i));
    }
    return c;
}

// Two disjoint song clusters, no shared vocabulary.
corpus::Corpus planted_two_cluster_corpus(int docs_per_cluster, int tokens_per_doc) {
    std::vector<std::map<std::string, int>> docs;
    for (int cluster = 0; cluster < 2; ++cluster) {
        for (int d = 0; d < docs_per_cluster; ++d) {
            std::map<std::string, int> counts;
            for (int t = 0; t < tokens_per_doc; ++t) {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "%c%d", cluster == 0 ? 'a' : 'b', (d + t) % 5);
                ++counts[buf];
            }
            docs.push_back(std::move(counts));
        }
    }
    return corpus_from(docs);
}

LdaOptions quick_options(int k, std::uint64_t seed) {
    LdaOptions opt;
    opt.k = k;
    opt.alpha = 0.5;
    opt.beta = 0.01;
    opt.iterations = 300;
    opt.burn_in = 150;
    opt.sample_lag = 10;
    opt.seed = seed;
    return opt;
}

}  // namespace

TEST_CASE("degenerate single-song corpus concentrates phi mass on that song") {
    auto corpus = corpus_from({{{"only", 5}}, {{"only", 7}}, {{"only", 3}}});
    auto model = fit_lda(corpus, quick_options(2, 1));
    double best = std::max(model.phi[0][0], model.phi[1][0]);
    CHECK(best >= 0.99);
}

TEST_CASE("two disjoint clusters are recovered by greedy alignment") {
    auto corpus = planted_two_cluster_corpus(10, 30);
    auto model = fit_lda(corpus, quick_options(2, 42));
    std::map<std::string, int> clusters;
    for (const auto& word : model.vocab) clusters[word] = word[0] == 'a' ? 0 : 1;
    auto alignment = align_themes_to_clusters(model, clusters);
    REQUIRE(alignment.own_cluster_mass.size() == 2);
    for (double mass : alignment.own_cluster_mass) CHECK(mass >= 0.9);
    CHECK(alignment.cluster_of_theme[0] != alignment.cluster_of_theme[1]);
}

TEST_CASE("k = 20 configuration produces a 20-theme model") {
    std::vector<std::map<std::string, int>> docs;
    for (int d = 0; d < 30; ++d) {
        std::map<std::string, int> counts;
        for (int t = 0; t < 8; ++t) ++counts["w" + std::to_string((d * 3 + t * 7) % 40)];
        docs.push_back(std::move(counts));
    }
    LdaOptions opt;
    opt.k = 20;
    opt.iterations = 30;
    opt.burn_in = 10;
    opt.seed = 1;
    auto model = fit_lda(corpus_from(docs), opt);
    CHECK(model.k == 20);
    CHECK(model.phi.size() == 20);
    CHECK(model.alpha == doctest::Approx(50.0 / 20.0));  // default alpha = 50/K
    for (const auto& row : model.phi) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    for (const auto& row : model.theta) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    double wsum = 0.0;
    for (double v : model.topic_weights) wsum += v;
    CHECK(std::abs(wsum - 1.0) < 1e-9);
}

TEST_CASE("fit_lda validates its configuration eagerly") {
    auto corpus = corpus_from({{{"a", 1}}});
    CHECK_THROWS_AS(fit_lda(corpus, quick_options(1, 0)), ConfigError);
    CHECK_THROWS_AS(fit_lda(corpus_from({}), quick_options(2, 0)), ConfigError);
    auto bad = quick_options(2, 0);
    bad.iterations = 100;
    bad.burn_in = 100;
    CHECK_THROWS_AS(fit_lda(corpus, bad), ConfigError);
}

TEST_CASE("song_theme_distribution is one-hot under exclusive ownership") {
    TopicModel model;
    model.k = 2;
    model.vocab = {"wa", "wb"};
    model.phi = {{1.0, 0.0}, {0.0, 1.0}};
    model.topic_weights = {0.5, 0.5};
    auto p = song_theme_distribution(model, "wb");
    CHECK(p[0] == doctest::Approx(0.0));
    CHECK(p[1] == doctest::Approx(1.0));
}

TEST_CASE("song_theme_distribution applies Bayes rule with topic weights") {
    TopicModel model;
    model.k = 2;
    model.vocab = {"w"};
    model.phi = {{0.2}, {0.1}};
    model.topic_weights = {0.5, 0.5};
    auto p = song_theme_distribution(model, "w");
    CHECK(p[0] == doctest::Approx(2.0 / 3.0));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0));

    // Column normalization ignores the weights.
    model.topic_weights = {0.9, 0.1};
    auto q = song_theme_distribution(model, "w", InversionMode::ColumnNormalized);
    CHECK(q[0] == doctest::Approx(2.0 / 3.0));
    CHECK(q[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("beta smoothing keeps zero-count songs strictly positive") {
    auto corpus = corpus_from({{{"seen", 10}, {"rare", 1}}, {{"seen", 12}}});
    auto model = fit_lda(corpus, quick_options(2, 9));
    auto p = song_theme_distribution(model, "rare");
    for (double v : p) CHECK(v > 0.0);
    CHECK_THROWS_AS(song_theme_distribution(model, "unknown-song"), DataError);
}

TEST_CASE("taste similarity of identical distributions is 1") {
    std::vector<double> p{0.25, 0.5, 0.25};
    CHECK(taste_similarity(p, p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("taste similarity of one-hot orthogonal themes is 0") {
    std::vector<double> p{1.0, 0.0};
    std::vector<double> q{0.0, 1.0};
    CHECK(taste_similarity(p, q) == 0.0);
}

TEST_CASE("taste similarity matches the direct cosine evaluation") {
    std::vector<double> p{0.5, 0.5};
    std::vector<double> q{0.25, 0.75};
    // 0.5 / (sqrt(0.5) * sqrt(0.625))
    CHECK(taste_similarity(p, q) == doctest::Approx(0.8944271909999159).epsilon(1e-12));
}

TEST_CASE("taste similarity rejects zero vectors") {
    std::vector<double> z{0.0, 0.0};
    std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(taste_similarity(z, p), DataError);
}

TEST_CASE("gibbs count matrices stay exact marginals across sweeps") {
    auto corpus = planted_two_cluster_corpus(6, 12);
    auto state = init_gibbs(corpus, 3, 7);
    CHECK(counts_consistent(state));
    for (int sweep = 0; sweep < 5; ++sweep) {
        gibbs_sweep(state, 0.5, 0.01);
        CHECK(counts_consistent(state));
    }
    CHECK(state.sweep_count == 5);
}

TEST_CASE("held-out log likelihood trends upward through burn-in") {
    // Strongly clustered corpus; hold out ~10% of each document's tokens.
    auto full = planted_two_cluster_corpus(12, 40);
    corpus::Corpus train = full, heldout = full;
    for (std::size_t d = 0; d < full.documents.size(); ++d) {
        train.documents[d].counts.clear();
        heldout.documents[d].counts.clear();
        int taken = 0;
        for (const auto& [song, n] : full.documents[d].counts) {
            int hold = (taken++ % 3 == 0 && n > 1) ? 1 : 0;
            if (n - hold > 0) train.documents[d].counts[song] = n - hold;
            if (hold > 0) heldout.documents[d].counts[song] = hold;
        }
    }
    LdaOptions opt = quick_options(2, 21);
    opt.iterations = 200;
    opt.burn_in = 150;
    opt.record_likelihood = true;
    FitTrace trace;
    auto model = fit_lda(train, opt, &trace, &heldout);
    REQUIRE(trace.heldout_log_likelihood.size() == 200);
    // 50-sweep smoothed windows over burn-in: non-decreasing in trend.
    auto window_mean = [&](int start) {
        double s = 0.0;
        for (int i = start; i < start + 50; ++i) s += trace.heldout_log_likelihood[i];
        return s / 50.0;
    };
    double w0 = window_mean(0), w1 = window_mean(50), w2 = window_mean(100);
    CHECK(w1 >= w0 - 5e-3);
    CHECK(w2 >= w1 - 5e-3);
    CHECK(w2 > w0);  // clear improvement overall
    CHECK(model.k == 2);
}

TEST_CASE("identical seeds give bit-identical models") {
    auto corpus = planted_two_cluster_corpus(8, 20);
    auto m1 = fit_lda(corpus, quick_options(4, 31));
    auto m2 = fit_lda(corpus, quick_options(4, 31));
    CHECK(m1.theta == m2.theta);
    CHECK(m1.phi == m2.phi);
    CHECK(m1.topic_weights == m2.topic_weights);
    auto m3 = fit_lda(corpus, quick_options(4, 32));
    CHECK(m3.phi != m1.phi);
}

TEST_CASE("model checkpoints round-trip through disk") {
    auto corpus = planted_two_cluster_corpus(4, 10);
    auto model = fit_lda(corpus, quick_options(2, 3));
    std::string path = "test_model_roundtrip.lda";
    save_model(model, path);
    auto loaded = load_model(path);
    CHECK(loaded.k == model.k);
    CHECK(loaded.alpha == model.alpha);
    CHECK(loaded.vocab == model.vocab);
    CHECK(loaded.theta == model.theta);
    CHECK(loaded.phi == model.phi);
    CHECK(loaded.topic_weights == model.topic_weights);
    CHECK(loaded.doc_ids == model.doc_ids);
    std::remove(path.c_str());
}
