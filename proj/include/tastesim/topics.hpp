#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/corpus.hpp"

namespace tastesim::topics {

struct LdaOptions {
    int k = 20;
    double alpha = 0.0;  // <= 0 selects 50/k
    double beta = 0.01;
    int iterations = 1000;
    int burn_in = 500;
    int sample_lag = 10;  // post-burn-in samples collected every lag-th sweep
    std::uint64_t seed = 0;
    bool record_likelihood = false;

    double resolved_alpha() const { return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(k); }
    void validate(std::size_t corpus_documents) const;
};

// Fitted taste model. theta is the per-document theme mixture (Puh), phi the
// per-theme song distribution (Phs), topic_weights the corpus-level p(z).
struct TopicModel {
    int k = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    int burn_in = 0;
    std::vector<std::string> vocab;  // index -> song_key, sorted ascending
    std::vector<std::pair<std::string, std::int64_t>> doc_ids;
    std::vector<std::vector<double>> theta;  // D x K, rows sum to 1
    std::vector<std::vector<double>> phi;    // K x V, rows sum to 1
    std::vector<double> topic_weights;       // K, sums to 1

    int vocab_id(const std::string& song_key) const;  // throws DataError
};

// Sampler internals, exposed so tests can drive sweeps and check that the
// count matrices stay exact marginals of the assignment vector.
struct GibbsState {
    int k = 0;
    int vocab_size = 0;
    std::vector<int> doc_of;   // token -> document
    std::vector<int> word_of;  // token -> word id
    std::vector<int> z;        // token -> topic
    std::vector<int> doc_topic;   // D x K, row-major
    std::vector<int> word_topic;  // V x K, row-major (word-major for the inner loop)
    std::vector<int> topic_total;  // K
    std::vector<int> doc_len;      // D
    std::uint64_t rng_state = 0;
    int sweep_count = 0;
};

GibbsState init_gibbs(const corpus::Corpus& corpus, int k, std::uint64_t seed);
void gibbs_sweep(GibbsState& state, double alpha, double beta);
bool counts_consistent(const GibbsState& state);

// Per-token log likelihood of `counts_corpus` under the smoothed point
// estimates of `state`. Word ids resolve through `vocabulary` (the training
// vocabulary). Documents are matched by position, so a held-out token split
// of the training corpus evaluates document completion.
double log_likelihood(const GibbsState& state, const corpus::Corpus& counts_corpus,
                      const corpus::Vocabulary& vocabulary, double alpha, double beta);

struct FitTrace {
    std::vector<double> train_log_likelihood;    // per sweep, per token
    std::vector<double> heldout_log_likelihood;  // per sweep, when heldout given
};

TopicModel fit_lda(const corpus::Corpus& corpus, const LdaOptions& options,
                   FitTrace* trace = nullptr, const corpus::Corpus* heldout = nullptr);

enum class InversionMode { BayesWeighted, ColumnNormalized };

// P(z|song): Bayes inversion phi[z][w] * p(z) by default, plain column
// normalization of phi when ColumnNormalized is selected.
std::vector<double> song_theme_distribution(const TopicModel& model, const std::string& song_key,
                                            InversionMode mode = InversionMode::BayesWeighted);

// Cosine similarity of two theme distributions, clamped to [0, 1].
// Throws DataError on zero vectors.
double taste_similarity(std::span<const double> px, std::span<const double> py);

void save_model(const TopicModel& model, const std::string& path);
TopicModel load_model(const std::string& path);
void write_theta_csv(const TopicModel& model, std::ostream& out);
void write_phi_csv(const TopicModel& model, std::ostream& out);

// Greedy one-to-one assignment of themes to planted clusters by phi mass.
struct ThemeAlignment {
    std::vector<int> cluster_of_theme;     // -1 when unassigned
    std::vector<double> own_cluster_mass;  // phi mass a theme puts on its cluster
};
ThemeAlignment align_themes_to_clusters(const TopicModel& model,
                                        const std::map<std::string, int>& song_cluster);

}  // namespace tastesim::topics
