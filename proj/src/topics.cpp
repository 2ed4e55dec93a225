#include "tastesim/topics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "tastesim/csv.hpp"
#include "tastesim/mathutil.hpp"
#include "tastesim/rng.hpp"

namespace tastesim::topics {

namespace {

inline double next_unit(std::uint64_t& state) {
    return static_cast<double>(splitmix64_next(state) >> 11) * 0x1.0p-53;
}

}  // namespace

void LdaOptions::validate(std::size_t corpus_documents) const {
    if (k < 2) throw ConfigError("lda: theme count must be at least 2");
    if (corpus_documents == 0) throw ConfigError("lda: corpus is empty");
    if (beta <= 0.0) throw ConfigError("lda: beta must be positive");
    if (burn_in < 0) throw ConfigError("lda: burn_in must be non-negative");
    if (iterations <= burn_in) throw ConfigError("lda: iterations must exceed burn_in");
    if (sample_lag < 1) throw ConfigError("lda: sample_lag must be positive");
}

int TopicModel::vocab_id(const std::string& song_key) const {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), song_key);
    if (it == vocab.end() || *it != song_key) {
        throw DataError("song not in model vocabulary: " + song_key);
    }
    return static_cast<int>(it - vocab.begin());
}

GibbsState init_gibbs(const corpus::Corpus& corpus, int k, std::uint64_t seed) {
    GibbsState state;
    state.k = k;
    state.vocab_size = static_cast<int>(corpus.vocabulary.size());
    state.rng_state = seed;
    const int docs = static_cast<int>(corpus.documents.size());
    state.doc_len.assign(docs, 0);
    for (int d = 0; d < docs; ++d) {
        const auto& doc = corpus.documents[d];
        for (const auto& [song, count] : doc.counts) {
            int w = corpus.vocabulary.id_of(song);
            for (int c = 0; c < count; ++c) {
                state.doc_of.push_back(d);
                state.word_of.push_back(w);
            }
            state.doc_len[d] += count;
        }
    }
    state.z.resize(state.doc_of.size());
    state.doc_topic.assign(static_cast<std::size_t>(docs) * k, 0);
    state.word_topic.assign(static_cast<std::size_t>(state.vocab_size) * k, 0);
    state.topic_total.assign(k, 0);
    for (std::size_t i = 0; i < state.z.size(); ++i) {
        int topic = static_cast<int>(splitmix64_next(state.rng_state) % static_cast<std::uint64_t>(k));
        state.z[i] = topic;
        ++state.doc_topic[static_cast<std::size_t>(state.doc_of[i]) * k + topic];
        ++state.word_topic[static_cast<std::size_t>(state.word_of[i]) * k + topic];
        ++state.topic_total[topic];
    }
    return state;
}

void gibbs_sweep(GibbsState& state, double alpha, double beta) {
    const int k = state.k;
    const double vbeta = static_cast<double>(state.vocab_size) * beta;
    std::vector<double> weights(k);
    for (std::size_t i = 0; i < state.z.size(); ++i) {
        const int d = state.doc_of[i];
        const int w = state.word_of[i];
        const int old = state.z[i];
        int* ndk = &state.doc_topic[static_cast<std::size_t>(d) * k];
        int* nwk = &state.word_topic[static_cast<std::size_t>(w) * k];
        --ndk[old];
        --nwk[old];
        --state.topic_total[old];

        double total = 0.0;
        for (int t = 0; t < k; ++t) {
            total += (ndk[t] + alpha) * (nwk[t] + beta) /
                     (static_cast<double>(state.topic_total[t]) + vbeta);
            weights[t] = total;
        }
        double u = next_unit(state.rng_state) * total;
        int picked = k - 1;
        for (int t = 0; t < k; ++t) {
            if (u < weights[t]) {
                picked = t;
                break;
            }
        }
        state.z[i] = picked;
        ++ndk[picked];
        ++nwk[picked];
        ++state.topic_total[picked];
    }
    ++state.sweep_count;
}

bool counts_consistent(const GibbsState& state) {
    std::vector<int> ndk(state.doc_topic.size(), 0);
    std::vector<int> nwk(state.word_topic.size(), 0);
    std::vector<int> nk(state.topic_total.size(), 0);
    for (std::size_t i = 0; i < state.z.size(); ++i) {
        int t = state.z[i];
        if (t < 0 || t >= state.k) return false;
        ++ndk[static_cast<std::size_t>(state.doc_of[i]) * state.k + t];
        ++nwk[static_cast<std::size_t>(state.word_of[i]) * state.k + t];
        ++nk[t];
    }
    return ndk == state.doc_topic && nwk == state.word_topic && nk == state.topic_total;
}

double log_likelihood(const GibbsState& state, const corpus::Corpus& counts_corpus,
                      const corpus::Vocabulary& vocabulary, double alpha, double beta) {
    const int k = state.k;
    const double vbeta = static_cast<double>(state.vocab_size) * beta;
    const double kalpha = static_cast<double>(k) * alpha;
    if (counts_corpus.documents.size() > state.doc_len.size()) {
        throw DataError("log_likelihood: corpus has more documents than the sampler state");
    }
    double ll = 0.0;
    std::int64_t tokens = 0;
    for (std::size_t d = 0; d < counts_corpus.documents.size(); ++d) {
        const int* ndk = &state.doc_topic[d * k];
        const double denom = static_cast<double>(state.doc_len[d]) + kalpha;
        for (const auto& [song, count] : counts_corpus.documents[d].counts) {
            auto it = vocabulary.index.find(song);
            if (it == vocabulary.index.end()) continue;  // out-of-vocabulary token
            int w = it->second;
            if (w >= state.vocab_size) continue;
            const int* nwk = &state.word_topic[static_cast<std::size_t>(w) * k];
            double p = 0.0;
            for (int t = 0; t < k; ++t) {
                p += (ndk[t] + alpha) / denom * (nwk[t] + beta) /
                     (static_cast<double>(state.topic_total[t]) + vbeta);
            }
            ll += count * std::log(std::max(p, 1e-300));
            tokens += count;
        }
    }
    return tokens == 0 ? 0.0 : ll / static_cast<double>(tokens);
}

TopicModel fit_lda(const corpus::Corpus& corpus, const LdaOptions& options, FitTrace* trace,
                   const corpus::Corpus* heldout) {
    options.validate(corpus.documents.size());
    const int k = options.k;
    const double alpha = options.resolved_alpha();
    const double beta = options.beta;
    if (heldout && heldout->documents.size() != corpus.documents.size()) {
        throw ConfigError("lda: held-out corpus must match training documents one-to-one");
    }

    GibbsState state = init_gibbs(corpus, k, options.seed);
    const int docs = static_cast<int>(corpus.documents.size());
    const int vocab_size = state.vocab_size;

    std::vector<double> avg_ndk(static_cast<std::size_t>(docs) * k, 0.0);
    std::vector<double> avg_nwk(static_cast<std::size_t>(vocab_size) * k, 0.0);
    std::vector<double> avg_nk(k, 0.0);
    int samples = 0;

    for (int sweep = 1; sweep <= options.iterations; ++sweep) {
        gibbs_sweep(state, alpha, beta);
        assert(counts_consistent(state));
        if (trace && options.record_likelihood) {
            trace->train_log_likelihood.push_back(
                log_likelihood(state, corpus, corpus.vocabulary, alpha, beta));
            if (heldout) {
                trace->heldout_log_likelihood.push_back(
                    log_likelihood(state, *heldout, corpus.vocabulary, alpha, beta));
            }
        }
        if (sweep > options.burn_in && (sweep - options.burn_in - 1) % options.sample_lag == 0) {
            for (std::size_t i = 0; i < avg_ndk.size(); ++i) avg_ndk[i] += state.doc_topic[i];
            for (std::size_t i = 0; i < avg_nwk.size(); ++i) avg_nwk[i] += state.word_topic[i];
            for (int t = 0; t < k; ++t) avg_nk[t] += state.topic_total[t];
            ++samples;
        }
    }

    const double inv_samples = 1.0 / static_cast<double>(samples);
    TopicModel model;
    model.k = k;
    model.alpha = alpha;
    model.beta = beta;
    model.seed = options.seed;
    model.iterations = options.iterations;
    model.burn_in = options.burn_in;
    model.vocab = corpus.vocabulary.words;
    model.doc_ids.reserve(docs);
    for (const auto& doc : corpus.documents) model.doc_ids.emplace_back(doc.user_id, doc.week_index);

    model.theta.assign(docs, std::vector<double>(k, 0.0));
    for (int d = 0; d < docs; ++d) {
        double denom = static_cast<double>(state.doc_len[d]) + k * alpha;
        for (int t = 0; t < k; ++t) {
            model.theta[d][t] = (avg_ndk[static_cast<std::size_t>(d) * k + t] * inv_samples + alpha) / denom;
        }
    }
    model.phi.assign(k, std::vector<double>(vocab_size, 0.0));
    for (int t = 0; t < k; ++t) {
        double denom = avg_nk[t] * inv_samples + static_cast<double>(vocab_size) * beta;
        for (int w = 0; w < vocab_size; ++w) {
            model.phi[t][w] =
                (avg_nwk[static_cast<std::size_t>(w) * k + t] * inv_samples + beta) / denom;
        }
    }
    model.topic_weights.assign(k, 0.0);
    double total_tokens = static_cast<double>(state.z.size());
    double weight_denom = total_tokens + k * alpha;
    for (int t = 0; t < k; ++t) {
        model.topic_weights[t] = (avg_nk[t] * inv_samples + alpha) / weight_denom;
    }
    return model;
}

std::vector<double> song_theme_distribution(const TopicModel& model, const std::string& song_key,
                                            InversionMode mode) {
    int w = model.vocab_id(song_key);
    std::vector<double> p(model.k, 0.0);
    double sum = 0.0;
    for (int t = 0; t < model.k; ++t) {
        double v = model.phi[t][w];
        if (mode == InversionMode::BayesWeighted) v *= model.topic_weights[t];
        p[t] = v;
        sum += v;
    }
    if (sum <= 0.0) throw DataError("degenerate theme distribution for song: " + song_key);
    for (double& v : p) v /= sum;
    return p;
}

double taste_similarity(std::span<const double> px, std::span<const double> py) {
    if (px.size() != py.size()) throw DataError("taste_similarity: theme count mismatch");
    if (norm2(px) == 0.0 || norm2(py) == 0.0) {
        throw DataError("taste_similarity undefined for zero vectors");
    }
    double s = cosine_similarity(px, py);
    return std::clamp(s, 0.0, 1.0);
}

namespace {

constexpr const char* kModelFormat = "tastesim-lda";
constexpr int kModelVersion = 1;

}  // namespace

void save_model(const TopicModel& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["k"] = model.k;
    j["alpha"] = model.alpha;
    j["beta"] = model.beta;
    j["seed"] = model.seed;
    j["iterations"] = model.iterations;
    j["burn_in"] = model.burn_in;
    j["vocab"] = model.vocab;
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [user, week] : model.doc_ids) ids.push_back({user, week});
    j["doc_ids"] = std::move(ids);
    j["theta"] = model.theta;
    j["phi"] = model.phi;
    j["topic_weights"] = model.topic_weights;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file: " + path);
    out << j.dump();
    if (!out) throw IoError("write failure: " + path);
}

TopicModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file " + path + ": " + e.what());
    }
    if (j.value("format", "") != kModelFormat) {
        throw DataError("not a taste model file: " + path);
    }
    if (j.value("version", 0) != kModelVersion) {
        throw DataError("unsupported model version in " + path);
    }
    TopicModel model;
    model.k = j.at("k").get<int>();
    model.alpha = j.at("alpha").get<double>();
    model.beta = j.at("beta").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.iterations = j.at("iterations").get<int>();
    model.burn_in = j.at("burn_in").get<int>();
    model.vocab = j.at("vocab").get<std::vector<std::string>>();
    for (const auto& pair : j.at("doc_ids")) {
        model.doc_ids.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::int64_t>());
    }
    model.theta = j.at("theta").get<std::vector<std::vector<double>>>();
    model.phi = j.at("phi").get<std::vector<std::vector<double>>>();
    model.topic_weights = j.at("topic_weights").get<std::vector<double>>();
    return model;
}

void write_theta_csv(const TopicModel& model, std::ostream& out) {
    out << "user,week";
    for (int t = 0; t < model.k; ++t) out << ",theme_" << t;
    out << '\n';
    for (std::size_t d = 0; d < model.theta.size(); ++d) {
        out << csv_field(model.doc_ids[d].first) << ',' << model.doc_ids[d].second;
        for (double v : model.theta[d]) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_phi_csv(const TopicModel& model, std::ostream& out) {
    out << "song_key";
    for (int t = 0; t < model.k; ++t) out << ",theme_" << t;
    out << '\n';
    for (std::size_t w = 0; w < model.vocab.size(); ++w) {
        out << csv_field(model.vocab[w]);
        for (int t = 0; t < model.k; ++t) out << ',' << format_double(model.phi[t][w]);
        out << '\n';
    }
}

ThemeAlignment align_themes_to_clusters(const TopicModel& model,
                                        const std::map<std::string, int>& song_cluster) {
    int clusters = 0;
    for (const auto& [_, c] : song_cluster) clusters = std::max(clusters, c + 1);
    // mass[t][c] = phi mass theme t places on cluster c's songs
    std::vector<std::vector<double>> mass(model.k, std::vector<double>(clusters, 0.0));
    for (std::size_t w = 0; w < model.vocab.size(); ++w) {
        auto it = song_cluster.find(model.vocab[w]);
        if (it == song_cluster.end()) {
            throw DataError("song without a cluster label: " + model.vocab[w]);
        }
        for (int t = 0; t < model.k; ++t) mass[t][it->second] += model.phi[t][w];
    }
    ThemeAlignment alignment;
    alignment.cluster_of_theme.assign(model.k, -1);
    alignment.own_cluster_mass.assign(model.k, 0.0);
    std::vector<bool> theme_used(model.k, false), cluster_used(clusters, false);
    int assignable = std::min(model.k, clusters);
    for (int step = 0; step < assignable; ++step) {
        int best_t = -1, best_c = -1;
        double best = -1.0;
        for (int t = 0; t < model.k; ++t) {
            if (theme_used[t]) continue;
            for (int c = 0; c < clusters; ++c) {
                if (cluster_used[c]) continue;
                if (mass[t][c] > best) {
                    best = mass[t][c];
                    best_t = t;
                    best_c = c;
                }
            }
        }
        theme_used[best_t] = true;
        cluster_used[best_c] = true;
        alignment.cluster_of_theme[best_t] = best_c;
        alignment.own_cluster_mass[best_t] = best;
    }
    return alignment;
}

}  // namespace tastesim::topics
