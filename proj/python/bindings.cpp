#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "tastesim/corpus.hpp"
#include "tastesim/ingest.hpp"
#include "tastesim/mathutil.hpp"
#include "tastesim/pairs.hpp"
#include "tastesim/pipeline.hpp"
#include "tastesim/simnet.hpp"
#include "tastesim/synth.hpp"
#include "tastesim/topics.hpp"

namespace py = pybind11;
using namespace tastesim;

namespace {

topics::InversionMode inversion_from(const std::string& name) {
    if (name == "bayes") return topics::InversionMode::BayesWeighted;
    if (name == "column") return topics::InversionMode::ColumnNormalized;
    throw ConfigError("inversion must be 'bayes' or 'column'");
}

corpus::Corpus corpus_from_docs(const std::vector<std::map<std::string, int>>& docs) {
    corpus::Corpus c;
    int week = 0;
    for (const auto& counts : docs) {
        corpus::CorpusDocument doc;
        doc.user_id = "u" + std::to_string(week);
        doc.week_index = week;
        doc.week_start = week_start_of(week);
        doc.counts = counts;
        ++week;
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

topics::LdaOptions lda_options(int k, double alpha, double beta, int iterations, int burn_in,
                               int sample_lag, std::uint64_t seed) {
    topics::LdaOptions options;
    options.k = k;
    options.alpha = alpha;
    options.beta = beta;
    options.iterations = iterations;
    options.burn_in = burn_in;
    options.sample_lag = sample_lag;
    options.seed = seed;
    return options;
}

py::dict manifest_to_dict(const pipeline::Manifest& manifest) {
    py::dict out;
    out["config_hash"] = manifest.config_hash;
    out["failed_stage"] = manifest.failed_stage;
    py::dict stages;
    for (const auto& [name, record] : manifest.stages) {
        py::dict r;
        r["status"] = record.status;
        r["artifacts"] = record.artifacts;
        r["metrics"] = record.metrics;
        if (!record.error.empty()) r["error"] = record.error;
        stages[name.c_str()] = std::move(r);
    }
    out["stages"] = std::move(stages);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Taste-proximity induced song attribute similarity";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "TastesimConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "TastesimDataError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "TastesimIoError", PyExc_OSError);

    py::class_<topics::TopicModel>(m, "TopicModel")
        .def_readonly("k", &topics::TopicModel::k)
        .def_readonly("alpha", &topics::TopicModel::alpha)
        .def_readonly("beta", &topics::TopicModel::beta)
        .def_readonly("vocab", &topics::TopicModel::vocab)
        .def_readonly("theta", &topics::TopicModel::theta)
        .def_readonly("phi", &topics::TopicModel::phi)
        .def_readonly("topic_weights", &topics::TopicModel::topic_weights)
        .def(
            "song_distribution",
            [](const topics::TopicModel& model, const std::string& song,
               const std::string& inversion) {
                return topics::song_theme_distribution(model, song, inversion_from(inversion));
            },
            py::arg("song"), py::arg("inversion") = "bayes")
        .def(
            "song_similarity",
            [](const topics::TopicModel& model, const std::string& song_x,
               const std::string& song_y, const std::string& inversion) {
                auto mode = inversion_from(inversion);
                return topics::taste_similarity(
                    topics::song_theme_distribution(model, song_x, mode),
                    topics::song_theme_distribution(model, song_y, mode));
            },
            py::arg("song_x"), py::arg("song_y"), py::arg("inversion") = "bayes")
        .def("save", &topics::save_model, py::arg("path"))
        .def_static("load", &topics::load_model, py::arg("path"));

    m.def("taste_similarity",
          [](const std::vector<double>& p, const std::vector<double>& q) {
              return topics::taste_similarity(p, q);
          },
          py::arg("p"), py::arg("q"), "Cosine similarity of two theme distributions");

    m.def("cosine_similarity",
          [](const std::vector<double>& a, const std::vector<double>& b) {
              return cosine_similarity(a, b);
          },
          py::arg("a"), py::arg("b"));

    m.def("title_similarity", &ingest::title_similarity, py::arg("a"), py::arg("b"),
          "Normalized Levenshtein similarity over normalized titles");

    m.def(
        "fit_lda",
        [](const std::vector<std::map<std::string, int>>& documents, int k, double alpha,
           double beta, int iterations, int burn_in, int sample_lag, std::uint64_t seed) {
            return topics::fit_lda(corpus_from_docs(documents),
                                   lda_options(k, alpha, beta, iterations, burn_in, sample_lag,
                                               seed));
        },
        py::arg("documents"), py::arg("k"), py::arg("alpha") = 0.0, py::arg("beta") = 0.01,
        py::arg("iterations") = 1000, py::arg("burn_in") = 500, py::arg("sample_lag") = 10,
        py::arg("seed") = 0,
        "Collapsed-Gibbs LDA over bag-of-songs documents (list of {song: count})");

    m.def(
        "fit_lda_file",
        [](const std::string& corpus_path, int k, double alpha, double beta, int iterations,
           int burn_in, int sample_lag, std::uint64_t seed) {
            return topics::fit_lda(corpus::read_corpus_jsonl_file(corpus_path),
                                   lda_options(k, alpha, beta, iterations, burn_in, sample_lag,
                                               seed));
        },
        py::arg("corpus_path"), py::arg("k"), py::arg("alpha") = 0.0, py::arg("beta") = 0.01,
        py::arg("iterations") = 1000, py::arg("burn_in") = 500, py::arg("sample_lag") = 10,
        py::arg("seed") = 0);

    m.def(
        "generate_world",
        [](const std::string& events_path, const std::string& attributes_path,
           const std::string& truth_path, int themes, int songs_per_theme, int users, int weeks,
           double mean_streak_length, double within_gap_mean_minutes,
           double between_gap_mean_minutes, double sigma_within, double sigma_between,
           int attr_channels, int attr_length, std::uint64_t seed) {
            synth::WorldSpec spec;
            spec.themes = themes;
            spec.songs_per_theme = songs_per_theme;
            spec.users = users;
            spec.weeks = weeks;
            spec.mean_streak_length = mean_streak_length;
            spec.within_gap_mean_minutes = within_gap_mean_minutes;
            spec.between_gap_mean_minutes = between_gap_mean_minutes;
            spec.sigma_within = sigma_within;
            spec.sigma_between = sigma_between;
            spec.attr_channels = attr_channels;
            spec.attr_length = attr_length;
            spec.seed = seed;
            auto world = synth::generate_world(spec);
            synth::write_world(world, events_path, attributes_path, truth_path);
            py::dict summary;
            summary["songs"] = world.true_theme.size();
            summary["events"] = world.events.size();
            return summary;
        },
        py::arg("events_path"), py::arg("attributes_path"), py::arg("truth_path"),
        py::arg("themes") = 4, py::arg("songs_per_theme") = 25, py::arg("users") = 50,
        py::arg("weeks") = 20, py::arg("mean_streak_length") = 8.0,
        py::arg("within_gap_mean_minutes") = 3.0, py::arg("between_gap_mean_minutes") = 1300.0,
        py::arg("sigma_within") = 0.25, py::arg("sigma_between") = 1.0,
        py::arg("attr_channels") = 4, py::arg("attr_length") = 64, py::arg("seed") = 42,
        "Generate a planted-theme synthetic world and write it in the ingest formats");

    m.def(
        "build_corpus",
        [](const std::string& events_path, const std::string& corpus_out,
           const std::string& vocabulary_out, bool resolved_track_ids) {
            auto report = ingest::parse_events_file(
                events_path, ingest::MalformedLinePolicy::Lenient, resolved_track_ids);
            auto corp = corpus::build_weekly_documents(report.events);
            corpus::write_corpus_jsonl_file(corp, corpus_out);
            corpus::write_vocabulary_csv_file(corp.vocabulary, vocabulary_out);
            auto stats = corpus::corpus_stats(corp);
            py::dict out;
            out["documents"] = stats.documents;
            out["users"] = stats.users;
            out["vocabulary"] = stats.vocabulary;
            out["tokens"] = stats.tokens;
            out["malformed_lines"] = report.malformed_count;
            return out;
        },
        py::arg("events_path"), py::arg("corpus_out"), py::arg("vocabulary_out"),
        py::arg("resolved_track_ids") = true);

    m.def(
        "run_pipeline",
        [](const std::string& config_path) {
            auto config = pipeline::PipelineConfig::from_file(config_path);
            auto result = pipeline::run_tastesim(config);
            py::dict out = manifest_to_dict(result.manifest);
            out["ok"] = result.ok;
            if (!result.ok) out["error"] = result.error;
            return out;
        },
        py::arg("config_path"), "Run the full pipeline described by a TOML config file");

    m.def(
        "predict_pair",
        [](const std::string& checkpoint_path, const std::string& tensors_path,
           const std::string& song_x, const std::string& song_y) {
            auto ckpt = simnet::load_checkpoint(checkpoint_path);
            std::ifstream in(tensors_path);
            if (!in) throw IoError("cannot open tensors file: " + tensors_path);
            auto tensors = ingest::read_tensors_jsonl(in);
            const ingest::FeatureTensor* tx = nullptr;
            const ingest::FeatureTensor* ty = nullptr;
            for (const auto& t : tensors) {
                if (t.song_key == song_x) tx = &t;
                if (t.song_key == song_y) ty = &t;
            }
            if (!tx) throw DataError("no tensor for song: " + song_x);
            if (!ty) throw DataError("no tensor for song: " + song_y);
            return simnet::predict(ckpt.params, *tx, *ty);
        },
        py::arg("checkpoint_path"), py::arg("tensors_path"), py::arg("song_x"),
        py::arg("song_y"), "Network similarity of two songs from persisted artifacts");
}
