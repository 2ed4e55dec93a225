#include "tastesim/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tastesim/csv.hpp"
#include "tastesim/hash.hpp"
#include "tastesim/mathutil.hpp"
#include "tastesim/synth.hpp"
#include "tastesim/temporal.hpp"

namespace fs = std::filesystem;

namespace tastesim::pipeline {

namespace {

constexpr const char* kMatchReport = "match_report.csv";
constexpr const char* kResolvedEvents = "events_resolved.tsv";
constexpr const char* kCorpusFile = "corpus.jsonl";
constexpr const char* kVocabularyFile = "vocabulary.csv";
constexpr const char* kModelFile = "model.lda";
constexpr const char* kThetaFile = "theta.csv";
constexpr const char* kPhiFile = "phi.csv";
constexpr const char* kPairsFile = "pairs.csv";
constexpr const char* kTensorsFile = "tensors.jsonl";
constexpr const char* kChannelStatsFile = "channel_stats.json";
constexpr const char* kGapFile = "gap_sim.csv";
constexpr const char* kSkipFile = "nskip.csv";
constexpr const char* kCheckpointFile = "net.ckpt";
constexpr const char* kLossHistoryFile = "loss_history.csv";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kLockFile = ".lock";

std::string workpath(const PipelineConfig& config, const char* name) {
    return (fs::path(config.workdir) / name).string();
}

std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    return format_iso8601_utc(std::chrono::duration_cast<std::chrono::seconds>(
                                  now.time_since_epoch())
                                  .count());
}

struct WorkdirLock {
    std::string path;

    explicit WorkdirLock(const std::string& workdir) {
        fs::create_directories(workdir);
        path = (fs::path(workdir) / kLockFile).string();
        int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            path.clear();
            throw IoError("workdir is locked by another pipeline run: " + workdir);
        }
        ::close(fd);
    }
    ~WorkdirLock() {
        if (!path.empty()) ::unlink(path.c_str());
    }
    WorkdirLock(const WorkdirLock&) = delete;
    WorkdirLock& operator=(const WorkdirLock&) = delete;
};

}  // namespace

simnet::NetworkArchitecture NetworkConfig::architecture(int input_channels,
                                                        int input_length) const {
    if (conv_out.size() != conv_kernel.size() || conv_out.size() != conv_pool.size()) {
        throw ConfigError("network conv_out, conv_kernel and conv_pool must have equal length");
    }
    simnet::NetworkArchitecture arch;
    arch.input_channels = input_channels;
    arch.input_length = input_length;
    int in = input_channels;
    for (std::size_t i = 0; i < conv_out.size(); ++i) {
        arch.conv_layers.push_back({in, conv_out[i], conv_kernel[i], conv_pool[i]});
        in = conv_out[i];
    }
    arch.fc_hidden = fc_hidden;
    arch.output_units = output_units;
    arch.output_activation = output_activation;
    arch.pool_before_conv = pool_before_conv;
    return arch;
}

namespace {

std::vector<int> int_array(const config::Table& t, const std::string& section,
                           const std::string& key, const std::vector<int>& fallback) {
    if (!config::has_key(t, section, key)) return fallback;
    const auto& arr = t.at(section).at(key).as_array();
    std::vector<int> out;
    out.reserve(arr.size());
    for (const auto& v : arr) out.push_back(static_cast<int>(v.as_int()));
    return out;
}

std::vector<std::string> string_array(const config::Table& t, const std::string& section,
                                      const std::string& key) {
    if (!config::has_key(t, section, key)) return {};
    const auto& arr = t.at(section).at(key).as_array();
    std::vector<std::string> out;
    out.reserve(arr.size());
    for (const auto& v : arr) out.push_back(v.as_string());
    return out;
}

std::optional<EpochSeconds> optional_instant(const config::Table& t, const std::string& section,
                                             const std::string& key) {
    std::string text = config::get_string(t, section, key, "");
    if (text.empty()) return std::nullopt;
    auto parsed = parse_iso8601_utc(text);
    if (!parsed) throw ConfigError("bad timestamp for " + section + "." + key + ": " + text);
    return parsed;
}

config::Value make_value(std::string v) { return config::Value{std::move(v)}; }
config::Value make_value(const char* v) { return config::Value{std::string(v)}; }
config::Value make_value(std::int64_t v) { return config::Value{v}; }
config::Value make_value(int v) { return config::Value{static_cast<std::int64_t>(v)}; }
config::Value make_value(std::uint64_t v) {
    return config::Value{static_cast<std::int64_t>(v)};
}
config::Value make_value(double v) { return config::Value{v}; }
config::Value make_value(bool v) { return config::Value{v}; }

config::Value make_int_array(const std::vector<int>& v) {
    config::Array arr;
    for (int x : v) arr.push_back(make_value(x));
    return config::Value{std::move(arr)};
}

config::Value make_string_array(const std::vector<std::string>& v) {
    config::Array arr;
    for (const auto& x : v) arr.push_back(make_value(x));
    return config::Value{std::move(arr)};
}

config::Value make_float_array(std::span<const double> v) {
    config::Array arr;
    for (double x : v) arr.push_back(make_value(x));
    return config::Value{std::move(arr)};
}

}  // namespace

PipelineConfig PipelineConfig::from_table(const config::Table& t) {
    PipelineConfig c;
    c.events_path = config::get_string(t, "paths", "events", "");
    c.attributes_path = config::get_string(t, "paths", "attributes", "");
    c.workdir = config::get_string(t, "paths", "workdir", c.workdir);

    std::string policy = config::get_string(t, "ingest", "policy", "lenient");
    if (policy == "strict") c.ingest_cfg.policy = ingest::MalformedLinePolicy::Strict;
    else if (policy == "lenient") c.ingest_cfg.policy = ingest::MalformedLinePolicy::Lenient;
    else throw ConfigError("ingest.policy must be strict or lenient");
    c.ingest_cfg.match_threshold =
        config::get_float(t, "ingest", "match_threshold", c.ingest_cfg.match_threshold);
    c.ingest_cfg.min_listen_count = static_cast<int>(
        config::get_int(t, "ingest", "min_listen_count", c.ingest_cfg.min_listen_count));
    c.ingest_cfg.drop_unmatched =
        config::get_bool(t, "ingest", "drop_unmatched", c.ingest_cfg.drop_unmatched);
    c.ingest_cfg.resolved_track_ids =
        config::get_bool(t, "ingest", "resolved_track_ids", c.ingest_cfg.resolved_track_ids);

    c.window.from = optional_instant(t, "corpus", "from");
    c.window.to = optional_instant(t, "corpus", "to");

    c.lda.k = static_cast<int>(config::get_int(t, "lda", "k", c.lda.k));
    c.lda.alpha = config::get_float(t, "lda", "alpha", c.lda.alpha);
    c.lda.beta = config::get_float(t, "lda", "beta", c.lda.beta);
    c.lda.iterations = static_cast<int>(config::get_int(t, "lda", "iterations", c.lda.iterations));
    c.lda.burn_in = static_cast<int>(config::get_int(t, "lda", "burn_in", c.lda.burn_in));
    c.lda.sample_lag = static_cast<int>(config::get_int(t, "lda", "sample_lag", c.lda.sample_lag));
    c.lda.seed = static_cast<std::uint64_t>(config::get_int(t, "lda", "seed", 7));
    std::string inversion = config::get_string(t, "lda", "inversion", "bayes");
    if (inversion == "bayes") c.inversion = topics::InversionMode::BayesWeighted;
    else if (inversion == "column") c.inversion = topics::InversionMode::ColumnNormalized;
    else throw ConfigError("lda.inversion must be bayes or column");

    c.pair_sampling.count =
        static_cast<std::size_t>(config::get_int(t, "pairs", "count", 10000));
    c.pair_sampling.strategy = pairs::strategy_from_name(
        config::get_string(t, "pairs", "strategy", "stratified-by-label"));
    c.pair_sampling.seed = static_cast<std::uint64_t>(config::get_int(t, "pairs", "seed", 11));
    c.pair_sampling.label_bins =
        static_cast<int>(config::get_int(t, "pairs", "label_bins", 10));
    if (config::has_key(t, "pairs", "fractions")) {
        const auto& arr = t.at("pairs").at("fractions").as_array();
        if (arr.size() != 3) throw ConfigError("pairs.fractions needs 3 entries");
        for (int i = 0; i < 3; ++i) c.pair_sampling.split_fractions[i] = arr[i].as_float();
    }
    c.pair_sampling.inversion = c.inversion;

    c.tensor.channels = string_array(t, "tensor", "channels");
    c.tensor.length = static_cast<int>(config::get_int(t, "tensor", "length", c.tensor.length));
    c.tensor.standardize = config::get_bool(t, "tensor", "standardize", c.tensor.standardize);

    c.network.conv_out = int_array(t, "network", "conv_out", c.network.conv_out);
    c.network.conv_kernel = int_array(t, "network", "conv_kernel", c.network.conv_kernel);
    c.network.conv_pool = int_array(t, "network", "conv_pool", c.network.conv_pool);
    c.network.fc_hidden = int_array(t, "network", "fc_hidden", c.network.fc_hidden);
    c.network.output_units =
        static_cast<int>(config::get_int(t, "network", "output_units", c.network.output_units));
    std::string act = config::get_string(t, "network", "output_activation", "identity");
    if (act == "identity") c.network.output_activation = simnet::OutputActivation::Identity;
    else if (act == "relu") c.network.output_activation = simnet::OutputActivation::Relu;
    else throw ConfigError("network.output_activation must be identity or relu");
    c.network.pool_before_conv =
        config::get_bool(t, "network", "pool_before_conv", c.network.pool_before_conv);

    c.train.optimizer =
        simnet::optimizer_from_name(config::get_string(t, "train", "optimizer", "sgd"));
    c.train.learning_rate =
        config::get_float(t, "train", "learning_rate", c.train.learning_rate);
    c.train.batch_size =
        static_cast<int>(config::get_int(t, "train", "batch_size", c.train.batch_size));
    c.train.epochs = static_cast<int>(config::get_int(t, "train", "epochs", c.train.epochs));
    c.train.momentum = config::get_float(t, "train", "momentum", c.train.momentum);
    c.train.seed = static_cast<std::uint64_t>(config::get_int(t, "train", "seed", 13));
    c.train.early_stop_patience = static_cast<int>(
        config::get_int(t, "train", "patience", c.train.early_stop_patience));

    c.analysis.time_scale_minutes =
        config::get_float(t, "analysis", "time_scale", c.analysis.time_scale_minutes);
    c.analysis.bins = static_cast<int>(config::get_int(t, "analysis", "bins", c.analysis.bins));
    c.analysis.max_skip =
        static_cast<int>(config::get_int(t, "analysis", "max_skip", c.analysis.max_skip));

    c.validate();
    return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_table(config::parse_toml_file(path));
}

config::Table PipelineConfig::to_table() const {
    config::Table t;
    auto& paths = t["paths"];
    paths["events"] = make_value(events_path);
    paths["attributes"] = make_value(attributes_path);
    paths["workdir"] = make_value(workdir);

    auto& ing = t["ingest"];
    ing["policy"] =
        make_value(ingest_cfg.policy == ingest::MalformedLinePolicy::Strict ? "strict"
                                                                            : "lenient");
    ing["match_threshold"] = make_value(ingest_cfg.match_threshold);
    ing["min_listen_count"] = make_value(ingest_cfg.min_listen_count);
    ing["drop_unmatched"] = make_value(ingest_cfg.drop_unmatched);
    ing["resolved_track_ids"] = make_value(ingest_cfg.resolved_track_ids);

    auto& cor = t["corpus"];
    cor["from"] = make_value(window.from ? format_iso8601_utc(*window.from) : std::string());
    cor["to"] = make_value(window.to ? format_iso8601_utc(*window.to) : std::string());

    auto& lda_s = t["lda"];
    lda_s["k"] = make_value(lda.k);
    lda_s["alpha"] = make_value(lda.alpha);
    lda_s["beta"] = make_value(lda.beta);
    lda_s["iterations"] = make_value(lda.iterations);
    lda_s["burn_in"] = make_value(lda.burn_in);
    lda_s["sample_lag"] = make_value(lda.sample_lag);
    lda_s["seed"] = make_value(lda.seed);
    lda_s["inversion"] =
        make_value(inversion == topics::InversionMode::BayesWeighted ? "bayes" : "column");

    auto& prs = t["pairs"];
    prs["count"] = make_value(static_cast<std::int64_t>(pair_sampling.count));
    prs["strategy"] = make_value(pairs::strategy_name(pair_sampling.strategy));
    prs["seed"] = make_value(pair_sampling.seed);
    prs["label_bins"] = make_value(pair_sampling.label_bins);
    prs["fractions"] = make_float_array(pair_sampling.split_fractions);

    auto& ten = t["tensor"];
    ten["channels"] = make_string_array(tensor.channels);
    ten["length"] = make_value(tensor.length);
    ten["standardize"] = make_value(tensor.standardize);

    auto& net = t["network"];
    net["conv_out"] = make_int_array(network.conv_out);
    net["conv_kernel"] = make_int_array(network.conv_kernel);
    net["conv_pool"] = make_int_array(network.conv_pool);
    net["fc_hidden"] = make_int_array(network.fc_hidden);
    net["output_units"] = make_value(network.output_units);
    net["output_activation"] = make_value(
        network.output_activation == simnet::OutputActivation::Relu ? "relu" : "identity");
    net["pool_before_conv"] = make_value(network.pool_before_conv);

    auto& trn = t["train"];
    trn["optimizer"] = make_value(simnet::optimizer_name(train.optimizer));
    trn["learning_rate"] = make_value(train.learning_rate);
    trn["batch_size"] = make_value(train.batch_size);
    trn["epochs"] = make_value(train.epochs);
    trn["momentum"] = make_value(train.momentum);
    trn["seed"] = make_value(train.seed);
    trn["patience"] = make_value(train.early_stop_patience);

    auto& ana = t["analysis"];
    ana["time_scale"] = make_value(analysis.time_scale_minutes);
    ana["bins"] = make_value(analysis.bins);
    ana["max_skip"] = make_value(analysis.max_skip);
    return t;
}

std::string PipelineConfig::canonical_toml() const { return config::serialize_toml(to_table()); }

std::string PipelineConfig::config_hash() const { return sha256_hex(canonical_toml()); }

void PipelineConfig::validate() const {
    lda.validate(1);  // corpus size is unknown until the stage runs
    if (ingest_cfg.match_threshold <= 0.0 || ingest_cfg.match_threshold > 1.0) {
        throw ConfigError("ingest.match_threshold must lie in (0, 1]");
    }
    if (ingest_cfg.min_listen_count < 0) {
        throw ConfigError("ingest.min_listen_count must be non-negative");
    }
    if (pair_sampling.count < 1) throw ConfigError("pairs.count must be at least 1");
    if (pair_sampling.label_bins < 1) throw ConfigError("pairs.label_bins must be positive");
    pairs::split_sizes(0, pair_sampling.split_fractions);  // validates fractions
    if (tensor.length < 1) throw ConfigError("tensor.length must be positive");
    train.validate();
    if (analysis.time_scale_minutes <= 0.0) throw ConfigError("analysis.time_scale must be positive");
    if (analysis.bins < 1) throw ConfigError("analysis.bins must be positive");
    if (analysis.max_skip < 0) throw ConfigError("analysis.max_skip must be non-negative");
    if (!tensor.channels.empty()) {
        network.architecture(static_cast<int>(tensor.channels.size()), tensor.length).validate();
    } else {
        if (network.conv_out.size() != network.conv_kernel.size() ||
            network.conv_out.size() != network.conv_pool.size()) {
            throw ConfigError("network conv arrays must have equal length");
        }
    }
    if (window.from && window.to && *window.from >= *window.to) {
        throw ConfigError("corpus.from must precede corpus.to");
    }
}

bool Manifest::stage_ok(const std::string& name) const {
    auto it = stages.find(name);
    return it != stages.end() && it->second.status == "ok";
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["format"] = "tastesim-manifest";
    j["version"] = 1;
    j["config_hash"] = manifest.config_hash;
    j["config_echo"] = manifest.config_echo;
    j["created_at"] = manifest.created_at;
    j["failed_stage"] = manifest.failed_stage;
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, record] : manifest.stages) {
        nlohmann::json r;
        r["status"] = record.status;
        r["config_hash"] = record.config_hash;
        r["artifacts"] = record.artifacts;
        r["metrics"] = record.metrics;
        if (!record.error.empty()) r["error"] = record.error;
        stages[name] = std::move(r);
    }
    j["stages"] = std::move(stages);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failure: " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path + ": " + e.what());
    }
    Manifest m;
    m.config_hash = j.value("config_hash", "");
    m.config_echo = j.value("config_echo", "");
    m.created_at = j.value("created_at", "");
    m.failed_stage = j.value("failed_stage", "");
    if (j.contains("stages")) {
        for (auto& [name, r] : j["stages"].items()) {
            StageRecord record;
            record.status = r.value("status", "");
            record.config_hash = r.value("config_hash", "");
            if (r.contains("artifacts")) {
                record.artifacts = r["artifacts"].get<std::map<std::string, std::string>>();
            }
            if (r.contains("metrics")) {
                record.metrics = r["metrics"].get<std::map<std::string, double>>();
            }
            record.error = r.value("error", "");
            m.stages[name] = std::move(record);
        }
    }
    return m;
}

namespace {

void add_artifact(StageRecord& record, const PipelineConfig& config, const char* name) {
    record.artifacts[name] = sha256_file_hex(workpath(config, name));
}

StageRecord stage_ingest(const PipelineConfig& config) {
    StageRecord record;
    if (config.events_path.empty()) throw ConfigError("paths.events is required");
    if (config.attributes_path.empty()) throw ConfigError("paths.attributes is required");
    auto report = ingest::parse_events_file(config.events_path, config.ingest_cfg.policy,
                                            config.ingest_cfg.resolved_track_ids);
    auto records = ingest::parse_attribute_records_file(config.attributes_path);
    auto catalog = ingest::catalog_from_records(records);
    ingest::MatchOptions match_options;
    match_options.threshold = config.ingest_cfg.match_threshold;
    auto matches = ingest::match_songs(report.events, catalog, match_options);
    {
        std::ofstream out(workpath(config, kMatchReport));
        if (!out) throw IoError("cannot write match report");
        ingest::write_match_report_csv(matches, out);
    }
    ingest::ResolveOptions resolve_options;
    resolve_options.drop_unmatched = config.ingest_cfg.drop_unmatched;
    resolve_options.min_listen_count = config.ingest_cfg.min_listen_count;
    auto resolved = ingest::apply_matches(report.events, matches, resolve_options);
    // Persist with track_id carrying the resolved song_key.
    std::vector<ingest::ListeningEvent> out_events = resolved.events;
    for (auto& ev : out_events) ev.track_id = ev.song_key;
    ingest::write_events_file(out_events, workpath(config, kResolvedEvents));

    record.metrics["events_parsed"] = static_cast<double>(report.events.size());
    record.metrics["malformed_lines"] = static_cast<double>(report.malformed_count);
    record.metrics["distinct_event_songs"] = static_cast<double>(matches.size());
    std::size_t matched = 0;
    for (const auto& m : matches) matched += m.matched() ? 1 : 0;
    record.metrics["matched_songs"] = static_cast<double>(matched);
    record.metrics["dropped_unmatched"] = static_cast<double>(resolved.dropped_unmatched);
    record.metrics["dropped_rare"] = static_cast<double>(resolved.dropped_rare);
    record.metrics["resolved_events"] = static_cast<double>(resolved.events.size());
    add_artifact(record, config, kMatchReport);
    add_artifact(record, config, kResolvedEvents);
    return record;
}

StageRecord stage_corpus(const PipelineConfig& config) {
    StageRecord record;
    auto report = ingest::parse_events_file(workpath(config, kResolvedEvents),
                                            ingest::MalformedLinePolicy::Strict, true);
    auto corp = corpus::build_weekly_documents(report.events, config.window);
    corpus::write_corpus_jsonl_file(corp, workpath(config, kCorpusFile));
    corpus::write_vocabulary_csv_file(corp.vocabulary, workpath(config, kVocabularyFile));
    auto stats = corpus::corpus_stats(corp);
    record.metrics["documents"] = static_cast<double>(stats.documents);
    record.metrics["users"] = static_cast<double>(stats.users);
    record.metrics["vocabulary"] = static_cast<double>(stats.vocabulary);
    record.metrics["tokens"] = static_cast<double>(stats.tokens);
    record.metrics["mean_doc_length"] = stats.mean_doc_length;
    add_artifact(record, config, kCorpusFile);
    add_artifact(record, config, kVocabularyFile);
    return record;
}

StageRecord stage_lda(const PipelineConfig& config) {
    StageRecord record;
    auto corp = corpus::read_corpus_jsonl_file(workpath(config, kCorpusFile));
    auto model = topics::fit_lda(corp, config.lda);
    topics::save_model(model, workpath(config, kModelFile));
    {
        std::ofstream theta(workpath(config, kThetaFile));
        if (!theta) throw IoError("cannot write theta csv");
        topics::write_theta_csv(model, theta);
        std::ofstream phi(workpath(config, kPhiFile));
        if (!phi) throw IoError("cannot write phi csv");
        topics::write_phi_csv(model, phi);
    }
    record.metrics["k"] = static_cast<double>(model.k);
    record.metrics["alpha"] = model.alpha;
    record.metrics["beta"] = model.beta;
    record.metrics["iterations"] = static_cast<double>(model.iterations);
    add_artifact(record, config, kModelFile);
    add_artifact(record, config, kThetaFile);
    add_artifact(record, config, kPhiFile);
    return record;
}

StageRecord stage_pairs(const PipelineConfig& config) {
    StageRecord record;
    auto corp = corpus::read_corpus_jsonl_file(workpath(config, kCorpusFile));
    auto model = topics::load_model(workpath(config, kModelFile));
    auto set = pairs::sample_pairs(corp.vocabulary, model, config.pair_sampling);
    pairs::write_pairs_csv_file(set.samples, workpath(config, kPairsFile));
    auto stats = pairs::dataset_stats(set.samples, config.pair_sampling.label_bins);
    record.metrics["pairs"] = static_cast<double>(set.samples.size());
    record.metrics["exhausted"] = set.exhausted ? 1.0 : 0.0;
    record.metrics["train_pairs"] = static_cast<double>(stats.splits[0]);
    record.metrics["validation_pairs"] = static_cast<double>(stats.splits[1]);
    record.metrics["test_pairs"] = static_cast<double>(stats.splits[2]);
    add_artifact(record, config, kPairsFile);
    return record;
}

StageRecord stage_tensors(const PipelineConfig& config) {
    StageRecord record;
    auto records = ingest::parse_attribute_records_file(config.attributes_path);
    auto corp = corpus::read_corpus_jsonl_file(workpath(config, kCorpusFile));

    ingest::TensorLayout layout;
    layout.target_length = static_cast<std::size_t>(config.tensor.length);
    if (!config.tensor.channels.empty()) {
        layout.channel_order = config.tensor.channels;
    } else {
        if (records.empty()) throw DataError("attribute catalog is empty");
        for (const auto& [name, _] : records.front().features) {
            layout.channel_order.push_back(name);
        }
    }
    config.network
        .architecture(static_cast<int>(layout.channel_order.size()), config.tensor.length)
        .validate();

    std::vector<ingest::FeatureTensor> tensors;
    tensors.reserve(corp.vocabulary.size());
    for (const auto& rec : records) {
        if (!corp.vocabulary.contains(rec.song_key)) continue;
        tensors.push_back(ingest::assemble_tensor(rec, layout));
    }
    if (tensors.empty()) throw DataError("no vocabulary song has attribute records");
    std::sort(tensors.begin(), tensors.end(),
              [](const auto& a, const auto& b) { return a.song_key < b.song_key; });
    ingest::ChannelStats stats = ingest::compute_channel_stats(tensors);
    if (config.tensor.standardize) {
        for (auto& t : tensors) ingest::standardize(t, stats);
    }
    {
        std::ofstream out(workpath(config, kTensorsFile));
        if (!out) throw IoError("cannot write tensors file");
        ingest::write_tensors_jsonl(tensors, out);
    }
    {
        nlohmann::json j;
        j["channels"] = layout.channel_order;
        j["target_length"] = config.tensor.length;
        j["mean"] = stats.mean;
        j["stddev"] = stats.stddev;
        j["standardized"] = config.tensor.standardize;
        std::ofstream out(workpath(config, kChannelStatsFile));
        if (!out) throw IoError("cannot write channel stats file");
        out << j.dump(2) << '\n';
    }
    record.metrics["tensors"] = static_cast<double>(tensors.size());
    record.metrics["channels"] = static_cast<double>(layout.channel_order.size());
    record.metrics["length"] = static_cast<double>(config.tensor.length);
    add_artifact(record, config, kTensorsFile);
    add_artifact(record, config, kChannelStatsFile);
    return record;
}

StageRecord stage_temporal(const PipelineConfig& config) {
    StageRecord record;
    auto report = ingest::parse_events_file(workpath(config, kResolvedEvents),
                                            ingest::MalformedLinePolicy::Strict, true);
    auto model = topics::load_model(workpath(config, kModelFile));

    auto scan = temporal::gap_similarity_scan(report.events, model,
                                              config.analysis.time_scale_minutes,
                                              config.inversion);
    if (!scan.observations.empty()) {
        auto hist = temporal::gap_histogram(scan.observations, config.analysis.bins);
        std::ofstream out(workpath(config, kGapFile));
        if (!out) throw IoError("cannot write gap csv");
        temporal::write_gap_csv(hist, out);
        std::vector<double> gaps, sims;
        gaps.reserve(scan.observations.size());
        for (const auto& obs : scan.observations) {
            gaps.push_back(obs.delta_t);
            sims.push_back(obs.sim);
        }
        record.metrics["spearman_gap_sim"] = spearman_correlation(gaps, sims);
    } else {
        std::ofstream out(workpath(config, kGapFile));
        out << "log_dt_lo,log_dt_hi,count,mean_sim\n";
    }
    record.metrics["gap_observations"] = static_cast<double>(scan.observations.size());
    record.metrics["gap_skipped_pairs"] = static_cast<double>(scan.skipped_pairs);

    auto levels = temporal::n_skip_analysis(report.events, model, config.analysis.max_skip,
                                            config.inversion);
    {
        std::ofstream out(workpath(config, kSkipFile));
        if (!out) throw IoError("cannot write nskip csv");
        temporal::write_nskip_csv(levels, out);
    }
    std::vector<double> ns, means;
    for (const auto& level : levels) {
        ns.push_back(static_cast<double>(level.n));
        means.push_back(level.mean);
    }
    record.metrics["mean_sim_skip0"] = levels.front().mean;
    record.metrics["mean_sim_skip_max"] = levels.back().mean;
    record.metrics["kendall_tau_nskip"] = kendall_tau(ns, means);
    add_artifact(record, config, kGapFile);
    add_artifact(record, config, kSkipFile);
    return record;
}

StageRecord stage_train(const PipelineConfig& config) {
    StageRecord record;
    auto samples = pairs::read_pairs_csv_file(workpath(config, kPairsFile));
    simnet::TensorMap tensors;
    {
        std::ifstream in(workpath(config, kTensorsFile));
        if (!in) throw IoError("cannot open tensors file");
        for (auto& t : ingest::read_tensors_jsonl(in)) {
            std::string key = t.song_key;
            tensors.emplace(std::move(key), std::move(t));
        }
    }
    if (tensors.empty()) throw DataError("tensors file is empty");
    const auto& first = tensors.begin()->second;
    auto arch = config.network.architecture(static_cast<int>(first.channels),
                                            static_cast<int>(first.length));
    auto result = simnet::train(samples, tensors, arch, config.train);
    {
        std::ofstream out(workpath(config, kLossHistoryFile));
        if (!out) throw IoError("cannot write loss history");
        simnet::write_loss_history_csv(result.history, out);
    }
    simnet::Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.optimizer = result.optimizer;
    ckpt.seed = config.train.seed;
    ckpt.epoch = result.best_epoch;
    ckpt.best_validation_loss = result.best_validation;
    simnet::save_checkpoint(ckpt, workpath(config, kCheckpointFile));

    record.metrics["epochs_run"] = static_cast<double>(result.history.size());
    record.metrics["best_epoch"] = static_cast<double>(result.best_epoch);
    record.metrics["best_validation_mse"] = result.best_validation;
    record.metrics["final_train_mse"] = result.history.back().train_mse;
    record.metrics["final_validation_mse"] = result.history.back().validation_mse;
    bool has_test = std::any_of(samples.begin(), samples.end(), [](const auto& s) {
        return s.split == pairs::Split::Test;
    });
    if (has_test) {
        record.metrics["test_mse"] =
            simnet::evaluate_mse(result.params, samples, tensors, pairs::Split::Test);
    }
    add_artifact(record, config, kLossHistoryFile);
    add_artifact(record, config, kCheckpointFile);
    return record;
}

StageRecord dispatch_stage(const std::string& name, const PipelineConfig& config) {
    if (name == "ingest") return stage_ingest(config);
    if (name == "corpus") return stage_corpus(config);
    if (name == "lda") return stage_lda(config);
    if (name == "pairs") return stage_pairs(config);
    if (name == "tensors") return stage_tensors(config);
    if (name == "temporal") return stage_temporal(config);
    if (name == "train") return stage_train(config);
    throw ConfigError("unknown stage: " + name);
}

bool artifacts_still_valid(const StageRecord& record, const PipelineConfig& config) {
    if (record.artifacts.empty()) return false;
    for (const auto& [name, hash] : record.artifacts) {
        std::string path = workpath(config, name.c_str());
        if (!fs::exists(path)) return false;
        if (sha256_file_hex(path) != hash) return false;
    }
    return true;
}

}  // namespace

StageRecord run_stage(const std::string& name, const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.workdir);
    StageRecord record = dispatch_stage(name, config);
    record.status = "ok";
    record.config_hash = config.config_hash();
    return record;
}

RunResult run_tastesim(const PipelineConfig& config, const RunOptions& options) {
    config.validate();
    WorkdirLock lock(config.workdir);
    const std::string hash = config.config_hash();
    const std::string manifest_path = workpath(config, kManifestFile);

    Manifest manifest;
    if (fs::exists(manifest_path)) {
        Manifest previous = read_manifest(manifest_path);
        if (previous.config_hash != hash) {
            throw ConfigError(
                "workdir holds artifacts for a different configuration; refusing to resume "
                "(use a fresh workdir)");
        }
        if (options.resume) manifest = std::move(previous);
    }
    manifest.config_hash = hash;
    manifest.config_echo = config.canonical_toml();
    manifest.created_at = now_iso();
    manifest.failed_stage.clear();

    RunResult result;
    for (const auto& stage : kStageOrder) {
        if (options.resume && manifest.stage_ok(stage) &&
            manifest.stages[stage].config_hash == hash &&
            artifacts_still_valid(manifest.stages[stage], config)) {
            continue;  // stage output already on disk for this config
        }
        try {
            StageRecord record = dispatch_stage(stage, config);
            record.status = "ok";
            record.config_hash = hash;
            manifest.stages[stage] = std::move(record);
            write_manifest(manifest, manifest_path);
        } catch (const std::exception& e) {
            StageRecord record;
            record.status = "failed";
            record.config_hash = hash;
            record.error = e.what();
            manifest.stages[stage] = std::move(record);
            manifest.failed_stage = stage;
            write_manifest(manifest, manifest_path);
            result.manifest = std::move(manifest);
            result.ok = false;
            result.error = stage + ": " + e.what();
            return result;
        }
    }
    write_manifest(manifest, manifest_path);
    result.manifest = std::move(manifest);
    result.ok = true;
    return result;
}

namespace {

nlohmann::json csv_to_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) return nlohmann::json::array();
    nlohmann::json rows = nlohmann::json::array();
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = parse_csv_line(line);
        if (header.empty()) {
            header = fields;
            continue;
        }
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) {
            char* end = nullptr;
            double v = std::strtod(fields[i].c_str(), &end);
            if (end && *end == '\0' && end != fields[i].c_str()) row[header[i]] = v;
            else row[header[i]] = fields[i];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string build_report(const PipelineConfig& config) {
    const std::string manifest_path = workpath(config, kManifestFile);
    if (!fs::exists(manifest_path)) {
        throw DataError("no manifest in workdir; run the pipeline first");
    }
    Manifest manifest = read_manifest(manifest_path);
    nlohmann::json j;
    j["config_hash"] = manifest.config_hash;
    j["created_at"] = manifest.created_at;
    j["failed_stage"] = manifest.failed_stage;
    nlohmann::json stage_metrics = nlohmann::json::object();
    for (const auto& [name, record] : manifest.stages) {
        stage_metrics[name] = {{"status", record.status}, {"metrics", record.metrics}};
    }
    j["stages"] = std::move(stage_metrics);
    j["gap_similarity"] = csv_to_json(workpath(config, kGapFile));
    j["n_skip"] = csv_to_json(workpath(config, kSkipFile));
    j["loss_history"] = csv_to_json(workpath(config, kLossHistoryFile));
    return j.dump(2);
}

}  // namespace tastesim::pipeline
