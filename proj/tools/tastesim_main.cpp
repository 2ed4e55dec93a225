// tastesim: taste-driven attribute-similarity pipeline CLI.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tastesim/pipeline.hpp"
#include "tastesim/synth.hpp"
#include "tastesim/temporal.hpp"

using namespace tastesim;
namespace fs = std::filesystem;

namespace {

struct ConfigOverrides {
    std::string config_path;
    std::optional<std::string> events;
    std::optional<std::string> attributes;
    std::optional<std::string> workdir;
    std::optional<int> k;
    std::optional<int> iterations;
    std::optional<std::int64_t> lda_seed;
    std::optional<std::int64_t> pair_count;
    std::optional<std::string> strategy;
    std::optional<std::int64_t> pair_seed;
    std::optional<int> tensor_length;
    std::optional<int> epochs;
    std::optional<double> learning_rate;
    std::optional<std::string> optimizer;
    std::optional<std::int64_t> train_seed;
    std::optional<double> time_scale;
    std::optional<int> bins;
    std::optional<int> max_skip;
    std::optional<bool> resolved_track_ids;
};

// Shared flags mirroring config keys; command-line values win over the file.
void add_config_options(CLI::App* cmd, ConfigOverrides& ov) {
    cmd->add_option("--config", ov.config_path, "pipeline config file (TOML)");
    cmd->add_option("--events", ov.events, "event log (TSV)");
    cmd->add_option("--attributes", ov.attributes, "attribute catalog (JSONL)");
    cmd->add_option("--workdir", ov.workdir, "artifact directory");
    cmd->add_option("--k", ov.k, "theme count");
    cmd->add_option("--iterations", ov.iterations, "gibbs sweeps");
    cmd->add_option("--lda-seed", ov.lda_seed, "lda sampler seed");
    cmd->add_option("--pair-count", ov.pair_count, "pairs to sample");
    cmd->add_option("--strategy", ov.strategy,
                    "uniform-random | co-occurrence-weighted | stratified-by-label");
    cmd->add_option("--pair-seed", ov.pair_seed, "pair sampler seed");
    cmd->add_option("--tensor-length", ov.tensor_length, "per-channel tensor length");
    cmd->add_option("--epochs", ov.epochs, "training epochs");
    cmd->add_option("--learning-rate", ov.learning_rate, "optimizer step size");
    cmd->add_option("--optimizer", ov.optimizer, "sgd | momentum | adam");
    cmd->add_option("--train-seed", ov.train_seed, "training seed");
    cmd->add_option("--time-scale", ov.time_scale, "gap time scale in minutes");
    cmd->add_option("--bins", ov.bins, "gap histogram bins");
    cmd->add_option("--max-skip", ov.max_skip, "largest n-skip level");
    cmd->add_flag("--resolved-track-ids,!--no-resolved-track-ids", ov.resolved_track_ids,
                  "treat track_id as an already-resolved song key");
}

pipeline::PipelineConfig effective_config(const ConfigOverrides& ov) {
    pipeline::PipelineConfig config;
    if (!ov.config_path.empty()) config = pipeline::PipelineConfig::from_file(ov.config_path);
    if (ov.events) config.events_path = *ov.events;
    if (ov.attributes) config.attributes_path = *ov.attributes;
    if (ov.workdir) config.workdir = *ov.workdir;
    if (ov.k) config.lda.k = *ov.k;
    if (ov.iterations) config.lda.iterations = *ov.iterations;
    if (ov.lda_seed) config.lda.seed = static_cast<std::uint64_t>(*ov.lda_seed);
    if (ov.pair_count) config.pair_sampling.count = static_cast<std::size_t>(*ov.pair_count);
    if (ov.strategy) config.pair_sampling.strategy = pairs::strategy_from_name(*ov.strategy);
    if (ov.pair_seed) config.pair_sampling.seed = static_cast<std::uint64_t>(*ov.pair_seed);
    if (ov.tensor_length) config.tensor.length = *ov.tensor_length;
    if (ov.epochs) config.train.epochs = *ov.epochs;
    if (ov.learning_rate) config.train.learning_rate = *ov.learning_rate;
    if (ov.optimizer) config.train.optimizer = simnet::optimizer_from_name(*ov.optimizer);
    if (ov.train_seed) config.train.seed = static_cast<std::uint64_t>(*ov.train_seed);
    if (ov.time_scale) config.analysis.time_scale_minutes = *ov.time_scale;
    if (ov.bins) config.analysis.bins = *ov.bins;
    if (ov.max_skip) config.analysis.max_skip = *ov.max_skip;
    if (ov.resolved_track_ids) config.ingest_cfg.resolved_track_ids = *ov.resolved_track_ids;
    config.validate();
    return config;
}

void print_stage(const std::string& name, const pipeline::StageRecord& record) {
    std::printf("  %-10s %s", name.c_str(), record.status.c_str());
    for (const auto& [key, value] : record.metrics) {
        std::printf("  %s=%g", key.c_str(), value);
    }
    std::printf("\n");
}

int run_full(const ConfigOverrides& ov) {
    auto config = effective_config(ov);
    auto result = pipeline::run_tastesim(config);
    std::printf("workdir: %s\nconfig hash: %s\n", config.workdir.c_str(),
                result.manifest.config_hash.c_str());
    for (const auto& stage : pipeline::kStageOrder) {
        auto it = result.manifest.stages.find(stage);
        if (it != result.manifest.stages.end()) print_stage(stage, it->second);
    }
    if (!result.ok) {
        std::fprintf(stderr, "pipeline failed at %s: %s\n",
                     result.manifest.failed_stage.c_str(), result.error.c_str());
        return 1;
    }
    return 0;
}

int run_single_stage(const std::string& stage, const ConfigOverrides& ov) {
    auto config = effective_config(ov);
    auto record = pipeline::run_stage(stage, config);
    print_stage(stage, record);
    return 0;
}

double checkpoint_similarity(const std::string& checkpoint_path, const std::string& tensors_path,
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
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TASTESIM: learn song-pair attribute similarity from taste proximity"};
    app.require_subcommand(1);

    ConfigOverrides run_ov, ingest_ov, corpus_ov, lda_ov, pairs_ov, tensors_ov, train_ov,
        gaps_ov, skip_ov, report_ov;

    auto* cmd_run = app.add_subcommand("run", "execute the full pipeline");
    add_config_options(cmd_run, run_ov);

    auto* cmd_ingest = app.add_subcommand("ingest", "parse events, match songs, resolve keys");
    add_config_options(cmd_ingest, ingest_ov);

    auto* cmd_corpus = app.add_subcommand("build-corpus", "build weekly bag-of-songs documents");
    add_config_options(cmd_corpus, corpus_ov);

    auto* cmd_lda = app.add_subcommand("lda-fit", "fit the latent taste model");
    add_config_options(cmd_lda, lda_ov);

    auto* cmd_pairs = app.add_subcommand("sample-pairs", "sample taste-labeled song pairs");
    add_config_options(cmd_pairs, pairs_ov);

    auto* cmd_tensors =
        app.add_subcommand("assemble-tensors", "assemble standardized attribute tensors");
    add_config_options(cmd_tensors, tensors_ov);

    auto* cmd_train = app.add_subcommand("train", "train the similarity network");
    add_config_options(cmd_train, train_ov);

    auto* cmd_gaps = app.add_subcommand("analyze-gaps", "gap-time similarity scan and histogram");
    add_config_options(cmd_gaps, gaps_ov);

    auto* cmd_skip = app.add_subcommand("analyze-skip", "n-skip similarity distributions");
    add_config_options(cmd_skip, skip_ov);

    auto* cmd_report = app.add_subcommand("report", "aggregate persisted artifacts");
    add_config_options(cmd_report, report_ov);

    // taste-sim
    std::string ts_model, ts_song_x, ts_song_y, ts_inversion = "bayes";
    auto* cmd_taste = app.add_subcommand("taste-sim", "taste similarity of two songs");
    cmd_taste->add_option("--model", ts_model, "fitted model file")->required();
    cmd_taste->add_option("--song-x", ts_song_x)->required();
    cmd_taste->add_option("--song-y", ts_song_y)->required();
    cmd_taste->add_option("--inversion", ts_inversion, "bayes | column");

    // predict
    std::string pr_checkpoint, pr_tensors, pr_song_x, pr_song_y;
    auto* cmd_predict = app.add_subcommand("predict", "network similarity of two songs");
    cmd_predict->add_option("--checkpoint", pr_checkpoint)->required();
    cmd_predict->add_option("--tensors", pr_tensors, "tensors.jsonl from assemble-tensors")
        ->required();
    cmd_predict->add_option("--song-x", pr_song_x)->required();
    cmd_predict->add_option("--song-y", pr_song_y)->required();

    // synth-gen
    synth::WorldSpec world_spec;
    std::string sg_events = "events.tsv", sg_attributes = "attributes.jsonl",
                sg_truth = "ground_truth.csv";
    std::int64_t sg_seed = static_cast<std::int64_t>(world_spec.seed);
    auto* cmd_synth = app.add_subcommand("synth-gen", "generate a synthetic world");
    cmd_synth->add_option("--events", sg_events, "output event log");
    cmd_synth->add_option("--attributes", sg_attributes, "output attribute catalog");
    cmd_synth->add_option("--truth", sg_truth, "output ground-truth csv");
    cmd_synth->add_option("--themes", world_spec.themes);
    cmd_synth->add_option("--songs-per-theme", world_spec.songs_per_theme);
    cmd_synth->add_option("--users", world_spec.users);
    cmd_synth->add_option("--weeks", world_spec.weeks);
    cmd_synth->add_option("--mean-streak", world_spec.mean_streak_length);
    cmd_synth->add_option("--within-gap", world_spec.within_gap_mean_minutes);
    cmd_synth->add_option("--between-gap", world_spec.between_gap_mean_minutes);
    cmd_synth->add_option("--sigma-within", world_spec.sigma_within);
    cmd_synth->add_option("--sigma-between", world_spec.sigma_between);
    cmd_synth->add_option("--channels", world_spec.attr_channels);
    cmd_synth->add_option("--length", world_spec.attr_length);
    cmd_synth->add_option("--seed", sg_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_run->parsed()) return run_full(run_ov);
        if (cmd_ingest->parsed()) return run_single_stage("ingest", ingest_ov);
        if (cmd_corpus->parsed()) return run_single_stage("corpus", corpus_ov);
        if (cmd_lda->parsed()) return run_single_stage("lda", lda_ov);
        if (cmd_pairs->parsed()) return run_single_stage("pairs", pairs_ov);
        if (cmd_tensors->parsed()) return run_single_stage("tensors", tensors_ov);
        if (cmd_train->parsed()) {
            auto config = effective_config(train_ov);
            if (!fs::exists(fs::path(config.workdir) / "tensors.jsonl")) {
                print_stage("tensors", pipeline::run_stage("tensors", config));
            }
            print_stage("train", pipeline::run_stage("train", config));
            return 0;
        }
        if (cmd_gaps->parsed()) return run_single_stage("temporal", gaps_ov);
        if (cmd_skip->parsed()) return run_single_stage("temporal", skip_ov);
        if (cmd_report->parsed()) {
            auto config = effective_config(report_ov);
            std::string report = pipeline::build_report(config);
            std::string out_path = (fs::path(config.workdir) / "report.json").string();
            std::ofstream out(out_path);
            if (!out) throw IoError("cannot write " + out_path);
            out << report << '\n';
            std::cout << report << '\n';
            return 0;
        }
        if (cmd_taste->parsed()) {
            auto model = topics::load_model(ts_model);
            auto mode = ts_inversion == "column" ? topics::InversionMode::ColumnNormalized
                                                 : topics::InversionMode::BayesWeighted;
            auto px = topics::song_theme_distribution(model, ts_song_x, mode);
            auto py = topics::song_theme_distribution(model, ts_song_y, mode);
            std::printf("%.6f\n", topics::taste_similarity(px, py));
            return 0;
        }
        if (cmd_predict->parsed()) {
            double sim = checkpoint_similarity(pr_checkpoint, pr_tensors, pr_song_x, pr_song_y);
            std::printf("%.6f\n", sim);
            return 0;
        }
        if (cmd_synth->parsed()) {
            world_spec.seed = static_cast<std::uint64_t>(sg_seed);
            auto world = synth::generate_world(world_spec);
            synth::write_world(world, sg_events, sg_attributes, sg_truth);
            std::printf("songs=%zu events=%zu users=%d themes=%d\n", world.true_theme.size(),
                        world.events.size(), world_spec.users, world_spec.themes);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
