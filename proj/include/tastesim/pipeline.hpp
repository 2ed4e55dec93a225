#pragma once

#include <map>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/config.hpp"
#include "tastesim/corpus.hpp"
#include "tastesim/ingest.hpp"
#include "tastesim/pairs.hpp"
#include "tastesim/simnet.hpp"
#include "tastesim/topics.hpp"

namespace tastesim::pipeline {

// Stage order of the full run; each stage reads its predecessors' artifacts
// from the workdir and persists its own before the next starts.
inline const std::vector<std::string> kStageOrder = {
    "ingest", "corpus", "lda", "pairs", "tensors", "temporal", "train"};

struct IngestConfig {
    ingest::MalformedLinePolicy policy = ingest::MalformedLinePolicy::Lenient;
    double match_threshold = 0.85;
    int min_listen_count = 1;
    bool drop_unmatched = true;
    bool resolved_track_ids = false;  // trust track_id as song_key (synthetic worlds)
};

struct AnalysisConfig {
    double time_scale_minutes = 1.0;
    int bins = 40;
    int max_skip = 10;
};

struct TensorConfig {
    std::vector<std::string> channels;  // empty selects every feature of the catalog
    int length = 64;
    bool standardize = true;
};

struct NetworkConfig {
    std::vector<int> conv_out = {8, 8};
    std::vector<int> conv_kernel = {5, 5};  // filter size 5
    std::vector<int> conv_pool = {2, 2};
    std::vector<int> fc_hidden = {800, 600};  // desk-scale configs shrink these
    int output_units = 20;  // one per theme
    simnet::OutputActivation output_activation = simnet::OutputActivation::Identity;
    bool pool_before_conv = true;

    simnet::NetworkArchitecture architecture(int input_channels, int input_length) const;
};

struct PipelineConfig {
    std::string events_path;
    std::string attributes_path;
    std::string workdir = "tastesim-work";

    IngestConfig ingest_cfg;
    corpus::WeekWindow window;
    topics::LdaOptions lda;
    topics::InversionMode inversion = topics::InversionMode::BayesWeighted;
    pairs::SampleOptions pair_sampling;
    TensorConfig tensor;
    NetworkConfig network;
    simnet::TrainConfig train;
    AnalysisConfig analysis;

    static PipelineConfig from_table(const config::Table& table);
    static PipelineConfig from_file(const std::string& path);
    config::Table to_table() const;
    std::string canonical_toml() const;
    std::string config_hash() const;

    // Eager validation of every numeric constraint known before data is read.
    void validate() const;
};

struct StageRecord {
    std::string status;  // "ok" | "failed" | "skipped"
    std::string config_hash;
    std::map<std::string, std::string> artifacts;  // file name -> sha256
    std::map<std::string, double> metrics;
    std::string error;
};

struct Manifest {
    std::string config_hash;
    std::string config_echo;
    std::string created_at;
    std::map<std::string, StageRecord> stages;
    std::string failed_stage;

    bool stage_ok(const std::string& name) const;
};

void write_manifest(const Manifest& manifest, const std::string& path);
Manifest read_manifest(const std::string& path);

struct RunOptions {
    bool resume = true;  // reuse stages recorded under the same config hash
};

struct RunResult {
    Manifest manifest;
    bool ok = false;
    std::string error;
};

// Algorithm pipeline end to end: ingest -> corpus -> lda -> pairs -> tensors
// -> temporal analyses -> train. Artifacts land in config.workdir, guarded by
// a lock file; a manifest records hashes, metrics and the failed stage if any.
RunResult run_tastesim(const PipelineConfig& config, const RunOptions& options = {});

// Individual stages (used by the CLI subcommands); each returns its record.
StageRecord run_stage(const std::string& name, const PipelineConfig& config);

// Aggregates persisted artifacts into report.json without recomputing.
std::string build_report(const PipelineConfig& config);

}  // namespace tastesim::pipeline
