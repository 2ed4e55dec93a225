#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tastesim/common.hpp"

namespace tastesim::ingest {

// One (user, timestamp, song) consumption record. song_key stays empty until
// resolved against the attribute catalog.
struct ListeningEvent {
    std::string user_id;
    EpochSeconds timestamp = 0;
    std::string artist_id;  // may be empty
    std::string artist_name;
    std::string track_id;  // may be empty
    std::string song_title;
    std::string song_key;

    bool operator==(const ListeningEvent&) const = default;
};

enum class MalformedLinePolicy { Strict, Lenient };

struct ParseReport {
    std::vector<ListeningEvent> events;
    std::size_t malformed_count = 0;
    std::vector<std::string> diagnostics;  // capped at kMaxDiagnostics
};

inline constexpr std::size_t kMaxDiagnostics = 50;

// Tab-separated, 6 columns: user_id, ISO-8601 timestamp, artist_id,
// artist_name, track_id, track_name. Under Strict the first malformed line
// throws DataError; under Lenient it is counted and skipped.
// resolved=true treats the track_id column as an already-resolved song_key.
ParseReport parse_events(std::istream& in, MalformedLinePolicy policy,
                         bool resolved = false);
ParseReport parse_events_file(const std::string& path, MalformedLinePolicy policy,
                              bool resolved = false);

void serialize_events(std::span<const ListeningEvent> events, std::ostream& out);
std::string serialize_events(std::span<const ListeningEvent> events);
void write_events_file(std::span<const ListeningEvent> events, const std::string& path);

// Per-song bundle of named attribute sequences plus optional catalog metadata
// (artist_id/title) used for matching. title defaults to song_key.
struct SongAttributeRecord {
    std::string song_key;
    std::map<std::string, std::vector<double>> features;
    std::string artist_id;
    std::string title;
};

// One JSON object per line: {"song_key": str, "features": {name: [numbers]},
// "artist_id"?: str, "title"?: str}. Rejects NaN/Inf and empty feature maps.
std::vector<SongAttributeRecord> parse_attribute_records(std::istream& in);
std::vector<SongAttributeRecord> parse_attribute_records_file(const std::string& path);
void write_attribute_records(std::span<const SongAttributeRecord> records, std::ostream& out);
void write_attribute_records_file(std::span<const SongAttributeRecord> records,
                                  const std::string& path);

struct CatalogEntry {
    std::string song_key;
    std::string artist_id;  // may be empty
    std::string title;
};

std::vector<CatalogEntry> catalog_from_records(std::span<const SongAttributeRecord> records);

struct MatchResult {
    std::string event_song_title;
    std::string event_artist;
    std::string matched_song_key;  // empty when unmatched
    double score = 0.0;

    bool matched() const { return !matched_song_key.empty(); }
};

struct MatchOptions {
    double threshold = 0.85;  // in (0, 1]
};

// Best catalog candidate per distinct (artist_id, title) event song.
// Exact (artist_id, normalized title) pairs score 1.0; otherwise normalized
// Levenshtein similarity over normalized titles, restricted to the event's
// artist_id when present. Ties break on lexicographically smallest song_key.
std::vector<MatchResult> match_songs(std::span<const ListeningEvent> events,
                                     std::span<const CatalogEntry> catalog,
                                     const MatchOptions& options = {});

// Lowercased, punctuation stripped, whitespace collapsed.
std::string normalize_title(std::string_view title);
std::size_t levenshtein_distance(std::string_view a, std::string_view b);
// 1 - distance/max_len over normalized titles; 1.0 for two empty strings.
double title_similarity(std::string_view a, std::string_view b);

void write_match_report_csv(std::span<const MatchResult> results, std::ostream& out);

struct ResolveOptions {
    bool drop_unmatched = true;
    int min_listen_count = 1;  // songs listened fewer times are dropped
};

struct ResolveReport {
    std::vector<ListeningEvent> events;  // song_key filled in
    std::size_t dropped_unmatched = 0;
    std::size_t dropped_rare = 0;
};

ResolveReport apply_matches(std::span<const ListeningEvent> events,
                            std::span<const MatchResult> matches,
                            const ResolveOptions& options = {});

// Fixed-shape channels-by-time view of one song's selected attributes.
struct FeatureTensor {
    std::string song_key;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values;  // row-major channels x length

    double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
    double& at(std::size_t c, std::size_t t) { return values[c * length + t]; }
};

struct TensorLayout {
    std::vector<std::string> channel_order;
    std::size_t target_length = 0;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Right-pads with zeros or right-truncates each selected feature to
// target_length; length-1 features broadcast to constant channels. When stats
// are given, channels with stddev > 0 are z-scored; constant channels are
// left untouched.
FeatureTensor assemble_tensor(const SongAttributeRecord& record, const TensorLayout& layout,
                              const ChannelStats* stats = nullptr);

ChannelStats compute_channel_stats(std::span<const FeatureTensor> tensors);
void standardize(FeatureTensor& tensor, const ChannelStats& stats);

void write_tensors_jsonl(std::span<const FeatureTensor> tensors, std::ostream& out);
std::vector<FeatureTensor> read_tensors_jsonl(std::istream& in);

}  // namespace tastesim::ingest
