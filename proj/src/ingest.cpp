#include "tastesim/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tastesim/csv.hpp"

namespace tastesim::ingest {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

void report_malformed(ParseReport& report, MalformedLinePolicy policy, std::size_t line_no,
                      const std::string& reason) {
    if (policy == MalformedLinePolicy::Strict) {
        throw DataError("line " + std::to_string(line_no) + ": " + reason);
    }
    ++report.malformed_count;
    if (report.diagnostics.size() < kMaxDiagnostics) {
        report.diagnostics.push_back("line " + std::to_string(line_no) + ": " + reason);
    }
}

}  // namespace

ParseReport parse_events(std::istream& in, MalformedLinePolicy policy, bool resolved) {
    if (!in) throw IoError("unreadable event stream");
    ParseReport report;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 6) {
            report_malformed(report, policy, line_no,
                             "expected 6 tab-separated fields, got " +
                                 std::to_string(fields.size()));
            continue;
        }
        auto ts = parse_iso8601_utc(fields[1]);
        if (!ts) {
            report_malformed(report, policy, line_no,
                             "unparseable timestamp '" + std::string(fields[1]) + "'");
            continue;
        }
        if (fields[0].empty()) {
            report_malformed(report, policy, line_no, "empty user_id");
            continue;
        }
        ListeningEvent ev;
        ev.user_id = std::string(fields[0]);
        ev.timestamp = *ts;
        ev.artist_id = std::string(fields[2]);
        ev.artist_name = std::string(fields[3]);
        ev.track_id = std::string(fields[4]);
        ev.song_title = std::string(fields[5]);
        if (resolved) ev.song_key = ev.track_id;
        report.events.push_back(std::move(ev));
    }
    if (in.bad()) throw IoError("read failure on event stream");
    return report;
}

ParseReport parse_events_file(const std::string& path, MalformedLinePolicy policy,
                              bool resolved) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open event file: " + path);
    return parse_events(in, policy, resolved);
}

void serialize_events(std::span<const ListeningEvent> events, std::ostream& out) {
    for (const auto& ev : events) {
        out << ev.user_id << '\t' << format_iso8601_utc(ev.timestamp) << '\t' << ev.artist_id
            << '\t' << ev.artist_name << '\t' << ev.track_id << '\t' << ev.song_title << '\n';
    }
}

std::string serialize_events(std::span<const ListeningEvent> events) {
    std::ostringstream out;
    serialize_events(events, out);
    return out.str();
}

void write_events_file(std::span<const ListeningEvent> events, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write event file: " + path);
    serialize_events(events, out);
    if (!out) throw IoError("write failure: " + path);
}

std::vector<SongAttributeRecord> parse_attribute_records(std::istream& in) {
    if (!in) throw IoError("unreadable attribute stream");
    std::vector<SongAttributeRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("attribute line " + std::to_string(line_no) + ": " + e.what());
        }
        SongAttributeRecord rec;
        if (!j.contains("song_key") || !j["song_key"].is_string()) {
            throw DataError("attribute line " + std::to_string(line_no) + ": missing song_key");
        }
        rec.song_key = j["song_key"].get<std::string>();
        if (!j.contains("features") || !j["features"].is_object() || j["features"].empty()) {
            throw DataError("attribute line " + std::to_string(line_no) +
                            ": record needs at least one feature");
        }
        for (auto& [name, arr] : j["features"].items()) {
            std::vector<double> seq;
            if (arr.is_number()) {
                seq.push_back(arr.get<double>());
            } else if (arr.is_array()) {
                seq.reserve(arr.size());
                for (auto& v : arr) {
                    if (!v.is_number()) {
                        throw DataError("attribute line " + std::to_string(line_no) +
                                        ": non-numeric value in feature '" + name + "'");
                    }
                    seq.push_back(v.get<double>());
                }
            } else {
                throw DataError("attribute line " + std::to_string(line_no) + ": feature '" +
                                name + "' must be a number or array");
            }
            for (double v : seq) {
                if (!std::isfinite(v)) {
                    throw DataError("attribute line " + std::to_string(line_no) +
                                    ": non-finite value in feature '" + name + "'");
                }
            }
            rec.features.emplace(name, std::move(seq));
        }
        if (j.contains("artist_id")) rec.artist_id = j["artist_id"].get<std::string>();
        rec.title = j.contains("title") ? j["title"].get<std::string>() : rec.song_key;
        records.push_back(std::move(rec));
    }
    if (in.bad()) throw IoError("read failure on attribute stream");
    return records;
}

std::vector<SongAttributeRecord> parse_attribute_records_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open attribute file: " + path);
    return parse_attribute_records(in);
}

void write_attribute_records(std::span<const SongAttributeRecord> records, std::ostream& out) {
    for (const auto& rec : records) {
        nlohmann::json j;
        j["song_key"] = rec.song_key;
        nlohmann::json feats = nlohmann::json::object();
        for (const auto& [name, seq] : rec.features) feats[name] = seq;
        j["features"] = std::move(feats);
        if (!rec.artist_id.empty()) j["artist_id"] = rec.artist_id;
        if (!rec.title.empty() && rec.title != rec.song_key) j["title"] = rec.title;
        out << j.dump() << '\n';
    }
}

void write_attribute_records_file(std::span<const SongAttributeRecord> records,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write attribute file: " + path);
    write_attribute_records(records, out);
    if (!out) throw IoError("write failure: " + path);
}

std::vector<CatalogEntry> catalog_from_records(std::span<const SongAttributeRecord> records) {
    std::vector<CatalogEntry> catalog;
    catalog.reserve(records.size());
    for (const auto& rec : records) {
        catalog.push_back(
            {rec.song_key, rec.artist_id, rec.title.empty() ? rec.song_key : rec.title});
    }
    return catalog;
}

std::string normalize_title(std::string_view title) {
    std::string out;
    out.reserve(title.size());
    bool pending_space = false;
    for (unsigned char c : title) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (c >= 0x80) {
            // Keep non-ASCII bytes verbatim.
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(c));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(a.size() + 1), cur(a.size() + 1);
    for (std::size_t i = 0; i <= a.size(); ++i) prev[i] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
        cur[0] = j;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            std::size_t sub = prev[i - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[a.size()];
}

double title_similarity(std::string_view a, std::string_view b) {
    std::string na = normalize_title(a);
    std::string nb = normalize_title(b);
    std::size_t max_len = std::max(na.size(), nb.size());
    if (max_len == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein_distance(na, nb)) / static_cast<double>(max_len);
}

std::vector<MatchResult> match_songs(std::span<const ListeningEvent> events,
                                     std::span<const CatalogEntry> catalog,
                                     const MatchOptions& options) {
    if (options.threshold <= 0.0 || options.threshold > 1.0) {
        throw ConfigError("match threshold must lie in (0, 1]");
    }
    struct Candidate {
        const CatalogEntry* entry;
        std::string normalized_title;
    };
    std::vector<Candidate> all;
    all.reserve(catalog.size());
    std::unordered_map<std::string, std::vector<std::size_t>> by_artist;
    for (const auto& entry : catalog) {
        all.push_back({&entry, normalize_title(entry.title)});
        if (!entry.artist_id.empty()) by_artist[entry.artist_id].push_back(all.size() - 1);
    }

    std::vector<MatchResult> results;
    std::unordered_map<std::string, std::size_t> seen;  // distinct event song -> result slot
    for (const auto& ev : events) {
        std::string dedup_key = ev.artist_id + '\t' + ev.song_title;
        if (seen.count(dedup_key)) continue;
        seen.emplace(dedup_key, results.size());

        MatchResult res;
        res.event_song_title = ev.song_title;
        res.event_artist = ev.artist_id.empty() ? ev.artist_name : ev.artist_id;

        const std::string norm_event = normalize_title(ev.song_title);
        const std::vector<std::size_t>* restricted = nullptr;
        if (!ev.artist_id.empty()) {
            auto it = by_artist.find(ev.artist_id);
            if (it != by_artist.end()) restricted = &it->second;
        }

        auto consider = [&](const Candidate& cand) {
            double score;
            if (!ev.artist_id.empty() && cand.entry->artist_id == ev.artist_id &&
                cand.normalized_title == norm_event) {
                score = 1.0;
            } else {
                std::size_t max_len = std::max(norm_event.size(), cand.normalized_title.size());
                score = max_len == 0 ? 1.0
                                     : 1.0 - static_cast<double>(levenshtein_distance(
                                                 norm_event, cand.normalized_title)) /
                                                 static_cast<double>(max_len);
            }
            if (score > res.score ||
                (score == res.score && res.matched() &&
                 cand.entry->song_key < res.matched_song_key)) {
                res.score = score;
                res.matched_song_key = cand.entry->song_key;
            }
        };

        if (restricted) {
            for (std::size_t idx : *restricted) consider(all[idx]);
        } else {
            for (const auto& cand : all) consider(cand);
        }

        if (catalog.empty() || res.score < options.threshold) {
            res.matched_song_key.clear();
            if (catalog.empty()) res.score = 0.0;
        }
        results.push_back(std::move(res));
    }
    return results;
}

void write_match_report_csv(std::span<const MatchResult> results, std::ostream& out) {
    out << "event_title,event_artist,matched_song_key,score\n";
    for (const auto& r : results) {
        out << csv_field(r.event_song_title) << ',' << csv_field(r.event_artist) << ','
            << csv_field(r.matched_song_key) << ',' << format_double(r.score) << '\n';
    }
}

ResolveReport apply_matches(std::span<const ListeningEvent> events,
                            std::span<const MatchResult> matches,
                            const ResolveOptions& options) {
    // match_songs emits one result per distinct (artist_id, title) in first
    // appearance order; replay that order to join results back onto events.
    std::unordered_map<std::string, std::size_t> slot_of;
    ResolveReport report;
    std::unordered_map<std::string, int> listen_counts;
    std::vector<ListeningEvent> resolved;
    resolved.reserve(events.size());
    for (const auto& ev : events) {
        ListeningEvent copy = ev;
        std::string dedup_key = ev.artist_id + '\t' + ev.song_title;
        auto it = slot_of.emplace(dedup_key, slot_of.size()).first;
        if (copy.song_key.empty()) {
            if (it->second >= matches.size()) {
                throw DataError("match results do not cover the event list");
            }
            const MatchResult& m = matches[it->second];
            if (m.matched()) copy.song_key = m.matched_song_key;
        }
        if (copy.song_key.empty()) {
            ++report.dropped_unmatched;
            if (options.drop_unmatched) continue;
        }
        if (!copy.song_key.empty()) ++listen_counts[copy.song_key];
        resolved.push_back(std::move(copy));
    }
    for (auto& ev : resolved) {
        if (!ev.song_key.empty() && listen_counts[ev.song_key] < options.min_listen_count) {
            ++report.dropped_rare;
            continue;
        }
        report.events.push_back(std::move(ev));
    }
    return report;
}

FeatureTensor assemble_tensor(const SongAttributeRecord& record, const TensorLayout& layout,
                              const ChannelStats* stats) {
    if (layout.channel_order.empty()) throw ConfigError("tensor layout has no channels");
    if (layout.target_length == 0) throw ConfigError("tensor target length must be positive");
    FeatureTensor tensor;
    tensor.song_key = record.song_key;
    tensor.channels = layout.channel_order.size();
    tensor.length = layout.target_length;
    tensor.values.assign(tensor.channels * tensor.length, 0.0);
    for (std::size_t c = 0; c < layout.channel_order.size(); ++c) {
        const auto& name = layout.channel_order[c];
        auto it = record.features.find(name);
        if (it == record.features.end()) {
            throw DataError("song '" + record.song_key + "' lacks feature '" + name + "'");
        }
        const auto& seq = it->second;
        if (seq.size() == 1) {
            for (std::size_t t = 0; t < tensor.length; ++t) tensor.at(c, t) = seq[0];
        } else {
            std::size_t n = std::min<std::size_t>(seq.size(), tensor.length);
            for (std::size_t t = 0; t < n; ++t) tensor.at(c, t) = seq[t];
        }
    }
    if (stats) standardize(tensor, *stats);
    return tensor;
}

ChannelStats compute_channel_stats(std::span<const FeatureTensor> tensors) {
    if (tensors.empty()) throw DataError("cannot compute channel stats over zero tensors");
    std::size_t channels = tensors.front().channels;
    std::size_t length = tensors.front().length;
    for (const auto& t : tensors) {
        if (t.channels != channels || t.length != length) {
            throw DataError("tensor shape mismatch while computing channel stats");
        }
    }
    ChannelStats stats;
    stats.mean.assign(channels, 0.0);
    stats.stddev.assign(channels, 0.0);
    const double n = static_cast<double>(tensors.size() * length);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (const auto& t : tensors) {
            for (std::size_t i = 0; i < length; ++i) sum += t.at(c, i);
        }
        double mean = sum / n;
        double sq = 0.0;
        for (const auto& t : tensors) {
            for (std::size_t i = 0; i < length; ++i) {
                double d = t.at(c, i) - mean;
                sq += d * d;
            }
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(sq / n);
    }
    return stats;
}

void standardize(FeatureTensor& tensor, const ChannelStats& stats) {
    if (stats.mean.size() != tensor.channels || stats.stddev.size() != tensor.channels) {
        throw DataError("channel stats do not match tensor channel count");
    }
    for (std::size_t c = 0; c < tensor.channels; ++c) {
        if (stats.stddev[c] <= 0.0) continue;  // constant channels stay unscaled
        for (std::size_t t = 0; t < tensor.length; ++t) {
            tensor.at(c, t) = (tensor.at(c, t) - stats.mean[c]) / stats.stddev[c];
        }
    }
}

void write_tensors_jsonl(std::span<const FeatureTensor> tensors, std::ostream& out) {
    for (const auto& t : tensors) {
        nlohmann::json j;
        j["song_key"] = t.song_key;
        j["channels"] = t.channels;
        j["length"] = t.length;
        j["values"] = t.values;
        out << j.dump() << '\n';
    }
}

std::vector<FeatureTensor> read_tensors_jsonl(std::istream& in) {
    std::vector<FeatureTensor> tensors;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("tensor line " + std::to_string(line_no) + ": " + e.what());
        }
        FeatureTensor t;
        t.song_key = j.at("song_key").get<std::string>();
        t.channels = j.at("channels").get<std::size_t>();
        t.length = j.at("length").get<std::size_t>();
        t.values = j.at("values").get<std::vector<double>>();
        if (t.values.size() != t.channels * t.length) {
            throw DataError("tensor line " + std::to_string(line_no) + ": shape mismatch");
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

}  // namespace tastesim::ingest
