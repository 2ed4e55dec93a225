#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/ingest.hpp"

namespace tastesim::corpus {

// Bag of songs one user played in one ISO week (Monday start, UTC).
struct CorpusDocument {
    std::string user_id;
    std::int64_t week_index = 0;
    EpochSeconds week_start = 0;
    std::map<std::string, int> counts;  // song_key -> listens within the week

    int token_total() const {
        int n = 0;
        for (const auto& [_, c] : counts) n += c;
        return n;
    }
};

struct Vocabulary {
    std::vector<std::string> words;  // index -> song_key, sorted
    std::unordered_map<std::string, int> index;

    std::size_t size() const { return words.size(); }
    int id_of(const std::string& song_key) const;  // throws DataError when unknown
    bool contains(const std::string& song_key) const { return index.count(song_key) > 0; }
};

struct Corpus {
    std::vector<CorpusDocument> documents;  // sorted by (user_id, week_index)
    Vocabulary vocabulary;
};

struct WeekWindow {
    std::optional<EpochSeconds> from;  // inclusive
    std::optional<EpochSeconds> to;    // exclusive
};

// One document per (user, ISO week) holding at least one resolved event.
// Events without a song_key or outside the window are ignored.
Corpus build_weekly_documents(std::span<const ingest::ListeningEvent> events,
                              const WeekWindow& window = {});

struct CorpusStats {
    std::size_t documents = 0;
    std::size_t users = 0;
    std::size_t vocabulary = 0;
    std::size_t tokens = 0;
    double mean_doc_length = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus);

// One JSON object per line: {"user": str, "week": int, "counts": {song: n}}.
void write_corpus_jsonl(const Corpus& corpus, std::ostream& out);
void write_corpus_jsonl_file(const Corpus& corpus, const std::string& path);
Corpus read_corpus_jsonl(std::istream& in);
Corpus read_corpus_jsonl_file(const std::string& path);

void write_vocabulary_csv(const Vocabulary& vocabulary, std::ostream& out);
void write_vocabulary_csv_file(const Vocabulary& vocabulary, const std::string& path);

}  // namespace tastesim::corpus
