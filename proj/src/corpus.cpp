#include "tastesim/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tastesim/csv.hpp"

namespace tastesim::corpus {

int Vocabulary::id_of(const std::string& song_key) const {
    auto it = index.find(song_key);
    if (it == index.end()) throw DataError("song not in vocabulary: " + song_key);
    return it->second;
}

namespace {

Vocabulary vocabulary_from_documents(const std::vector<CorpusDocument>& documents) {
    Vocabulary vocab;
    for (const auto& doc : documents) {
        for (const auto& [song, _] : doc.counts) vocab.words.push_back(song);
    }
    std::sort(vocab.words.begin(), vocab.words.end());
    vocab.words.erase(std::unique(vocab.words.begin(), vocab.words.end()), vocab.words.end());
    vocab.index.reserve(vocab.words.size());
    for (std::size_t i = 0; i < vocab.words.size(); ++i) {
        vocab.index.emplace(vocab.words[i], static_cast<int>(i));
    }
    return vocab;
}

}  // namespace

Corpus build_weekly_documents(std::span<const ingest::ListeningEvent> events,
                              const WeekWindow& window) {
    std::map<std::pair<std::string, std::int64_t>, CorpusDocument> buckets;
    for (const auto& ev : events) {
        if (ev.song_key.empty()) continue;
        if (window.from && ev.timestamp < *window.from) continue;
        if (window.to && ev.timestamp >= *window.to) continue;
        std::int64_t week = week_index_of(ev.timestamp);
        auto key = std::make_pair(ev.user_id, week);
        auto it = buckets.find(key);
        if (it == buckets.end()) {
            CorpusDocument doc;
            doc.user_id = ev.user_id;
            doc.week_index = week;
            doc.week_start = week_start_of(week);
            it = buckets.emplace(std::move(key), std::move(doc)).first;
        }
        ++it->second.counts[ev.song_key];
    }
    Corpus corpus;
    corpus.documents.reserve(buckets.size());
    for (auto& [_, doc] : buckets) corpus.documents.push_back(std::move(doc));
    corpus.vocabulary = vocabulary_from_documents(corpus.documents);
    return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.documents = corpus.documents.size();
    stats.vocabulary = corpus.vocabulary.size();
    std::vector<std::string> users;
    for (const auto& doc : corpus.documents) {
        users.push_back(doc.user_id);
        stats.tokens += static_cast<std::size_t>(doc.token_total());
    }
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    stats.users = users.size();
    stats.mean_doc_length =
        stats.documents == 0 ? 0.0
                             : static_cast<double>(stats.tokens) / static_cast<double>(stats.documents);
    return stats;
}

void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& doc : corpus.documents) {
        nlohmann::json j;
        j["user"] = doc.user_id;
        j["week"] = doc.week_index;
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [song, n] : doc.counts) counts[song] = n;
        j["counts"] = std::move(counts);
        out << j.dump() << '\n';
    }
}

void write_corpus_jsonl_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    write_corpus_jsonl(corpus, out);
    if (!out) throw IoError("write failure: " + path);
}

Corpus read_corpus_jsonl(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        CorpusDocument doc;
        doc.user_id = j.at("user").get<std::string>();
        doc.week_index = j.at("week").get<std::int64_t>();
        doc.week_start = week_start_of(doc.week_index);
        for (auto& [song, n] : j.at("counts").items()) {
            int count = n.get<int>();
            if (count <= 0) {
                throw DataError("corpus line " + std::to_string(line_no) +
                                ": non-positive count for " + song);
            }
            doc.counts.emplace(song, count);
        }
        if (doc.counts.empty()) {
            throw DataError("corpus line " + std::to_string(line_no) + ": empty document");
        }
        corpus.documents.push_back(std::move(doc));
    }
    std::sort(corpus.documents.begin(), corpus.documents.end(),
              [](const CorpusDocument& a, const CorpusDocument& b) {
                  return std::tie(a.user_id, a.week_index) < std::tie(b.user_id, b.week_index);
              });
    corpus.vocabulary = vocabulary_from_documents(corpus.documents);
    return corpus;
}

Corpus read_corpus_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return read_corpus_jsonl(in);
}

void write_vocabulary_csv(const Vocabulary& vocabulary, std::ostream& out) {
    out << "song_key,index\n";
    for (std::size_t i = 0; i < vocabulary.words.size(); ++i) {
        out << csv_field(vocabulary.words[i]) << ',' << i << '\n';
    }
}

void write_vocabulary_csv_file(const Vocabulary& vocabulary, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    write_vocabulary_csv(vocabulary, out);
    if (!out) throw IoError("write failure: " + path);
}

}  // namespace tastesim::corpus
