// SPDX-License-Identifier: Apache-2.0
#include "flowgen/text.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flowgen/errors.hpp"
#include "flowgen/rng.hpp"

namespace flowgen {

namespace {

const std::vector<std::string>& template_lexicon() {
    static const std::vector<std::string> words = {
        "a",       "an",       "and",       "around",      "at",       "afternoon",
        "bell",    "clouds",   "cloudy",    "dawn",        "day",      "demand",
        "dip",     "double",   "evening",   "high",        "industrial", "load",
        "low",     "moderate", "morning",   "output",      "pattern",  "peak",
        "peaking", "plateau",  "profile",   "rainy",       "residential", "stable",
        "stormy",  "sudden",   "sunny",     "volatility",  "with",
    };
    return words;
}

}  // namespace

Vocabulary Vocabulary::standard() {
    std::vector<std::string> words = template_lexicon();
    char buf[8];
    for (int n = 0; n < 100; ++n) {
        std::snprintf(buf, sizeof(buf), "%d", n);
        words.emplace_back(buf);
        std::snprintf(buf, sizeof(buf), "%02d", n);
        words.emplace_back(buf);
    }
    return from_words(words);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    v.words_.push_back("<unk>");
    for (const auto& w : words) {
        if (v.index_.count(w)) continue;
        v.index_[w] = static_cast<int>(v.words_.size());
        v.words_.push_back(w);
    }
    return v;
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
    return words_.at(static_cast<std::size_t>(id));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
    for (std::size_t i = 1; i < words_.size(); ++i) out << words_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocabulary: cannot read " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) words.push_back(line);
    return from_words(words);
}

TokenSequence tokenize(const std::string& prompt, const Vocabulary& vocab) {
    TokenSequence seq;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && seq.size() < kMaxTokens) seq.tokens.push_back(vocab.id_of(word));
        word.clear();
    };
    for (unsigned char ch : prompt) {
        if (std::isalnum(ch)) {
            word.push_back(static_cast<char>(std::tolower(ch)));
        } else {
            flush();
        }
    }
    flush();
    if (seq.tokens.empty()) throw std::invalid_argument("tokenize: empty prompt");
    return seq;
}

TextEmbedding encode_reference(const TokenSequence& tokens, int d, std::uint64_t seed) {
    if (d < 8) throw std::invalid_argument("encode_reference: d must be >= 8");
    const int m = tokens.size();
    TextEmbedding e;
    e.source = EmbeddingSource::kReference;
    e.matrix.resize(m, d);
    for (int r = 0; r < m; ++r) {
        const std::uint64_t token = static_cast<std::uint64_t>(tokens.tokens[static_cast<std::size_t>(r)]);
        Rng rng(splitmix64(seed ^ (0xa24baed4963ee407ULL * (token + 1))));
        double norm2 = 0.0;
        for (int c = 0; c < d; ++c) {
            const double g = rng.normal();
            e.matrix(r, c) = g;
            norm2 += g * g;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (int c = 0; c < d; ++c) e.matrix(r, c) *= inv;
        // sinusoidal position features on top of the unit token direction
        for (int c = 0; c < d; ++c) {
            const double omega = std::pow(10000.0, static_cast<double>(2 * (c / 2)) / d);
            const double a = static_cast<double>(r) / omega;
            e.matrix(r, c) += (c % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    }
    e.mask.assign(kMaxTokens, 0);
    for (int r = 0; r < m && r < kMaxTokens; ++r) e.mask[static_cast<std::size_t>(r)] = 1;
    return e;
}

TextEmbedding encode_prompt(const std::string& prompt, const Vocabulary& vocab, int d,
                            std::uint64_t seed) {
    return encode_reference(tokenize(prompt, vocab), d, seed);
}

std::map<std::string, TextEmbedding> import_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("embeddings: cannot read " + path);
    std::map<std::string, TextEmbedding> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw FormatError("embeddings: invalid record at line " + std::to_string(lineno));
        const std::string id = j.value("id", std::string{});
        if (id.empty() || !j.contains("m") || !j.contains("d") || !j.contains("data"))
            throw FormatError("embeddings: missing field at line " + std::to_string(lineno));
        const int m = j["m"].get<int>();
        const int d = j["d"].get<int>();
        const auto& data = j["data"];
        if (m < 1 || d < 1 || !data.is_array() ||
            data.size() != static_cast<std::size_t>(m) * static_cast<std::size_t>(d))
            throw FormatError("embeddings: bad shape in record '" + id + "'");
        TextEmbedding e;
        e.source = EmbeddingSource::kImported;
        e.matrix.resize(m, d);
        for (std::size_t i = 0; i < e.matrix.size(); ++i) {
            if (!data[i].is_number())
                throw FormatError("embeddings: non-finite value in record '" + id + "'");
            const double x = data[i].get<double>();
            if (!std::isfinite(x))
                throw FormatError("embeddings: non-finite value in record '" + id + "'");
            e.matrix.v[i] = x;
        }
        e.mask.assign(kMaxTokens, 0);
        for (int r = 0; r < m && r < kMaxTokens; ++r) e.mask[static_cast<std::size_t>(r)] = 1;
        out[id] = std::move(e);
    }
    return out;
}

void export_embeddings(const std::string& path,
                       const std::vector<std::pair<std::string, TextEmbedding>>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("embeddings: cannot write " + path);
    for (const auto& [id, e] : records) {
        nlohmann::json j;
        j["id"] = id;
        j["m"] = e.matrix.rows;
        j["d"] = e.matrix.cols;
        j["data"] = e.matrix.v;
        out << j.dump() << '\n';
    }
}

std::vector<double> mean_pool(const TextEmbedding& e) {
    const int m = e.matrix.rows;
    const int d = e.matrix.cols;
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
    int live = 0;
    for (int r = 0; r < m; ++r) {
        if (r < static_cast<int>(e.mask.size()) && e.mask[static_cast<std::size_t>(r)] == 0) continue;
        ++live;
        for (int c = 0; c < d; ++c) acc[static_cast<std::size_t>(c)] += e.matrix(r, c);
    }
    if (live == 0) throw std::invalid_argument("mean_pool: all rows masked");
    for (auto& x : acc) x /= live;
    return acc;
}

}  // namespace flowgen
