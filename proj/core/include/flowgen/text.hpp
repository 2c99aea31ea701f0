// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowgen/mat.hpp"

namespace flowgen {

inline constexpr int kMaxTokens = 64;            // M_max
inline constexpr int kReferenceDim = 64;         // default D_LLM of the reference encoder
inline constexpr int kImportedDim = 768;         // default D_LLM of imported embeddings
inline constexpr std::uint64_t kEncoderSeed = 0x5eed0f10ULL;

struct TokenSequence {
    std::vector<int> tokens;  // w_1..w_M
    int size() const { return static_cast<int>(tokens.size()); }
};

enum class EmbeddingSource { kReference, kImported };

// Conditioning rows for one prompt. `mask` has kMaxTokens entries; the
// first matrix.rows of them mark live token rows.
struct TextEmbedding {
    Mat matrix;  // [M x D_LLM]
    std::vector<std::uint8_t> mask;
    EmbeddingSource source = EmbeddingSource::kReference;

    // Mask trimmed to the rows actually present, as the attention expects.
    std::vector<std::uint8_t> row_mask() const {
        return {mask.begin(), mask.begin() + matrix.rows};
    }
};

// Fixed word list shared by the tokenizer and the annotator templates:
// template words plus numeric tokens, with id 0 reserved for
// out-of-vocabulary input.
class Vocabulary {
  public:
    static constexpr int kUnkId = 0;

    static Vocabulary standard();
    static Vocabulary from_words(const std::vector<std::string>& words);

    int id_of(const std::string& word) const;  // kUnkId when unknown
    const std::string& word_of(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
};

// Lowercases, splits on anything non-alphanumeric, maps through the
// vocabulary and truncates to kMaxTokens. Throws std::invalid_argument for
// prompts that are empty after trimming.
TokenSequence tokenize(const std::string& prompt, const Vocabulary& vocab);

// Deterministic stand-in encoder: every token id yields a fixed unit-norm
// Gaussian direction (hash-seeded), then sinusoidal position features are
// added. Same prompt, same matrix, on every platform.
TextEmbedding encode_reference(const TokenSequence& tokens, int d,
                               std::uint64_t seed = kEncoderSeed);

// Convenience: tokenize + encode.
TextEmbedding encode_prompt(const std::string& prompt, const Vocabulary& vocab, int d,
                            std::uint64_t seed = kEncoderSeed);

// Newline-delimited records {"id","m","d","data":[m*d floats]}. Import
// validates shapes and finiteness and throws FormatError naming the record.
std::map<std::string, TextEmbedding> import_embeddings(const std::string& path);
void export_embeddings(const std::string& path,
                       const std::vector<std::pair<std::string, TextEmbedding>>& records);

// Mean over unmasked rows. Throws std::invalid_argument when no row is live.
std::vector<double> mean_pool(const TextEmbedding& e);

}  // namespace flowgen
