// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowgen/errors.hpp"
#include "flowgen/flow.hpp"
#include "flowgen/text.hpp"

using namespace flowgen;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("tokenizer splits on whitespace and punctuation") {
    const Vocabulary vocab = Vocabulary::standard();
    CHECK(tokenize("Sunny day", vocab).size() == 2);
    const auto t = tokenize("peak at 12:40", vocab);
    REQUIRE(t.size() == 4);
    CHECK(t.tokens[0] == vocab.id_of("peak"));
    CHECK(t.tokens[1] == vocab.id_of("at"));
    CHECK(t.tokens[2] == vocab.id_of("12"));
    CHECK(t.tokens[3] == vocab.id_of("40"));

    // out-of-vocabulary words map to the reserved id
    CHECK(tokenize("zzzgibberish", vocab).tokens[0] == Vocabulary::kUnkId);

    std::string long_prompt;
    for (int i = 0; i < 200; ++i) long_prompt += "sunny ";
    CHECK(tokenize(long_prompt, vocab).size() == kMaxTokens);

    CHECK_THROWS_AS(tokenize("   \t ", vocab), std::invalid_argument);
}

TEST_CASE("reference encoder is deterministic and unit-norm per token") {
    const Vocabulary vocab = Vocabulary::standard();
    const auto a = encode_prompt("A sunny day with stable output", vocab, 64);
    const auto b = encode_prompt("A sunny day with stable output", vocab, 64);
    CHECK(a.matrix.v == b.matrix.v);

    // norm before the positional addition: rebuild at position 0 where the
    // positional vector is [0,1,0,1,...]
    const auto tok = tokenize("sunny", vocab);
    const auto e = encode_reference(tok, 64);
    double norm2 = 0.0;
    for (int c = 0; c < 64; ++c) {
        const double pos = (c % 2 == 0) ? 0.0 : 1.0;
        const double raw = e.matrix(0, c) - pos;
        norm2 += raw * raw;
    }
    CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-6));

    const auto x = encode_prompt("sunny day", vocab, 64);
    const auto y = encode_prompt("stormy day", vocab, 64);
    double row_diff = 0.0;
    for (int c = 0; c < 64; ++c) row_diff += std::abs(x.matrix(0, c) - y.matrix(0, c));
    CHECK(row_diff > 0.0);

    CHECK_THROWS_AS(encode_reference(tok, 4), std::invalid_argument);
}

TEST_CASE("mean pooling respects the mask") {
    TextEmbedding e;
    e.matrix.resize(1, 2);
    e.matrix(0, 0) = 3.0;
    e.matrix(0, 1) = 4.0;
    e.mask = {1};
    const auto single = mean_pool(e);
    CHECK(single == std::vector<double>{3.0, 4.0});

    e.matrix.resize(2, 2);
    e.matrix(0, 0) = 1.0;
    e.matrix(0, 1) = 1.0;
    e.matrix(1, 0) = 3.0;
    e.matrix(1, 1) = 3.0;
    e.mask = {1, 1};
    CHECK(mean_pool(e) == std::vector<double>{2.0, 2.0});

    e.mask = {1, 0};
    CHECK(mean_pool(e) == std::vector<double>{1.0, 1.0});

    e.mask = {0, 0};
    CHECK_THROWS_AS(mean_pool(e), std::invalid_argument);
}

TEST_CASE("embedding files round-trip bit-exactly") {
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<std::pair<std::string, TextEmbedding>> records;
    records.emplace_back("p0", encode_prompt("A sunny day", vocab, 64));
    records.emplace_back("p1", encode_prompt("high volatility at 12:40", vocab, 64));

    const auto path = temp_file("flowgen_emb_test.ndjson");
    export_embeddings(path.string(), records);
    const auto loaded = import_embeddings(path.string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.at("p0").matrix.v == records[0].second.matrix.v);
    CHECK(loaded.at("p1").matrix.v == records[1].second.matrix.v);
    CHECK(loaded.at("p0").source == EmbeddingSource::kImported);
    std::filesystem::remove(path);
}

TEST_CASE("embedding import validates records") {
    const auto path = temp_file("flowgen_emb_bad.ndjson");
    {
        std::ofstream out(path);
        out << R"({"id":"x","m":1,"d":3,"data":[1.0,null,3.0]})" << "\n";
    }
    CHECK_THROWS_AS(import_embeddings(path.string()), FormatError);
    {
        std::ofstream out(path);
        out << R"({"id":"x","m":2,"d":3,"data":[1.0,2.0,3.0]})" << "\n";
    }
    CHECK_THROWS_AS(import_embeddings(path.string()), FormatError);
    {
        std::ofstream out(path);  // empty file is a valid empty map
    }
    CHECK(import_embeddings(path.string()).empty());
    std::filesystem::remove(path);
}

TEST_CASE("generation depends only on the embedding, not its source") {
    NetConfig cfg;
    cfg.length = 16;
    cfg.base_channels = 4;
    cfg.channel_multipliers = {1, 2};
    cfg.groups = 2;
    cfg.d_llm = 64;
    cfg.d_k = 4;
    cfg.attention_levels = {1};
    VelocityNet net = VelocityNet::build(cfg, 3);

    const Vocabulary vocab = Vocabulary::standard();
    const auto ref = encode_prompt("A sunny day with stable output", vocab, 64);

    const auto path = temp_file("flowgen_emb_src.ndjson");
    export_embeddings(path.string(), {{"p", ref}});
    const auto imported = import_embeddings(path.string()).at("p");
    std::filesystem::remove(path);

    const auto a = sample(net, ref.matrix, ref.row_mask(), 10, 99);
    const auto b = sample(net, imported.matrix, imported.row_mask(), 10, 99);
    CHECK(a == b);
}
