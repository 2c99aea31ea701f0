// SPDX-License-Identifier: Apache-2.0
// End-to-end runs of the command-line binary over its file interfaces.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowgen/data.hpp"
#include "flowgen/metrics.hpp"

using namespace flowgen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCli = FLOWGEN_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

bool same_file(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

std::string tiny_net_flags() {
    return " --net-base 4 --net-multipliers 1 2 --net-groups 2 --d-llm 16 --d-k 4 "
           "--attention-levels 1";
}

}  // namespace

TEST_CASE("synth-data is reproducible and respects the seed") {
    TempDir a("fg_cli_synth_a"), b("fg_cli_synth_b"), c("fg_cli_synth_c");
    REQUIRE(run("synth-data --kind pv --n 20 --length 64 --seed 5 --out " + a.str()) == 0);
    REQUIRE(run("synth-data --kind pv --n 20 --length 64 --seed 5 --out " + b.str()) == 0);
    REQUIRE(run("synth-data --kind pv --n 20 --length 64 --seed 6 --out " + c.str()) == 0);

    CHECK(same_file(a.str("dataset.ndjson"), b.str("dataset.ndjson")));
    CHECK(same_file(a.str("labels.csv"), b.str("labels.csv")));
    CHECK(!same_file(a.str("dataset.ndjson"), c.str("dataset.ndjson")));

    const auto ds = read_dataset(a.str("dataset.ndjson"));
    CHECK(ds.size() == 20);
    for (const auto& s : ds)
        for (double v : s.series) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    CHECK(fs::exists(a.str("resolved_config.json")));
}

TEST_CASE("a run can be reproduced from its config snapshot") {
    TempDir a("fg_cli_snap_a"), b("fg_cli_snap_b");
    REQUIRE(run("synth-data --kind load --n 10 --length 32 --seed 9 --out " + a.str()) == 0);
    // rerun purely from the snapshot; --out still points at the new directory
    REQUIRE(run("synth-data --config " + a.str("resolved_config.json") + " --out " + b.str()) == 0);
    CHECK(same_file(a.str("dataset.ndjson"), b.str("dataset.ndjson")));
}

TEST_CASE("full pipeline: synth, annotate, train, sample, eval, judge, probe") {
    TempDir dir("fg_cli_pipeline");
    const std::string data = dir.str("data");
    const std::string ann = dir.str("ann");
    const std::string trained = dir.str("trained");
    const std::string sampled = dir.str("sampled");
    const std::string evald = dir.str("evald");
    const std::string judged = dir.str("judged");
    const std::string probed = dir.str("probed");

    REQUIRE(run("synth-data --kind pv --n 12 --length 16 --seed 3 --out " + data) == 0);
    REQUIRE(run("annotate --data " + data + "/dataset.ndjson --d-llm 16 --out " + ann) == 0);

    REQUIRE(run("train --data " + ann + "/annotated.ndjson --epochs 8 --batch-size 4 "
                "--lr 1e-3 --optimizer adamw --seed 1" + tiny_net_flags() +
                " --out " + trained) == 0);
    CHECK(fs::exists(trained + "/checkpoint.bin"));
    {
        std::ifstream loss(trained + "/loss.csv");
        std::string header;
        std::getline(loss, header);
        CHECK(header == "step,l_time,l_freq,alpha,g_time_norm,g_freq_norm");
        int rows = 0;
        std::string line;
        while (std::getline(loss, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 8 * 3);  // 12 scenarios / batch 4 = 3 steps per epoch
    }

    REQUIRE(run("sample --checkpoint " + trained + "/checkpoint.bin --data " + ann +
                "/annotated.ndjson --per-prompt 1 --steps 5 --seed 7 --out " + sampled) == 0);
    const auto gen = read_dataset(sampled + "/generated.ndjson");
    CHECK(gen.size() == 12);

    REQUIRE(run("eval --real " + ann + "/annotated.ndjson --gen " + sampled +
                "/generated.ndjson --out " + evald) == 0);
    {
        std::ifstream csv(evald + "/metrics.csv");
        std::string header, row;
        std::getline(csv, header);
        std::getline(csv, row);
        const MetricReport r = metric_from_csv_row(header, row);
        CHECK(std::isfinite(r.kl));
        CHECK(r.kl >= 0.0);
    }

    REQUIRE(run("judge --gen " + sampled + "/generated.ndjson --out " + judged) == 0);
    {
        std::ifstream sf(judged + "/summary.json");
        json j = json::parse(sf);
        CHECK(j.at("count").get<int>() == 12);
        CHECK(j.at("mjas").get<double>() >= 1.0);
        CHECK(j.at("mjas").get<double>() <= 5.0);
    }

    REQUIRE(run("probe --embeddings " + ann + "/embeddings.ndjson --labels " + data +
                "/labels.csv --out " + probed) == 0);
    {
        std::ifstream csv(probed + "/probe.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header == "attribute,task,metric");
        int rows = 0;
        std::string line;
        while (std::getline(csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows >= 2);  // at least peak regression and one classification
    }
}

TEST_CASE("eval of a dataset against itself is the zero row") {
    TempDir dir("fg_cli_eval_self");
    const std::string data = dir.str("data");
    const std::string ev = dir.str("ev");
    REQUIRE(run("synth-data --kind load --n 8 --length 16 --seed 2 --out " + data) == 0);
    REQUIRE(run("eval --real " + data + "/dataset.ndjson --gen " + data + "/dataset.ndjson --out " +
                ev) == 0);
    std::ifstream csv(ev + "/metrics.csv");
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    const MetricReport r = metric_from_csv_row(header, row);
    CHECK(std::abs(r.kl) < 1e-12);
    CHECK(std::abs(r.mmd2) < 1e-12);
    REQUIRE(r.fd.has_value());
    CHECK(std::abs(*r.fd) < 1e-6);
    CHECK(r.dtw_mean == 0.0);
    CHECK(std::abs(r.psdd) < 1e-12);
}

TEST_CASE("judging self-consistent synthetic data scores a perfect mjas") {
    TempDir dir("fg_cli_judge_self");
    const std::string data = dir.str("data");
    const std::string judged = dir.str("judged");
    REQUIRE(run("synth-data --kind pv --n 15 --length 64 --seed 4 --out " + data) == 0);
    REQUIRE(run("judge --gen " + data + "/dataset.ndjson --out " + judged) == 0);
    std::ifstream sf(judged + "/summary.json");
    json j = json::parse(sf);
    CHECK(j.at("mjas").get<double>() == 5.0);
}

TEST_CASE("resume continues the step counter") {
    TempDir dir("fg_cli_resume");
    const std::string data = dir.str("data");
    const std::string ann = dir.str("ann");
    const std::string first = dir.str("first");
    const std::string second = dir.str("second");
    REQUIRE(run("synth-data --kind pv --n 6 --length 16 --seed 8 --out " + data) == 0);
    REQUIRE(run("annotate --data " + data + "/dataset.ndjson --d-llm 16 --out " + ann) == 0);
    REQUIRE(run("train --data " + ann + "/annotated.ndjson --epochs 4 --batch-size 6 --lr 1e-3 "
                "--seed 1" + tiny_net_flags() + " --out " + first) == 0);
    REQUIRE(run("train --data " + ann + "/annotated.ndjson --epochs 4 --batch-size 6 --lr 1e-3 "
                "--seed 1 --resume " + first + "/checkpoint.bin" + tiny_net_flags() + " --out " +
                second) == 0);
    std::ifstream loss(second + "/loss.csv");
    std::string header, row;
    std::getline(loss, header);
    std::getline(loss, row);
    CHECK(row.substr(0, 2) == "4,");  // first resumed step index
}

TEST_CASE("validation failures exit with code 1") {
    TempDir dir("fg_cli_errors");
    CHECK(run("synth-data --kind neither --n 5 --length 16 --out " + dir.str("x")) == 1);
    CHECK(run("eval --real missing.ndjson --gen missing.ndjson --out " + dir.str("y")) == 1);
    CHECK(run("train --data does-not-exist.ndjson --out " + dir.str("z")) == 1);
}
