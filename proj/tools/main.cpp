// SPDX-License-Identifier: Apache-2.0
// Command-line surface for the scenario generation pipeline. Every command
// resolves its parameters as defaults < config file < explicit flags and
// snapshots the merged result next to its outputs, so any run can be
// reproduced from the snapshot alone.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowgen/checkpoint.hpp"
#include "flowgen/data.hpp"
#include "flowgen/errors.hpp"
#include "flowgen/flow.hpp"
#include "flowgen/judge.hpp"
#include "flowgen/metrics.hpp"
#include "flowgen/probe.hpp"
#include "flowgen/text.hpp"
#include "flowgen/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowgen;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw std::invalid_argument("config: not a JSON object: " + path);
    return j;
}

// defaults <- file <- flags that were actually passed
json resolve(const json& defaults, const json& file, const json& flags) {
    json cfg = defaults;
    cfg.merge_patch(file);
    cfg.merge_patch(flags);
    return cfg;
}

void write_snapshot(const fs::path& out_dir, const std::string& command, const json& cfg) {
    json snap = cfg;
    snap["command"] = command;
    snap["tool_version"] = kVersion;
    std::ofstream out(out_dir / "resolved_config.json");
    out << snap.dump(2) << '\n';
}

fs::path prepare_out_dir(const std::string& out) {
    if (out.empty()) throw std::invalid_argument("--out is required");
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw std::invalid_argument("cannot create output directory " + out);
    return dir;
}

NetConfig net_config_from(const json& cfg, int length) {
    NetConfig nc;
    nc.length = length;
    nc.base_channels = cfg.at("net_base").get<int>();
    nc.channel_multipliers = cfg.at("net_multipliers").get<std::vector<int>>();
    nc.groups = cfg.at("net_groups").get<int>();
    nc.d_llm = cfg.at("d_llm").get<int>();
    nc.d_k = cfg.at("d_k").get<int>();
    const auto att = cfg.at("attention_levels").get<std::vector<int>>();
    nc.attention_levels = {att.begin(), att.end()};
    return nc;
}

std::vector<TrainExample> examples_for(const std::vector<Scenario>& scenarios, const json& cfg) {
    const std::string encoder = cfg.at("encoder").get<std::string>();
    if (encoder == "reference") {
        return build_examples(scenarios, Vocabulary::standard(), cfg.at("d_llm").get<int>());
    }
    if (encoder != "import")
        throw std::invalid_argument("encoder must be 'reference' or 'import'");
    const std::string path = cfg.at("embeddings").get<std::string>();
    if (path.empty()) throw std::invalid_argument("--embeddings is required with --encoder import");
    const auto table = import_embeddings(path);
    std::vector<TrainExample> out;
    for (const auto& s : scenarios) {
        auto it = table.find(s.id);
        if (it == table.end())
            throw std::invalid_argument("no imported embedding for scenario " + s.id);
        if (it->second.matrix.cols != cfg.at("d_llm").get<int>())
            throw std::invalid_argument("imported embedding width does not match --d-llm for " +
                                        s.id);
        TrainExample ex;
        ex.series = s.series;
        ex.text = it->second.matrix;
        ex.mask = it->second.row_mask();
        out.push_back(std::move(ex));
    }
    return out;
}

// ------------------------------------------------------------ subcommands

int cmd_synth_data(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const Kind kind = kind_from_string(cfg.at("kind").get<std::string>());
    const int n = cfg.at("n").get<int>();
    const int length = cfg.at("length").get<int>();
    const auto seed = cfg.at("seed").get<std::uint64_t>();

    if (length % 8 != 0)
        std::cerr << "warning: length " << length
                  << " is not divisible by 8; the default 4-level net will reject it\n";

    auto ds = synth_dataset(kind, n, length, seed);
    write_dataset((out / "dataset.ndjson").string(), ds);
    write_label_csv((out / "labels.csv").string(), ds);
    write_snapshot(out, "synth-data", cfg);
    std::cout << "wrote " << ds.size() << " scenarios to " << (out / "dataset.ndjson").string()
              << '\n';
    return 0;
}

int cmd_annotate(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    auto ds = read_dataset(cfg.at("data").get<std::string>());
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<std::pair<std::string, TextEmbedding>> embeddings;
    for (auto& s : ds) {
        s.prompt = annotate(s, stat_report(s));
        embeddings.emplace_back(s.id,
                                encode_prompt(*s.prompt, vocab, cfg.at("d_llm").get<int>()));
    }
    write_dataset((out / "annotated.ndjson").string(), ds);
    if (cfg.at("export_embeddings").get<bool>())
        export_embeddings((out / "embeddings.ndjson").string(), embeddings);
    write_snapshot(out, "annotate", cfg);
    std::cout << "annotated " << ds.size() << " scenarios\n";
    return 0;
}

int cmd_train(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const auto ds = read_dataset(cfg.at("data").get<std::string>());
    if (ds.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& s : ds)
        if (!s.prompt) throw std::invalid_argument("train: scenario " + s.id + " has no prompt");
    const int length = static_cast<int>(ds.front().series.size());

    TrainConfig tc;
    tc.epochs = cfg.at("epochs").get<int>();
    tc.batch_size = cfg.at("batch_size").get<int>();
    tc.learning_rate = cfg.at("learning_rate").get<double>();
    tc.seed = cfg.at("seed").get<std::uint64_t>();
    tc.mgda_enabled = cfg.at("mgda").get<bool>();
    tc.static_lambda = cfg.at("lambda").get<double>();
    tc.ode_steps = cfg.at("ode_steps").get<int>();
    const std::string opt = cfg.at("optimizer").get<std::string>();
    if (opt == "sgd")
        tc.optimizer = Optimizer::kSgd;
    else if (opt == "adamw")
        tc.optimizer = Optimizer::kAdamW;
    else
        throw std::invalid_argument("optimizer must be 'sgd' or 'adamw'");
    const std::string sched = cfg.at("schedule").get<std::string>();
    if (sched == "constant")
        tc.lr_schedule = LrSchedule::kConstant;
    else if (sched == "onecycle")
        tc.lr_schedule = LrSchedule::kOneCycle;
    else
        throw std::invalid_argument("schedule must be 'constant' or 'onecycle'");

    VelocityNet net = VelocityNet::build(net_config_from(cfg, length), tc.seed);
    std::size_t start_step = 0;
    std::string rng_state;
    const std::string resume = cfg.at("resume").get<std::string>();
    if (!resume.empty()) {
        auto ck = load_checkpoint(resume);
        if (ck.net.cfg.length != length)
            throw std::invalid_argument("resume: checkpoint length does not match the dataset");
        net = std::move(ck.net);
        start_step = ck.step;
        rng_state = ck.rng_state;
    }

    const auto examples = examples_for(ds, cfg);
    const auto result = train(examples, net, tc, start_step, rng_state);

    save_checkpoint((out / "checkpoint.bin").string(), net, tc.seed, result.next_step,
                    result.rng_state);
    std::ofstream loss(out / "loss.csv");
    loss << loss_csv_header() << '\n';
    for (const auto& r : result.reports) loss << loss_csv_row(r) << '\n';
    write_snapshot(out, "train", cfg);
    std::cout << "trained " << result.reports.size() << " steps; final l_time="
              << result.reports.back().l_time << " l_freq=" << result.reports.back().l_freq
              << '\n';
    return 0;
}

int cmd_sample(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const auto ck = load_checkpoint(cfg.at("checkpoint").get<std::string>());
    const int steps = cfg.at("steps").get<int>();
    const int per_prompt = cfg.at("per_prompt").get<int>();
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    const int threads = cfg.at("threads").get<int>();

    struct PromptEntry {
        std::string id;
        TextEmbedding embedding;
        std::optional<Scenario> source;
    };
    std::vector<PromptEntry> prompts;

    const std::string data_path = cfg.at("data").get<std::string>();
    const std::string emb_path = cfg.at("embeddings").get<std::string>();
    std::map<std::string, TextEmbedding> imported;
    if (!emb_path.empty()) imported = import_embeddings(emb_path);

    if (!data_path.empty()) {
        const Vocabulary vocab = Vocabulary::standard();
        for (auto& s : read_dataset(data_path)) {
            PromptEntry e;
            e.id = s.id;
            if (!imported.empty()) {
                auto it = imported.find(s.id);
                if (it == imported.end())
                    throw std::invalid_argument("no embedding for prompt id " + s.id);
                e.embedding = it->second;
            } else {
                if (!s.prompt)
                    throw std::invalid_argument("sample: scenario " + s.id + " has no prompt");
                e.embedding = encode_prompt(*s.prompt, vocab, ck.net.cfg.d_llm);
            }
            e.source = std::move(s);
            prompts.push_back(std::move(e));
        }
    } else if (!imported.empty()) {
        for (auto& [id, emb] : imported) prompts.push_back({id, emb, std::nullopt});
    } else {
        throw std::invalid_argument("sample: need --data or --embeddings");
    }

    std::vector<Scenario> generated;
    std::uint64_t prompt_index = 0;
    for (const auto& p : prompts) {
        if (p.embedding.matrix.cols != ck.net.cfg.d_llm)
            throw std::invalid_argument("embedding width does not match the checkpoint for " +
                                        p.id);
        const auto base = splitmix64(seed + 0x9e3779b97f4a7c15ULL * (prompt_index + 1));
        const auto runs = sample_many(ck.net, p.embedding.matrix, p.embedding.row_mask(),
                                      per_prompt, steps, base, threads);
        for (int k = 0; k < per_prompt; ++k) {
            Scenario g;
            g.id = p.id + "#" + std::to_string(k);
            g.kind = p.source ? p.source->kind : Kind::kPv;
            g.series = runs[static_cast<std::size_t>(k)];
            for (auto& v : g.series) v = std::clamp(v, 0.0, 1.0);
            if (p.source) {
                g.metadata = p.source->metadata;
                g.prompt = p.source->prompt;
            } else {
                g.metadata.peak = *std::max_element(g.series.begin(), g.series.end());
                g.metadata.peak_time_index = static_cast<int>(
                    std::max_element(g.series.begin(), g.series.end()) - g.series.begin());
            }
            generated.push_back(std::move(g));
        }
        ++prompt_index;
    }

    write_dataset((out / "generated.ndjson").string(), generated);
    write_snapshot(out, "sample", cfg);
    std::cout << "sampled " << generated.size() << " series (" << steps << " steps)\n";
    return 0;
}

int cmd_eval(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const auto real = read_dataset(cfg.at("real").get<std::string>());
    const auto gen = read_dataset(cfg.at("gen").get<std::string>());
    SeriesSet real_set, gen_set;
    for (const auto& s : real) real_set.push_back(s.series);
    for (const auto& s : gen) gen_set.push_back(s.series);

    MetricConfig mc;
    mc.kl_bins = cfg.at("kl_bins").get<int>();
    mc.kl_epsilon = cfg.at("kl_epsilon").get<double>();
    mc.psdd_epsilon = cfg.at("psdd_epsilon").get<double>();
    const std::string bw = cfg.at("mmd_bandwidth").get<std::string>();
    if (bw == "median")
        mc.mmd_bandwidth = MmdBandwidth::kMedianHeuristic;
    else if (bw == "fixed")
        mc.mmd_bandwidth = MmdBandwidth::kFixed;
    else
        throw std::invalid_argument("mmd_bandwidth must be 'median' or 'fixed'");
    mc.mmd_gamma = cfg.at("mmd_gamma").get<double>();
    const std::string pairing = cfg.at("dtw_pairing").get<std::string>();
    if (pairing == "index_paired")
        mc.dtw_pairing = DtwPairing::kIndexPaired;
    else if (pairing == "nearest")
        mc.dtw_pairing = DtwPairing::kNearest;
    else
        throw std::invalid_argument("dtw_pairing must be 'index_paired' or 'nearest'");

    const MetricReport report = evaluate(real_set, gen_set, mc);
    std::ofstream csv(out / "metrics.csv");
    csv << metric_csv_header() << '\n' << metric_csv_row(report) << '\n';

    json j;
    j["kl"] = report.kl;
    j["mmd2"] = report.mmd2;
    if (report.fd)
        j["fd"] = *report.fd;
    else
        j["fd"] = nullptr;
    j["dtw_mean"] = report.dtw_mean;
    j["psdd"] = report.psdd;
    j["marr_mean"] = report.marr_mean;
    j["config"] = {{"kl_bins", mc.kl_bins},
                   {"kl_epsilon", mc.kl_epsilon},
                   {"mmd_bandwidth", bw},
                   {"mmd_gamma", mc.mmd_gamma},
                   {"psdd_epsilon", mc.psdd_epsilon},
                   {"dtw_pairing", pairing}};
    std::ofstream rep(out / "report.json");
    rep << j.dump(2) << '\n';
    write_snapshot(out, "eval", cfg);
    std::cout << metric_csv_header() << '\n' << metric_csv_row(report) << '\n';
    return 0;
}

int cmd_probe(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const auto table = import_embeddings(cfg.at("embeddings").get<std::string>());

    // labels.csv as written by synth-data
    std::ifstream in(cfg.at("labels").get<std::string>());
    if (!in) throw std::invalid_argument("probe: cannot read labels file");
    std::string line;
    std::getline(in, line);
    if (line != "id,kind,weather,peak,peak_time_index,volatility,shape,user_type,event_dip_at")
        throw FormatError("probe: unexpected labels header");

    std::vector<std::vector<double>> pooled;
    std::vector<std::string> weather, volatility, shape, user_type;
    std::vector<double> peak;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string item;
        std::stringstream ss(line);
        while (std::getline(ss, item, ',')) f.push_back(item);
        while (f.size() < 9) f.emplace_back();
        auto it = table.find(f[0]);
        if (it == table.end()) continue;  // unlabeled embeddings are skipped
        pooled.push_back(mean_pool(it->second));
        weather.push_back(f[2]);
        peak.push_back(std::stod(f[3]));
        volatility.push_back(f[5]);
        shape.push_back(f[6]);
        user_type.push_back(f[7]);
    }
    if (pooled.empty()) throw std::invalid_argument("probe: no labeled embeddings matched");

    auto classify = [&](const std::vector<std::string>& labels, const std::string& name,
                        std::vector<ProbeResult>& results) {
        std::map<std::string, int> ids;
        std::vector<int> enc;
        for (const auto& l : labels) {
            if (l.empty()) return;  // attribute absent for this kind
            enc.push_back(ids.emplace(l, static_cast<int>(ids.size())).first->second);
        }
        if (ids.size() < 2) return;
        results.push_back(linear_probe_classification(pooled, enc, name));
    };

    std::vector<ProbeResult> results;
    results.push_back(linear_probe_regression(pooled, peak, "peak"));
    classify(weather, "weather", results);
    classify(volatility, "volatility", results);
    classify(shape, "shape", results);
    classify(user_type, "user_type", results);

    std::ofstream csv(out / "probe.csv");
    csv << probe_csv_header() << '\n';
    for (const auto& r : results) csv << probe_csv_row(r) << '\n';
    write_snapshot(out, "probe", cfg);
    for (const auto& r : results) std::cout << probe_csv_row(r) << '\n';
    return 0;
}

int cmd_judge(const json& cfg) {
    const auto out = prepare_out_dir(cfg.at("out").get<std::string>());
    const auto gen = read_dataset(cfg.at("gen").get<std::string>());
    if (gen.empty()) throw std::invalid_argument("judge: empty input");

    std::ofstream verdicts(out / "verdicts.ndjson");
    double sum = 0.0;
    for (const auto& s : gen) {
        const JudgeVerdict v = judge(s.series, s.kind, s.metadata);
        sum += v.score;
        json j;
        j["id"] = s.id;
        j["score"] = v.score;
        json comp;
        comp["peak_score"] = *v.peak_score;
        comp["volatility_score"] = *v.volatility_score;
        comp["shape_score"] = *v.shape_score;
        if (v.event_score) comp["event_score"] = *v.event_score;
        j["components"] = comp;
        j["justification"] = v.justification;
        verdicts << j.dump() << '\n';
    }
    const double score = sum / static_cast<double>(gen.size());
    json summary;
    summary["mjas"] = score;
    summary["count"] = gen.size();
    std::ofstream sf(out / "summary.json");
    sf << summary.dump(2) << '\n';
    write_snapshot(out, "judge", cfg);
    std::cout << "mjas " << score << " over " << gen.size() << " samples\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-conditioned daily power scenario generation via rectified flow matching"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // Every subcommand carries (config file, flags-json) and a handler.
    struct Cmd {
        std::string config_path;
        json flags = json::object();
        json defaults = json::object();
        int (*run)(const json&) = nullptr;
        CLI::App* sub = nullptr;
    };
    std::vector<std::unique_ptr<Cmd>> cmds;

    auto add_common = [&](CLI::App* sub, Cmd& c) {
        c.sub = sub;
        sub->add_option("--config", c.config_path, "JSON config file (flags override it)");
        sub->add_option_function<std::string>(
               "--out", [&c](const std::string& v) { c.flags["out"] = v; }, "output directory");
        sub->add_option_function<std::uint64_t>(
               "--seed", [&c](std::uint64_t v) { c.flags["seed"] = v; }, "global seed");
    };

    // synth-data
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"kind", "pv"}, {"n", 100}, {"length", 64}, {"seed", 0}, {"out", ""}};
        c->run = cmd_synth_data;
        auto* sub = app.add_subcommand("synth-data", "generate a labeled synthetic dataset");
        add_common(sub, *c);
        sub->add_option_function<std::string>(
            "--kind", [p = c.get()](const std::string& v) { p->flags["kind"] = v; },
            "pv or load");
        sub->add_option_function<int>(
            "--n", [p = c.get()](int v) { p->flags["n"] = v; }, "number of scenarios");
        sub->add_option_function<int>(
            "--length", [p = c.get()](int v) { p->flags["length"] = v; }, "steps per day");
        cmds.push_back(std::move(c));
    }
    // annotate
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"data", ""}, {"d_llm", kReferenceDim}, {"export_embeddings", true},
                       {"seed", 0},  {"out", ""}};
        c->run = cmd_annotate;
        auto* sub = app.add_subcommand("annotate", "attach template prompts to a dataset");
        add_common(sub, *c);
        sub->add_option_function<std::string>(
            "--data", [p = c.get()](const std::string& v) { p->flags["data"] = v; },
            "dataset file");
        sub->add_option_function<int>(
            "--d-llm", [p = c.get()](int v) { p->flags["d_llm"] = v; },
            "reference embedding width");
        sub->add_flag_function(
            "--no-export-embeddings",
            [p = c.get()](std::int64_t) { p->flags["export_embeddings"] = false; },
            "skip the embeddings file");
        cmds.push_back(std::move(c));
    }
    // train
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"data", ""},
                       {"epochs", 100},
                       {"batch_size", 16},
                       {"learning_rate", 1e-3},
                       {"seed", 0},
                       {"mgda", true},
                       {"lambda", 0.0},
                       {"ode_steps", 50},
                       {"optimizer", "adamw"},
                       {"schedule", "constant"},
                       {"encoder", "reference"},
                       {"embeddings", ""},
                       {"resume", ""},
                       {"net_base", 16},
                       {"net_multipliers", std::vector<int>{1, 2, 4, 8}},
                       {"net_groups", 8},
                       {"d_llm", kReferenceDim},
                       {"d_k", 32},
                       {"attention_levels", std::vector<int>{1, 2, 3}},
                       {"out", ""}};
        c->run = cmd_train;
        auto* sub = app.add_subcommand("train", "fit the velocity estimator");
        add_common(sub, *c);
        auto* p = c.get();
        sub->add_option_function<std::string>(
            "--data", [p](const std::string& v) { p->flags["data"] = v; }, "dataset file");
        sub->add_option_function<int>("--epochs", [p](int v) { p->flags["epochs"] = v; });
        sub->add_option_function<int>("--batch-size", [p](int v) { p->flags["batch_size"] = v; });
        sub->add_option_function<double>("--lr",
                                         [p](double v) { p->flags["learning_rate"] = v; });
        sub->add_flag_function(
            "--mgda", [p](std::int64_t) { p->flags["mgda"] = true; },
            "Pareto weighting of the two objectives (default)");
        sub->add_flag_function(
            "--no-mgda", [p](std::int64_t) { p->flags["mgda"] = false; },
            "static weighted sum instead of Pareto weighting");
        sub->add_option_function<double>("--lambda", [p](double v) { p->flags["lambda"] = v; },
                                         "static frequency weight (with --no-mgda)");
        sub->add_option_function<int>("--ode-steps", [p](int v) { p->flags["ode_steps"] = v; });
        sub->add_option_function<std::string>(
            "--optimizer", [p](const std::string& v) { p->flags["optimizer"] = v; },
            "sgd or adamw");
        sub->add_option_function<std::string>(
            "--schedule", [p](const std::string& v) { p->flags["schedule"] = v; },
            "constant or onecycle");
        sub->add_option_function<std::string>(
            "--encoder", [p](const std::string& v) { p->flags["encoder"] = v; },
            "reference or import");
        sub->add_option_function<std::string>(
            "--embeddings", [p](const std::string& v) { p->flags["embeddings"] = v; },
            "imported embeddings file");
        sub->add_option_function<std::string>(
            "--resume", [p](const std::string& v) { p->flags["resume"] = v; },
            "checkpoint to continue from");
        sub->add_option_function<int>("--net-base", [p](int v) { p->flags["net_base"] = v; });
        sub->add_option_function<std::vector<int>>(
            "--net-multipliers", [p](const std::vector<int>& v) { p->flags["net_multipliers"] = v; });
        sub->add_option_function<int>("--net-groups", [p](int v) { p->flags["net_groups"] = v; });
        sub->add_option_function<int>("--d-llm", [p](int v) { p->flags["d_llm"] = v; });
        sub->add_option_function<int>("--d-k", [p](int v) { p->flags["d_k"] = v; });
        sub->add_option_function<std::vector<int>>(
            "--attention-levels",
            [p](const std::vector<int>& v) { p->flags["attention_levels"] = v; });
        cmds.push_back(std::move(c));
    }
    // sample
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"checkpoint", ""}, {"data", ""},   {"embeddings", ""},
                       {"per_prompt", 1},  {"steps", 50},  {"threads", 1},
                       {"seed", 0},        {"out", ""}};
        c->run = cmd_sample;
        auto* sub = app.add_subcommand("sample", "generate scenarios from prompts");
        add_common(sub, *c);
        auto* p = c.get();
        sub->add_option_function<std::string>(
            "--checkpoint", [p](const std::string& v) { p->flags["checkpoint"] = v; });
        sub->add_option_function<std::string>(
            "--data", [p](const std::string& v) { p->flags["data"] = v; },
            "dataset whose prompts to condition on");
        sub->add_option_function<std::string>(
            "--embeddings", [p](const std::string& v) { p->flags["embeddings"] = v; },
            "precomputed embeddings keyed by prompt id");
        sub->add_option_function<int>("--per-prompt", [p](int v) { p->flags["per_prompt"] = v; });
        sub->add_option_function<int>("--steps", [p](int v) { p->flags["steps"] = v; });
        sub->add_option_function<int>("--threads", [p](int v) { p->flags["threads"] = v; });
        cmds.push_back(std::move(c));
    }
    // eval
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"real", ""},          {"gen", ""},
                       {"kl_bins", 50},       {"kl_epsilon", 1e-10},
                       {"mmd_bandwidth", "median"}, {"mmd_gamma", 1.0},
                       {"psdd_epsilon", 1e-12},     {"dtw_pairing", "index_paired"},
                       {"seed", 0},           {"out", ""}};
        c->run = cmd_eval;
        auto* sub = app.add_subcommand("eval", "distribution metrics between two datasets");
        add_common(sub, *c);
        auto* p = c.get();
        sub->add_option_function<std::string>(
            "--real", [p](const std::string& v) { p->flags["real"] = v; });
        sub->add_option_function<std::string>(
            "--gen", [p](const std::string& v) { p->flags["gen"] = v; });
        sub->add_option_function<int>("--kl-bins", [p](int v) { p->flags["kl_bins"] = v; });
        sub->add_option_function<std::string>(
            "--mmd-bandwidth", [p](const std::string& v) { p->flags["mmd_bandwidth"] = v; },
            "median or fixed");
        sub->add_option_function<double>("--mmd-gamma",
                                         [p](double v) { p->flags["mmd_gamma"] = v; });
        sub->add_option_function<std::string>(
            "--dtw-pairing", [p](const std::string& v) { p->flags["dtw_pairing"] = v; },
            "index_paired or nearest");
        cmds.push_back(std::move(c));
    }
    // probe
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"embeddings", ""}, {"labels", ""}, {"seed", 0}, {"out", ""}};
        c->run = cmd_probe;
        auto* sub = app.add_subcommand("probe", "linear decodability of labels from embeddings");
        add_common(sub, *c);
        auto* p = c.get();
        sub->add_option_function<std::string>(
            "--embeddings", [p](const std::string& v) { p->flags["embeddings"] = v; });
        sub->add_option_function<std::string>(
            "--labels", [p](const std::string& v) { p->flags["labels"] = v; });
        cmds.push_back(std::move(c));
    }
    // judge
    {
        auto c = std::make_unique<Cmd>();
        c->defaults = {{"gen", ""}, {"seed", 0}, {"out", ""}};
        c->run = cmd_judge;
        auto* sub = app.add_subcommand("judge", "score generated scenarios against their prompts");
        add_common(sub, *c);
        auto* p = c.get();
        sub->add_option_function<std::string>(
            "--gen", [p](const std::string& v) { p->flags["gen"] = v; });
        cmds.push_back(std::move(c));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        for (auto& c : cmds) {
            if (!c->sub->parsed()) continue;
            const json cfg = resolve(c->defaults, load_config_file(c->config_path), c->flags);
            return c->run(cfg);
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const TrainError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
