// SPDX-License-Identifier: Apache-2.0
#include "flowgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flowgen/errors.hpp"
#include "flowgen/judge.hpp"
#include "flowgen/metrics.hpp"
#include "flowgen/rng.hpp"
#include "shape_curves.hpp"

namespace flowgen {

std::string to_string(Kind k) { return k == Kind::kPv ? "pv" : "load"; }

std::string to_string(Weather w) {
    switch (w) {
        case Weather::kSunny: return "sunny";
        case Weather::kSunnyWithClouds: return "sunny_with_clouds";
        case Weather::kCloudy: return "cloudy";
        case Weather::kRainy: return "rainy";
        case Weather::kStormy: return "stormy";
    }
    return {};
}

std::string to_string(Volatility v) {
    switch (v) {
        case Volatility::kStable: return "stable";
        case Volatility::kModerate: return "moderate";
        case Volatility::kHigh: return "high";
    }
    return {};
}

std::string to_string(ShapeClass s) {
    switch (s) {
        case ShapeClass::kBell: return "bell";
        case ShapeClass::kPlateau: return "plateau";
        case ShapeClass::kEveningPeak: return "evening_peak";
        case ShapeClass::kDoublePeak: return "double_peak";
    }
    return {};
}

std::string to_string(UserType u) {
    return u == UserType::kIndustrial ? "industrial" : "residential";
}

namespace {

template <typename T>
T enum_from(const std::string& s, const std::vector<std::pair<std::string, T>>& table,
            const char* what) {
    for (const auto& [k, v] : table)
        if (k == s) return v;
    throw FormatError(std::string(what) + ": unknown value '" + s + "'");
}

}  // namespace

Kind kind_from_string(const std::string& s) {
    return enum_from<Kind>(s, {{"pv", Kind::kPv}, {"load", Kind::kLoad}}, "kind");
}

Weather weather_from_string(const std::string& s) {
    return enum_from<Weather>(s,
                              {{"sunny", Weather::kSunny},
                               {"sunny_with_clouds", Weather::kSunnyWithClouds},
                               {"cloudy", Weather::kCloudy},
                               {"rainy", Weather::kRainy},
                               {"stormy", Weather::kStormy}},
                              "weather");
}

Volatility volatility_from_string(const std::string& s) {
    return enum_from<Volatility>(s,
                                 {{"stable", Volatility::kStable},
                                  {"moderate", Volatility::kModerate},
                                  {"high", Volatility::kHigh}},
                                 "volatility");
}

ShapeClass shape_from_string(const std::string& s) {
    return enum_from<ShapeClass>(s,
                                 {{"bell", ShapeClass::kBell},
                                  {"plateau", ShapeClass::kPlateau},
                                  {"evening_peak", ShapeClass::kEveningPeak},
                                  {"double_peak", ShapeClass::kDoublePeak}},
                                 "shape");
}

UserType user_type_from_string(const std::string& s) {
    return enum_from<UserType>(
        s, {{"industrial", UserType::kIndustrial}, {"residential", UserType::kResidential}},
        "user_type");
}

Volatility marr_class(double marr_value) {
    if (marr_value < kStableMarrMax) return Volatility::kStable;
    if (marr_value < kModerateMarrMax) return Volatility::kModerate;
    return Volatility::kHigh;
}

std::string clock_string(int index, int length) {
    const int minutes = static_cast<int>(std::lround(static_cast<double>(index) * 1440.0 / length));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes / 60, minutes % 60);
    return buf;
}

// --------------------------------------------------------------- generator

namespace {

// Mid-band targets the noise calibration steers each class toward.
double target_marr(Volatility v) {
    switch (v) {
        case Volatility::kStable: return 0.020;
        case Volatility::kModerate: return 0.055;
        case Volatility::kHigh: return 0.105;
    }
    return 0.0;
}

bool in_band(Volatility v, double m) { return marr_class(m) == v; }

struct Dip {
    double tau = 0.5;
    double depth = 0.3;
    double sigma = 0.03;
};

// One draw of a scenario's deterministic part (shape + dips + event).
struct ShapePlan {
    Kind kind = Kind::kPv;
    Weather weather = Weather::kSunny;
    Volatility volatility = Volatility::kStable;
    ShapeClass shape = ShapeClass::kBell;
    UserType user_type = UserType::kIndustrial;
    double peak = 0.6;
    std::vector<Dip> dips;
    std::optional<int> event_at;    // index, set after the base is known
    double event_depth = 0.0;
    std::vector<double> base;       // composed noiseless curve
    bool windowed_noise = false;    // pv noise lives inside the daylight window
};

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

ShapePlan plan_pv(Rng& rng, int length) {
    ShapePlan p;
    p.kind = Kind::kPv;
    p.windowed_noise = true;
    const double w = rng.uniform();
    if (w < 0.25)
        p.weather = Weather::kSunny;
    else if (w < 0.45)
        p.weather = Weather::kSunnyWithClouds;
    else if (w < 0.65)
        p.weather = Weather::kCloudy;
    else if (w < 0.85)
        p.weather = Weather::kRainy;
    else
        p.weather = Weather::kStormy;

    switch (p.weather) {
        case Weather::kSunny: p.volatility = Volatility::kStable; break;
        case Weather::kSunnyWithClouds:
        case Weather::kCloudy: p.volatility = Volatility::kModerate; break;
        case Weather::kRainy:
        case Weather::kStormy: p.volatility = Volatility::kHigh; break;
    }

    // high-frequency classes need enough signal for the ramp bands
    p.peak = p.volatility == Volatility::kHigh ? uniform_in(rng, 0.55, 0.9)
                                               : uniform_in(rng, 0.3, 0.9);

    p.shape = (p.weather == Weather::kCloudy && rng.uniform() < 0.5) ? ShapeClass::kDoublePeak
                                                                     : ShapeClass::kBell;

    const double tau_p = uniform_in(rng, 0.46, 0.56);
    const double sigma_b = uniform_in(rng, 0.10, 0.14);

    int n_dips = 0;
    double dmin = 0.0, dmax = 0.0;
    switch (p.weather) {
        case Weather::kSunny: break;
        case Weather::kSunnyWithClouds: n_dips = 1 + static_cast<int>(rng.below(2)); dmin = 0.12; dmax = 0.25; break;
        case Weather::kCloudy: n_dips = 1 + static_cast<int>(rng.below(2)); dmin = 0.20; dmax = 0.35; break;
        case Weather::kRainy: n_dips = 3 + static_cast<int>(rng.below(3)); dmin = 0.30, dmax = 0.55; break;
        case Weather::kStormy: n_dips = 4 + static_cast<int>(rng.below(3)); dmin = 0.40, dmax = 0.70; break;
    }
    for (int i = 0; i < n_dips; ++i)
        p.dips.push_back({uniform_in(rng, 0.30, 0.72), uniform_in(rng, dmin, dmax),
                          uniform_in(rng, 0.015, 0.045)});

    p.base.resize(static_cast<std::size_t>(length));
    if (p.shape == ShapeClass::kBell) {
        for (int i = 0; i < length; ++i) {
            const double tau = (i + 0.5) / length;
            p.base[static_cast<std::size_t>(i)] = curves::pv_bell(tau, tau_p, sigma_b);
        }
    } else {
        const bool primary_late = rng.uniform() < 0.5;
        const double c1 = tau_p + (primary_late ? curves::kPvDoublePeakOffset : -curves::kPvDoublePeakOffset);
        const double c2 = tau_p - (primary_late ? curves::kPvDoublePeakOffset : -curves::kPvDoublePeakOffset);
        const double amp2 = uniform_in(rng, 0.65, 0.85);
        for (int i = 0; i < length; ++i) {
            const double tau = (i + 0.5) / length;
            p.base[static_cast<std::size_t>(i)] =
                curves::pv_bell(tau, c1, 0.09) + amp2 * curves::pv_bell(tau, c2, 0.09);
        }
    }
    for (const auto& d : p.dips)
        for (int i = 0; i < length; ++i) {
            const double tau = (i + 0.5) / length;
            p.base[static_cast<std::size_t>(i)] *= 1.0 - d.depth * curves::gauss(tau, d.tau, d.sigma);
        }

    // sudden events only on cloud-bearing days; a dip on a clear day would
    // push the stable class out of its ramp band
    if (p.weather != Weather::kSunny && rng.uniform() < 0.25) {
        const int argmax = static_cast<int>(
            std::max_element(p.base.begin(), p.base.end()) - p.base.begin());
        const double peak_base = p.base[static_cast<std::size_t>(argmax)];
        std::vector<int> candidates;
        for (int i = 5; i < length - 5; ++i) {
            if (std::abs(i - argmax) < 5) continue;
            if (p.base[static_cast<std::size_t>(i)] >= 0.45 * peak_base) candidates.push_back(i);
        }
        if (!candidates.empty()) {
            const int at = candidates[rng.below(candidates.size())];
            p.event_at = at;
            p.event_depth = uniform_in(rng, 0.45, 0.65);
            for (int i = std::max(0, at - 3); i <= std::min(length - 1, at + 3); ++i) {
                const double u = (i - at) / 3.5;
                const double c = std::cos(0.5 * M_PI * u);
                p.base[static_cast<std::size_t>(i)] *= 1.0 - p.event_depth * c * c;
            }
        }
    }
    return p;
}

ShapePlan plan_load(Rng& rng, int length) {
    ShapePlan p;
    p.kind = Kind::kLoad;
    p.windowed_noise = false;
    p.user_type = rng.uniform() < 0.5 ? UserType::kIndustrial : UserType::kResidential;
    p.volatility = static_cast<Volatility>(rng.below(3));
    p.peak = uniform_in(rng, 0.55, 0.9);

    p.base.resize(static_cast<std::size_t>(length));
    if (p.user_type == UserType::kIndustrial) {
        p.shape = ShapeClass::kPlateau;
        const double base_level = uniform_in(rng, 0.15, 0.25);
        for (int i = 0; i < length; ++i) {
            const double tau = (i + 0.5) / length;
            p.base[static_cast<std::size_t>(i)] = curves::load_plateau(tau, base_level);
        }
    } else {
        p.shape = rng.uniform() < 0.6 ? ShapeClass::kEveningPeak : ShapeClass::kDoublePeak;
        const double base_level = uniform_in(rng, 0.20, 0.30);
        const double tau_e = uniform_in(rng, 0.80, 0.88);
        const double sig_e = uniform_in(rng, 0.05, 0.07);
        const double morning_amp =
            p.shape == ShapeClass::kEveningPeak ? uniform_in(rng, 0.35, 0.50) : uniform_in(rng, 0.60, 0.78);
        for (int i = 0; i < length; ++i) {
            const double tau = (i + 0.5) / length;
            p.base[static_cast<std::size_t>(i)] =
                base_level + curves::gauss(tau, tau_e, sig_e) +
                morning_amp * curves::gauss(tau, curves::kMorningLobeTau, 0.055);
        }
    }
    return p;
}

// Noise sigma that steers the measured ramp rate toward the class target.
double calibrate_sigma(const std::vector<double>& base, const std::vector<double>& window,
                       double target) {
    const double shape_marr = marr(base);
    if (shape_marr >= target) return 0.002;
    // mean |delta| of the windowed unit-noise step, for the linear estimate
    double f = 0.0;
    for (std::size_t i = 1; i < window.size(); ++i)
        f += std::sqrt(window[i] * window[i] + window[i - 1] * window[i - 1]);
    f = f / static_cast<double>(window.size() - 1) * std::sqrt(2.0 / M_PI);
    return std::max(0.002, (target - shape_marr) / std::max(f, 1e-6));
}

Scenario realize(const ShapePlan& plan, int length, Rng& rng, const std::string& id) {
    std::vector<double> window(static_cast<std::size_t>(length), 1.0);
    if (plan.windowed_noise)
        for (int i = 0; i < length; ++i)
            window[static_cast<std::size_t>(i)] = curves::pv_window((i + 0.5) / length);

    double sigma = calibrate_sigma(plan.base, window, target_marr(plan.volatility));

    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<double> x = plan.base;
        for (int i = 0; i < length; ++i)
            x[static_cast<std::size_t>(i)] =
                std::max(0.0, x[static_cast<std::size_t>(i)] +
                                  sigma * window[static_cast<std::size_t>(i)] * rng.normal());
        const double mx = *std::max_element(x.begin(), x.end());
        if (mx <= 0.0) continue;
        const double scale = plan.peak / mx;
        for (auto& v : x) v = std::min(1.0, v * scale);

        Metadata md;
        md.peak = *std::max_element(x.begin(), x.end());
        md.peak_time_index =
            static_cast<int>(std::max_element(x.begin(), x.end()) - x.begin());
        md.volatility = plan.volatility;
        md.shape = plan.shape;
        if (plan.kind == Kind::kPv) md.weather = plan.weather;
        if (plan.kind == Kind::kLoad) md.user_type = plan.user_type;
        if (plan.event_at) md.event = EventInfo{*plan.event_at};

        const double m = marr(x);
        if (!in_band(plan.volatility, m)) {
            // nudge the noise toward the band and redraw
            const double shape_marr = marr(plan.base);
            const double want = target_marr(plan.volatility) - shape_marr;
            const double got = m - shape_marr;
            if (want > 0.0 && got > 1e-9) sigma = std::clamp(sigma * want / got, 0.002, 0.5);
            continue;
        }
        if (plan.kind == Kind::kLoad && plan.user_type == UserType::kResidential &&
            md.peak_time_index < 3 * length / 4)
            continue;
        const JudgeVerdict v = judge(x, plan.kind, md);
        const bool all5 = v.peak_score == 5 && v.volatility_score == 5 && v.shape_score == 5 &&
                          (!v.event_score || *v.event_score == 5);
        if (!all5) continue;

        Scenario s;
        s.id = id;
        s.kind = plan.kind;
        s.series = std::move(x);
        s.metadata = md;
        return s;
    }
    throw NumericError("synth_dataset: could not satisfy the rubric for scenario " + id);
}

}  // namespace

std::vector<Scenario> synth_dataset(Kind kind, int n, int length, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
    if (length < 16) throw std::invalid_argument("synth_dataset: length must be >= 16");
    const std::uint64_t base =
        splitmix64(seed ^ (kind == Kind::kPv ? 0x70760000ULL : 0x6c6f6164ULL));
    std::vector<Scenario> out;
    out.reserve(static_cast<std::size_t>(n));
    char id[32];
    for (int i = 0; i < n; ++i) {
        Rng rng(splitmix64(base + static_cast<std::uint64_t>(i)));
        std::snprintf(id, sizeof(id), "%s-%06d", to_string(kind).c_str(), i);
        const ShapePlan plan = kind == Kind::kPv ? plan_pv(rng, length) : plan_load(rng, length);
        out.push_back(realize(plan, length, rng, id));
    }
    return out;
}

StatReport stat_report(const Scenario& s) {
    const int n = static_cast<int>(s.series.size());
    if (n % 4 != 0) throw std::invalid_argument("stat_report: length must divide into quarters");
    StatReport r;
    r.max = *std::max_element(s.series.begin(), s.series.end());
    r.min = *std::min_element(s.series.begin(), s.series.end());
    double mean = 0.0;
    for (double v : s.series) mean += v;
    mean /= n;
    r.mean = mean;
    double var = 0.0;
    for (double v : s.series) var += (v - mean) * (v - mean);
    r.std_dev = std::sqrt(var / n);
    r.marr = marr(s.series);
    const int q = n / 4;
    for (int k = 0; k < 4; ++k) {
        double smax = s.series[static_cast<std::size_t>(k * q)];
        double smean = 0.0;
        for (int i = k * q; i < (k + 1) * q; ++i) {
            smean += s.series[static_cast<std::size_t>(i)];
            smax = std::max(smax, s.series[static_cast<std::size_t>(i)]);
        }
        r.segments[k] = {smean / q, smax};
    }
    return r;
}

// --------------------------------------------------------------- annotator

std::string TemplateAnnotator::describe(const Scenario& s, const StatReport& report) const {
    (void)report;  // templates read the recorded metadata; the report backs
                   // alternative annotators with the same interface
    const Metadata& md = s.metadata;
    char buf[256];
    std::string text;
    const std::string when = clock_string(md.peak_time_index, static_cast<int>(s.series.size()));
    if (s.kind == Kind::kPv) {
        std::string weather = md.weather ? to_string(*md.weather) : "sunny";
        std::replace(weather.begin(), weather.end(), '_', ' ');
        std::snprintf(buf, sizeof(buf), "A %s day with %s output, peaking at %.2f around %s.",
                      weather.c_str(), to_string(md.volatility).c_str(), md.peak, when.c_str());
        text = buf;
    } else {
        const UserType u = md.user_type.value_or(UserType::kResidential);
        std::string shape = to_string(md.shape);
        std::replace(shape.begin(), shape.end(), '_', ' ');
        std::snprintf(buf, sizeof(buf),
                      "%s %s load profile with %s demand and a %s pattern, peaking at %.2f around %s.",
                      u == UserType::kIndustrial ? "An" : "A", to_string(u).c_str(),
                      to_string(md.volatility).c_str(), shape.c_str(), md.peak, when.c_str());
        text = buf;
    }
    if (md.event) {
        std::snprintf(buf, sizeof(buf), " A sudden dip at %s.",
                      clock_string(md.event->dip_at, static_cast<int>(s.series.size())).c_str());
        text += buf;
    }
    return text;
}

std::string annotate(const Scenario& s, const StatReport& report) {
    return TemplateAnnotator{}.describe(s, report);
}

// --------------------------------------------------------------- file io

namespace {

nlohmann::json metadata_to_json(const Metadata& md) {
    nlohmann::json j;
    if (md.weather) j["weather"] = to_string(*md.weather);
    j["peak"] = md.peak;
    j["peak_time_index"] = md.peak_time_index;
    j["volatility"] = to_string(md.volatility);
    j["shape"] = to_string(md.shape);
    if (md.user_type) j["user_type"] = to_string(*md.user_type);
    if (md.event) j["event"] = {{"dip_at", md.event->dip_at}};
    return j;
}

Metadata metadata_from_json(const nlohmann::json& j) {
    Metadata md;
    if (j.contains("weather")) md.weather = weather_from_string(j["weather"].get<std::string>());
    md.peak = j.at("peak").get<double>();
    md.peak_time_index = j.at("peak_time_index").get<int>();
    md.volatility = volatility_from_string(j.at("volatility").get<std::string>());
    md.shape = shape_from_string(j.at("shape").get<std::string>());
    if (j.contains("user_type"))
        md.user_type = user_type_from_string(j["user_type"].get<std::string>());
    if (j.contains("event")) md.event = EventInfo{j["event"].at("dip_at").get<int>()};
    return md;
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<Scenario>& scenarios) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dataset: cannot write " + path);
    for (const auto& s : scenarios) {
        nlohmann::json j;
        j["id"] = s.id;
        j["kind"] = to_string(s.kind);
        j["series"] = s.series;
        j["metadata"] = metadata_to_json(s.metadata);
        if (s.prompt) j["prompt"] = *s.prompt;
        out << j.dump() << '\n';
    }
}

std::vector<Scenario> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("dataset: cannot read " + path);
    std::vector<Scenario> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw FormatError("dataset: invalid record at line " + std::to_string(lineno));
        Scenario s;
        try {
            s.id = j.at("id").get<std::string>();
            s.kind = kind_from_string(j.at("kind").get<std::string>());
            s.series = j.at("series").get<std::vector<double>>();
            s.metadata = metadata_from_json(j.at("metadata"));
            if (j.contains("prompt") && j["prompt"].is_string())
                s.prompt = j["prompt"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset: record at line " + std::to_string(lineno) + ": " + e.what());
        }
        for (double v : s.series)
            if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9)
                throw FormatError("dataset: series value outside [0,1] in record '" + s.id + "'");
        out.push_back(std::move(s));
    }
    return out;
}

void write_label_csv(const std::string& path, const std::vector<Scenario>& scenarios) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("labels: cannot write " + path);
    out << "id,kind,weather,peak,peak_time_index,volatility,shape,user_type,event_dip_at\n";
    char buf[64];
    for (const auto& s : scenarios) {
        const Metadata& md = s.metadata;
        out << s.id << ',' << to_string(s.kind) << ','
            << (md.weather ? to_string(*md.weather) : "") << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", md.peak);
        out << buf << ',' << md.peak_time_index << ',' << to_string(md.volatility) << ','
            << to_string(md.shape) << ',' << (md.user_type ? to_string(*md.user_type) : "") << ','
            << (md.event ? std::to_string(md.event->dip_at) : "") << '\n';
    }
}

std::vector<TrainExample> build_examples(const std::vector<Scenario>& scenarios,
                                         const Vocabulary& vocab, int d_llm,
                                         std::uint64_t encoder_seed) {
    std::vector<TrainExample> out;
    out.reserve(scenarios.size());
    for (const auto& s : scenarios) {
        if (!s.prompt) throw std::invalid_argument("build_examples: scenario without prompt: " + s.id);
        TextEmbedding e = encode_prompt(*s.prompt, vocab, d_llm, encoder_seed);
        TrainExample ex;
        ex.series = s.series;
        ex.text = std::move(e.matrix);
        ex.mask = {};  // all rows live
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace flowgen
