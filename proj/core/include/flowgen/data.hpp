// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowgen/flow.hpp"
#include "flowgen/text.hpp"

namespace flowgen {

enum class Kind { kPv, kLoad };
enum class Weather { kSunny, kSunnyWithClouds, kCloudy, kRainy, kStormy };
enum class Volatility { kStable, kModerate, kHigh };
enum class ShapeClass { kBell, kPlateau, kEveningPeak, kDoublePeak };
enum class UserType { kIndustrial, kResidential };

std::string to_string(Kind k);
std::string to_string(Weather w);
std::string to_string(Volatility v);
std::string to_string(ShapeClass s);
std::string to_string(UserType u);
Kind kind_from_string(const std::string& s);
Weather weather_from_string(const std::string& s);
Volatility volatility_from_string(const std::string& s);
ShapeClass shape_from_string(const std::string& s);
UserType user_type_from_string(const std::string& s);

// Mean-absolute-ramp-rate class bands on [0,1]-normalized series. Calibrated
// so that the smooth daily shapes (whose ramps alone contribute up to
// ~2*peak/(L-1)) stay inside the stable band at desk-scale L.
inline constexpr double kStableMarrMax = 0.035;
inline constexpr double kModerateMarrMax = 0.075;

Volatility marr_class(double marr_value);

struct EventInfo {
    int dip_at = 0;
};

struct Metadata {
    std::optional<Weather> weather;     // pv only
    double peak = 0.0;                  // max(series), recorded from the data
    int peak_time_index = 0;            // argmax(series)
    Volatility volatility = Volatility::kStable;
    ShapeClass shape = ShapeClass::kBell;
    std::optional<UserType> user_type;  // load only
    std::optional<EventInfo> event;
};

struct Scenario {
    std::string id;
    std::vector<double> series;  // values in [0,1]
    Kind kind = Kind::kPv;
    Metadata metadata;
    std::optional<std::string> prompt;
};

struct SegmentStats {
    double mean = 0.0;
    double max = 0.0;
};

// Global statistics plus the four equal quarters of the day
// (dawn / morning / afternoon / evening).
struct StatReport {
    double max = 0.0;
    double min = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;
    double marr = 0.0;
    SegmentStats segments[4];
};

// Deterministic parametric generator standing in for field measurements.
// PV days are windowed bells with weather-dependent cloud dips; load days
// are industrial plateaus or residential evening peaks. Noise amplitude is
// tied to the volatility class and every emitted scenario is re-scored
// against the judge rubric so that metadata and series agree by
// construction.
std::vector<Scenario> synth_dataset(Kind kind, int n, int length, std::uint64_t seed);

// Throws std::invalid_argument unless the length divides into quarters.
StatReport stat_report(const Scenario& s);

std::string clock_string(int index, int length);

// Deterministic template rendering over metadata + report. A pluggable
// LLM-backed annotator can replace this behind the same interface.
class Annotator {
  public:
    virtual ~Annotator() = default;
    virtual std::string describe(const Scenario& s, const StatReport& report) const = 0;
};

class TemplateAnnotator : public Annotator {
  public:
    std::string describe(const Scenario& s, const StatReport& report) const override;
};

std::string annotate(const Scenario& s, const StatReport& report);

// Newline-delimited JSON records {id, kind, series, metadata, prompt}.
void write_dataset(const std::string& path, const std::vector<Scenario>& scenarios);
std::vector<Scenario> read_dataset(const std::string& path);

// One row per scenario with the ground-truth labels, for probing.
void write_label_csv(const std::string& path, const std::vector<Scenario>& scenarios);

// Pairs each scenario with the reference encoding of its prompt.
std::vector<TrainExample> build_examples(const std::vector<Scenario>& scenarios,
                                         const Vocabulary& vocab, int d_llm,
                                         std::uint64_t encoder_seed = kEncoderSeed);

}  // namespace flowgen
