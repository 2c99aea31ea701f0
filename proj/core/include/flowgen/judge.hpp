// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowgen/data.hpp"

namespace flowgen {

// Rule-based consistency scoring of a series against the metadata a prompt
// promised. Component scores are 1..5; the verdict is their rounded mean.
struct JudgeVerdict {
    int score = 0;
    std::optional<int> peak_score;
    std::optional<int> volatility_score;
    std::optional<int> shape_score;
    std::optional<int> event_score;  // present only when the target has an event
    std::string justification;
};

// Canonical curve of a shape class, positioned from the target metadata.
// Used by the shape component (correlation band) and exposed for tests.
std::vector<double> shape_template(Kind kind, ShapeClass shape, int peak_index, int length);

JudgeVerdict judge(std::span<const double> x, Kind kind, const Metadata& target);

// Mean judge score over generated samples.
struct JudgedSample {
    std::vector<double> series;
    Kind kind = Kind::kPv;
    Metadata target;
};
double mjas(const std::vector<JudgedSample>& samples);

// Same contract as `judge`, open for an external scorer implementation.
class JudgeAgent {
  public:
    virtual ~JudgeAgent() = default;
    virtual JudgeVerdict score(std::span<const double> x, Kind kind,
                               const Metadata& target) const = 0;
};

class RuleJudge : public JudgeAgent {
  public:
    JudgeVerdict score(std::span<const double> x, Kind kind,
                       const Metadata& target) const override;
};

}  // namespace flowgen
