// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace flowgen {

enum class ProbeTask { kRegression, kClassification };

struct ProbeResult {
    std::string attribute;
    ProbeTask task = ProbeTask::kRegression;
    double metric = 0.0;  // R^2 or held-out accuracy
};

// Ordinary least squares (with intercept) from pooled embeddings to a
// continuous label; reports R^2 on the fixed held-out fifth (every fifth
// row). Throws std::invalid_argument for fewer than 2 samples or constant
// labels.
ProbeResult linear_probe_regression(const std::vector<std::vector<double>>& embeddings,
                                    const std::vector<double>& labels,
                                    const std::string& attribute);

// One-vs-rest logistic regression, held-out accuracy on the same fixed
// split. Throws std::invalid_argument for fewer than 2 classes.
ProbeResult linear_probe_classification(const std::vector<std::vector<double>>& embeddings,
                                        const std::vector<int>& labels,
                                        const std::string& attribute);

std::string probe_csv_header();
std::string probe_csv_row(const ProbeResult& r);

}  // namespace flowgen
