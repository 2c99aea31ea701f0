// SPDX-License-Identifier: Apache-2.0
#include "flowgen/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

namespace flowgen {

namespace {

struct Split {
    std::vector<std::size_t> train, test;
};

// Every fifth row is held out; with fewer than five rows everything is
// both train and test.
Split fixed_split(std::size_t n) {
    Split s;
    for (std::size_t i = 0; i < n; ++i)
        (i % 5 == 4 ? s.test : s.train).push_back(i);
    if (s.test.empty()) s.test = s.train;
    return s;
}

Eigen::MatrixXd design(const std::vector<std::vector<double>>& x,
                       const std::vector<std::size_t>& rows) {
    const int d = static_cast<int>(x.front().size());
    Eigen::MatrixXd m(static_cast<int>(rows.size()), d + 1);
    for (int i = 0; i < m.rows(); ++i) {
        m(i, 0) = 1.0;
        for (int j = 0; j < d; ++j) m(i, j + 1) = x[rows[static_cast<std::size_t>(i)]][static_cast<std::size_t>(j)];
    }
    return m;
}

}  // namespace

ProbeResult linear_probe_regression(const std::vector<std::vector<double>>& embeddings,
                                    const std::vector<double>& labels,
                                    const std::string& attribute) {
    const std::size_t n = embeddings.size();
    if (n < 2 || labels.size() != n)
        throw std::invalid_argument("linear_probe: need >= 2 labeled samples");
    const auto [mn, mx] = std::minmax_element(labels.begin(), labels.end());
    if (*mn == *mx) throw std::invalid_argument("linear_probe: constant labels");

    const Split split = fixed_split(n);
    Eigen::MatrixXd xtr = design(embeddings, split.train);
    Eigen::VectorXd ytr(static_cast<int>(split.train.size()));
    for (int i = 0; i < ytr.size(); ++i) ytr(i) = labels[split.train[static_cast<std::size_t>(i)]];

    Eigen::VectorXd w = xtr.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(ytr);

    Eigen::MatrixXd xte = design(embeddings, split.test);
    Eigen::VectorXd yte(static_cast<int>(split.test.size()));
    for (int i = 0; i < yte.size(); ++i) yte(i) = labels[split.test[static_cast<std::size_t>(i)]];
    Eigen::VectorXd pred = xte * w;

    const double mean = yte.mean();
    const double ss_tot = (yte.array() - mean).square().sum();
    const double ss_res = (yte - pred).array().square().sum();
    ProbeResult r;
    r.attribute = attribute;
    r.task = ProbeTask::kRegression;
    r.metric = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-18 ? 1.0 : 0.0);
    return r;
}

ProbeResult linear_probe_classification(const std::vector<std::vector<double>>& embeddings,
                                        const std::vector<int>& labels,
                                        const std::string& attribute) {
    const std::size_t n = embeddings.size();
    if (n < 2 || labels.size() != n)
        throw std::invalid_argument("linear_probe: need >= 2 labeled samples");
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw std::invalid_argument("linear_probe: degenerate label set");
    std::vector<int> class_list(classes.begin(), classes.end());

    const Split split = fixed_split(n);
    Eigen::MatrixXd xtr = design(embeddings, split.train);
    const int ntr = static_cast<int>(xtr.rows());
    const int dim = static_cast<int>(xtr.cols());

    // one-vs-rest logistic fits, plain gradient descent from zero
    Eigen::MatrixXd weights(dim, static_cast<int>(class_list.size()));
    weights.setZero();
    constexpr int kIters = 400;
    constexpr double kLr = 0.5;
    for (std::size_t c = 0; c < class_list.size(); ++c) {
        Eigen::VectorXd y(ntr);
        for (int i = 0; i < ntr; ++i)
            y(i) = labels[split.train[static_cast<std::size_t>(i)]] == class_list[c] ? 1.0 : 0.0;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        for (int it = 0; it < kIters; ++it) {
            Eigen::VectorXd p = (xtr * w).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
            Eigen::VectorXd grad = xtr.transpose() * (p - y) / ntr;
            w -= kLr * grad;
        }
        weights.col(static_cast<int>(c)) = w;
    }

    Eigen::MatrixXd xte = design(embeddings, split.test);
    Eigen::MatrixXd logits = xte * weights;
    int correct = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        if (class_list[static_cast<std::size_t>(best)] == labels[split.test[static_cast<std::size_t>(i)]])
            ++correct;
    }
    ProbeResult r;
    r.attribute = attribute;
    r.task = ProbeTask::kClassification;
    r.metric = static_cast<double>(correct) / static_cast<double>(logits.rows());
    return r;
}

std::string probe_csv_header() { return "attribute,task,metric"; }

std::string probe_csv_row(const ProbeResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", r.metric);
    return r.attribute + "," +
           (r.task == ProbeTask::kRegression ? "regression" : "classification") + "," + buf;
}

}  // namespace flowgen
