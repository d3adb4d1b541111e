#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ctsim/errors.hpp"

namespace ctsim {

// Scores aligned with binary labels, the input of every rank metric.
struct ScoredSet {
  std::vector<double> scores;  // probabilities in [0, 1]
  std::vector<int> labels;     // {0, 1}

  void validate() const {
    if (scores.empty() || scores.size() != labels.size())
      throw std::domain_error("ScoredSet: scores/labels must be nonempty and aligned");
    for (double s : scores)
      if (!(s >= 0.0 && s <= 1.0))
        throw std::domain_error("ScoredSet: scores must lie in [0, 1]");
    for (int l : labels)
      if (l != 0 && l != 1)
        throw std::domain_error("ScoredSet: labels must be 0 or 1");
  }
};

// Area under the ROC curve via the Mann-Whitney statistic with half-counted
// ties: the fraction of (positive, negative) pairs ranked correctly. Equal
// to the trapezoidal ROC area.
inline double auroc(const ScoredSet& s) {
  s.validate();
  const size_t n = s.scores.size();
  size_t n_pos = 0;
  for (int l : s.labels) n_pos += static_cast<size_t>(l);
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw undefined_metric_error("auroc: both classes must be present");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return s.scores[a] < s.scores[b];
  });
  // Average ranks over tie groups; U = sum of positive ranks - np(np+1)/2.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (s.labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Chance-corrected agreement between two binary prediction vectors.
inline double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() || a.size() != b.size())
    throw std::domain_error("cohens_kappa: inputs must be nonempty and equal length");
  double n11 = 0, n00 = 0, a1 = 0, b1 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1))
      throw std::domain_error("cohens_kappa: entries must be 0 or 1");
    if (a[i] == 1) ++a1;
    if (b[i] == 1) ++b1;
    if (a[i] == 1 && b[i] == 1) ++n11;
    if (a[i] == 0 && b[i] == 0) ++n00;
  }
  const double n = static_cast<double>(a.size());
  const double po = (n11 + n00) / n;
  const double pe = (a1 / n) * (b1 / n) + ((n - a1) / n) * ((n - b1) / n);
  if (pe == 1.0) {
    if (po == 1.0) return 1.0;
    throw undefined_metric_error("cohens_kappa: chance agreement is 1 with imperfect agreement");
  }
  return (po - pe) / (1.0 - pe);
}

// (sensitivity, specificity) of binary predictions against labels.
inline std::pair<double, double> sensitivity_specificity(
    const std::vector<int>& pred, const std::vector<int>& labels) {
  if (pred.empty() || pred.size() != labels.size())
    throw std::domain_error("sensitivity_specificity: inputs must be nonempty and equal length");
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] == 1)
      (pred[i] == 1 ? tp : fn) += 1;
    else
      (pred[i] == 0 ? tn : fp) += 1;
  }
  if (tp + fn == 0)
    throw undefined_metric_error("sensitivity undefined: no positive labels");
  if (tn + fp == 0)
    throw undefined_metric_error("specificity undefined: no negative labels");
  return {tp / (tp + fn), tn / (tn + fp)};
}

// Mean and sample standard deviation (n-1 denominator; 0 for n = 1).
inline std::pair<double, double> aggregate_seeds(const std::vector<double>& values) {
  if (values.empty()) throw std::domain_error("aggregate_seeds: empty input");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

// One line of the robustness table.
struct MetricRow {
  std::string dataset_tag;
  uint64_t seed = 0;
  double auroc = 0.0;
  double kappa_vs_original = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

inline constexpr const char* kMetricCsvHeader =
    "dataset_tag,seed,auroc,kappa_vs_original,sensitivity,specificity";

// Shortest round-trip decimal form, used everywhere a double lands in CSV.
inline std::string format_double_roundtrip(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string metric_row_csv(const MetricRow& r) {
  return r.dataset_tag + "," + std::to_string(r.seed) + "," +
         format_double_roundtrip(r.auroc) + "," +
         format_double_roundtrip(r.kappa_vs_original) + "," +
         format_double_roundtrip(r.sensitivity) + "," +
         format_double_roundtrip(r.specificity);
}

inline MetricRow metric_row_from_csv(const std::string& line) {
  std::vector<std::string> parts;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      parts.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 6) throw data_error("metric row: expected 6 fields, got " +
                                          std::to_string(parts.size()));
  MetricRow r;
  r.dataset_tag = parts[0];
  r.seed = std::stoull(parts[1]);
  auto parse = [](const std::string& s, double& out, const char* field) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw data_error(std::string("metric row: bad ") + field + ": " + s);
  };
  parse(parts[2], r.auroc, "auroc");
  parse(parts[3], r.kappa_vs_original, "kappa");
  parse(parts[4], r.sensitivity, "sensitivity");
  parse(parts[5], r.specificity, "specificity");
  return r;
}

}  // namespace ctsim
