#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bundleforge/corpus.hpp"

namespace bundleforge::eval {

using Scorer = std::function<std::vector<float>(const corpus::BundlingCase&)>;

// Items sorted by descending score with ties broken by ascending id; query
// items are excluded, so the list has n - |query| entries.
struct RankedList {
  std::vector<int> items;
};

RankedList rank_case(const std::vector<float>& logits,
                     const corpus::BundlingCase& c);

double recall_at_k(const RankedList& ranked, const std::vector<int>& targets,
                   int k);
// Binary-relevance NDCG with gain 1/log2(p+1), positions starting at 1.
double ndcg_at_k(const RankedList& ranked, const std::vector<int>& targets,
                 int k);

struct MetricsReport {
  std::string scenario;
  int count = 0;
  // Ordered metric名 -> value pairs ("recall@20", "ndcg@20", ...); empty
  // when count is zero (serialized as null).
  std::vector<std::pair<std::string, double>> metrics;
};

// Mean of per-case metrics; cases may be scored on worker threads, the
// reduction is keyed on case index so reports are identical either way.
MetricsReport evaluate(const Scorer& scorer,
                       const std::vector<corpus::BundlingCase>& cases,
                       const std::vector<int>& ks, const std::string& scenario,
                       int threads = 1);

std::string report_to_json(const std::vector<MetricsReport>& reports);

struct SweepPoint {
  double ratio = 0.0;
  int count = 0;
  MetricsReport backbone;
  MetricsReport diet;
  bool has_improvement = false;
  double improvement_pct = 0.0;  // relative Recall@20 gain of diet over backbone
};

// Rebuilds the popularity profile per ratio, regenerates Pop-to-LT cases
// from the test bundles, and evaluates both models on them.
std::vector<SweepPoint> popularity_sweep(
    const Scorer& backbone, const Scorer& diet_model,
    const corpus::BundleTable& bundles, const std::vector<int>& test_bundles,
    const corpus::InteractionMatrix& interactions,
    const std::vector<double>& ratios, const std::vector<int>& ks,
    int threads = 1);

std::string sweep_to_json(const std::vector<SweepPoint>& points);

struct ScoreHistogram {
  int bins = 50;
  double max_prob = 0.0;
  std::vector<long> lt_counts;   // targets classified TAIL
  std::vector<long> pop_counts;  // targets classified HEAD
};

// Per-target softmax probabilities bucketed by the target's popularity
// class; MID targets are skipped.
ScoreHistogram score_distribution(const Scorer& scorer,
                                  const std::vector<corpus::BundlingCase>& cases,
                                  const corpus::PopularityProfile& profile,
                                  int bins = 50);

std::string histogram_to_csv(const ScoreHistogram& h);

struct CaseReportRow {
  int rank = 0;
  int item = -1;
  std::string external_id;
  float logit = 0.0f;
  double softmax_prob = 0.0;
  corpus::PopClass cls = corpus::PopClass::mid;
  bool is_target = false;
};

std::vector<CaseReportRow> case_report(const Scorer& scorer,
                                       const corpus::BundlingCase& c, int k,
                                       const corpus::PopularityProfile& profile,
                                       const corpus::IdMap& items);

std::string case_report_to_csv(const std::vector<CaseReportRow>& rows);

}  // namespace bundleforge::eval
