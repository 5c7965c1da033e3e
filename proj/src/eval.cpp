#include "bundleforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bundleforge/errors.hpp"

namespace bundleforge::eval {

using ordered_json = nlohmann::ordered_json;

RankedList rank_case(const std::vector<float>& logits,
                     const corpus::BundlingCase& c) {
  const int n = static_cast<int>(logits.size());
  std::set<int> query(c.query.begin(), c.query.end());
  RankedList out;
  out.items.reserve(n - query.size());
  for (int i = 0; i < n; ++i)
    if (!query.count(i)) out.items.push_back(i);
  std::sort(out.items.begin(), out.items.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  return out;
}

double recall_at_k(const RankedList& ranked, const std::vector<int>& targets,
                   int k) {
  if (k <= 0) throw ContractError("recall_at_k: k must be positive");
  if (targets.empty()) throw ContractError("recall_at_k: empty target set");
  std::set<int> target_set(targets.begin(), targets.end());
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  int hits = 0;
  for (int p = 0; p < top; ++p)
    if (target_set.count(ranked.items[p])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(target_set.size());
}

double ndcg_at_k(const RankedList& ranked, const std::vector<int>& targets,
                 int k) {
  if (k <= 0) throw ContractError("ndcg_at_k: k must be positive");
  if (targets.empty()) throw ContractError("ndcg_at_k: empty target set");
  std::set<int> target_set(targets.begin(), targets.end());
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  double dcg = 0.0;
  for (int p = 0; p < top; ++p)
    if (target_set.count(ranked.items[p]))
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  const int ideal = std::min<int>(k, static_cast<int>(target_set.size()));
  double idcg = 0.0;
  for (int p = 0; p < ideal; ++p)
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

MetricsReport evaluate(const Scorer& scorer,
                       const std::vector<corpus::BundlingCase>& cases,
                       const std::vector<int>& ks, const std::string& scenario,
                       int threads) {
  MetricsReport report;
  report.scenario = scenario;
  report.count = static_cast<int>(cases.size());
  if (cases.empty()) return report;

  const std::size_t width = 2 * ks.size();
  std::vector<double> per_case(cases.size() * width, 0.0);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto logits = scorer(cases[c]);
      const auto ranked = rank_case(logits, cases[c]);
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        per_case[c * width + 2 * ki] = recall_at_k(ranked, cases[c].target, ks[ki]);
        per_case[c * width + 2 * ki + 1] = ndcg_at_k(ranked, cases[c].target, ks[ki]);
      }
    }
  };
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(cases.size())));
  if (n_threads == 1) {
    work(0, cases.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (cases.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(cases.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  // Deterministic reduction in case order.
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    double recall = 0.0, ndcg = 0.0;
    for (std::size_t c = 0; c < cases.size(); ++c) {
      recall += per_case[c * width + 2 * ki];
      ndcg += per_case[c * width + 2 * ki + 1];
    }
    report.metrics.emplace_back("recall@" + std::to_string(ks[ki]),
                                recall / cases.size());
    report.metrics.emplace_back("ndcg@" + std::to_string(ks[ki]),
                                ndcg / cases.size());
  }
  return report;
}

namespace {

ordered_json report_json(const MetricsReport& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["count"] = r.count;
  if (r.metrics.empty()) {
    j["metrics"] = nullptr;
  } else {
    ordered_json m;
    for (const auto& [name, value] : r.metrics) m[name] = value;
    j["metrics"] = m;
  }
  return j;
}

}  // namespace

std::string report_to_json(const std::vector<MetricsReport>& reports) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(2) + "\n";
}

std::vector<SweepPoint> popularity_sweep(
    const Scorer& backbone, const Scorer& diet_model,
    const corpus::BundleTable& bundles, const std::vector<int>& test_bundles,
    const corpus::InteractionMatrix& interactions,
    const std::vector<double>& ratios, const std::vector<int>& ks,
    int threads) {
  std::vector<SweepPoint> out;
  for (double ratio : ratios) {
    auto profile = corpus::compute_popularity(interactions, ratio, ratio);
    std::vector<corpus::BundlingCase> cases;
    for (int b : test_bundles) {
      auto cs = corpus::make_scenario_cases(bundles.items[b], b, profile,
                                            corpus::Scenario::pop_to_lt);
      cases.insert(cases.end(), cs.begin(), cs.end());
    }
    SweepPoint point;
    point.ratio = ratio;
    point.count = static_cast<int>(cases.size());
    point.backbone = evaluate(backbone, cases, ks, "pop2lt", threads);
    point.diet = evaluate(diet_model, cases, ks, "pop2lt", threads);
    if (point.count > 0 && !point.backbone.metrics.empty()) {
      const double base = point.backbone.metrics[0].second;
      const double ours = point.diet.metrics[0].second;
      if (base > 0.0) {
        point.has_improvement = true;
        point.improvement_pct = (ours - base) / base * 100.0;
      }
    }
    out.push_back(std::move(point));
  }
  return out;
}

std::string sweep_to_json(const std::vector<SweepPoint>& points) {
  ordered_json arr = ordered_json::array();
  for (const auto& p : points) {
    ordered_json j;
    j["ratio"] = p.ratio;
    j["count"] = p.count;
    j["backbone"] = report_json(p.backbone);
    j["diet"] = report_json(p.diet);
    if (p.has_improvement)
      j["improvement_pct"] = p.improvement_pct;
    else
      j["improvement_pct"] = nullptr;
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

ScoreHistogram score_distribution(const Scorer& scorer,
                                  const std::vector<corpus::BundlingCase>& cases,
                                  const corpus::PopularityProfile& profile,
                                  int bins) {
  ScoreHistogram h;
  h.bins = bins;
  h.lt_counts.assign(bins, 0);
  h.pop_counts.assign(bins, 0);
  struct Obs {
    double prob;
    corpus::PopClass cls;
  };
  std::vector<Obs> obs;
  for (const auto& c : cases) {
    const auto logits = scorer(c);
    // Softmax over the full item axis, computed stably in double.
    double mx = logits.empty() ? 0.0 : logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
    for (int t : c.target) {
      const corpus::PopClass cls = profile.cls[t];
      if (cls == corpus::PopClass::mid) continue;
      obs.push_back({std::exp(static_cast<double>(logits[t]) - mx) / sum, cls});
    }
  }
  for (const auto& o : obs) h.max_prob = std::max(h.max_prob, o.prob);
  const double top = h.max_prob > 0.0 ? h.max_prob : 1.0;
  for (const auto& o : obs) {
    int bin = static_cast<int>(o.prob / top * bins);
    bin = std::min(bin, bins - 1);
    if (o.cls == corpus::PopClass::tail)
      ++h.lt_counts[bin];
    else
      ++h.pop_counts[bin];
  }
  return h;
}

std::string histogram_to_csv(const ScoreHistogram& h) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,lt_count,pop_count\n";
  const double top = h.max_prob > 0.0 ? h.max_prob : 1.0;
  char buf[96];
  for (int b = 0; b < h.bins; ++b) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%ld,%ld\n", top * b / h.bins,
                  top * (b + 1) / h.bins, h.lt_counts[b], h.pop_counts[b]);
    out << buf;
  }
  return out.str();
}

std::vector<CaseReportRow> case_report(const Scorer& scorer,
                                       const corpus::BundlingCase& c, int k,
                                       const corpus::PopularityProfile& profile,
                                       const corpus::IdMap& items) {
  const auto logits = scorer(c);
  const auto ranked = rank_case(logits, c);
  double mx = logits.empty() ? 0.0 : logits[0];
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
  std::set<int> target_set(c.target.begin(), c.target.end());
  std::vector<CaseReportRow> rows;
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  for (int p = 0; p < top; ++p) {
    CaseReportRow row;
    row.rank = p + 1;
    row.item = ranked.items[p];
    row.external_id = row.item < items.size() ? items.names[row.item]
                                              : std::to_string(row.item);
    row.logit = logits[row.item];
    row.softmax_prob = std::exp(static_cast<double>(row.logit) - mx) / sum;
    row.cls = profile.cls[row.item];
    row.is_target = target_set.count(row.item) > 0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string case_report_to_csv(const std::vector<CaseReportRow>& rows) {
  std::ostringstream out;
  out << "rank,item_id,dense_id,logit,softmax_prob,class,is_target\n";
  char buf[64];
  for (const auto& r : rows) {
    const char* cls = r.cls == corpus::PopClass::head  ? "HEAD"
                      : r.cls == corpus::PopClass::tail ? "TAIL"
                                                        : "MID";
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g", static_cast<double>(r.logit),
                  r.softmax_prob);
    out << r.rank << ',' << r.external_id << ',' << r.item << ',' << buf << ','
        << cls << ',' << (r.is_target ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace bundleforge::eval
