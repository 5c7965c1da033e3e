#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bundleforge/errors.hpp"
#include "bundleforge/rng.hpp"

namespace bundleforge::corpus {

enum class PopClass { head, mid, tail };
enum class Scenario { overall, pop_to_lt, lt_to_pop, pop_to_pop, lt_to_lt, mixed };

const char* scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

// External string ids mapped to dense 0..n-1 in first-appearance order. A
// frozen map (loaded from idmap.tsv) rejects unknown ids instead of growing.
struct IdMap {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;
  bool frozen = false;

  int size() const { return static_cast<int>(names.size()); }
  int add(const std::string& name);
  int lookup(const std::string& name) const;  // -1 when absent
};

struct FeatureMatrix {
  int n = 0;
  int dim = 0;
  std::vector<float> data;  // row-major, dense-item-id order

  const float* row(int i) const { return data.data() + static_cast<std::size_t>(i) * dim; }
};

struct ItemCorpus {
  int n = 0;
  FeatureMatrix text;
  FeatureMatrix media;
  IdMap items;
};

struct BundleTable {
  std::vector<std::string> names;
  std::vector<std::vector<int>> items;  // item order follows the file

  int size() const { return static_cast<int>(items.size()); }
};

struct InteractionMatrix {
  int users = 0;
  int items = 0;
  std::vector<std::vector<int>> by_user;  // sorted, deduplicated item ids
  std::vector<int> item_counts;           // column sums
  std::int64_t nnz = 0;
};

struct PopularityProfile {
  double head_ratio = 0.3;
  double tail_ratio = 0.3;
  std::vector<int> count;
  std::vector<int> rank;  // dense rank, 0 = most popular; ties by ascending id
  std::vector<PopClass> cls;
  int head_count = 0;
  int tail_count = 0;

  int n() const { return static_cast<int>(count.size()); }
};

enum class Split { train, test, val };

struct SplitAssignment {
  std::vector<Split> of;  // indexed by bundle id

  std::vector<int> bundles_in(Split s) const;
};

struct BundlingCase {
  int bundle_id = -1;
  std::vector<int> query;   // sorted ascending
  std::vector<int> target;  // sorted ascending
  Scenario label = Scenario::mixed;
};

// ---------------------------------------------------------------------------
// Ingestion. Files are UTF-8 TSV with external string ids; loaders share
// IdMaps so interactions, bundles and features agree on dense ids.
// ---------------------------------------------------------------------------

InteractionMatrix load_interactions(const std::string& path, IdMap& users,
                                    IdMap& items);
BundleTable load_bundles(const std::string& path, IdMap& items);
FeatureMatrix load_features(const std::string& path);
void save_features(const std::string& path, const FeatureMatrix& f);
IdMap load_idmap(const std::string& path);
void save_idmap(const std::string& path, const IdMap& map);

// ---------------------------------------------------------------------------
// Popularity, splits, cases
// ---------------------------------------------------------------------------

PopularityProfile compute_popularity(const std::vector<int>& counts,
                                     double head_ratio, double tail_ratio);
PopularityProfile compute_popularity(const InteractionMatrix& d,
                                     double head_ratio, double tail_ratio);

SplitAssignment split_bundles(const BundleTable& table, std::uint64_t seed);

Scenario label_case(const std::vector<int>& query, const std::vector<int>& target,
                    const PopularityProfile& profile);

// Query fraction uniform in [0.3, 0.8], clamped so both sides are non-empty.
BundlingCase make_training_case(const std::vector<int>& bundle_items,
                                int bundle_id, Rng& rng,
                                const PopularityProfile* profile = nullptr);

// Deterministic holdout split seeded from the bundle id alone: hides a
// random non-empty proper subset. Used for validation and the OVERALL
// scenario, so the same bundle always hides the same items.
BundlingCase make_holdout_case(const std::vector<int>& bundle_items,
                               int bundle_id,
                               const PopularityProfile* profile = nullptr);

// Scenario-specific test cases; ineligible bundles yield an empty list.
std::vector<BundlingCase> make_scenario_cases(const std::vector<int>& bundle_items,
                                              int bundle_id,
                                              const PopularityProfile& profile,
                                              Scenario scenario);

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

// Items carry latent compatibility vectors z_i (theme centroid plus
// per-item spread); text/media features are noisy random projections of
// z_i, and bundles gather z-proximal items of one theme, so content carries
// bundling signal that is independent of popularity. Interaction counts
// follow a Zipf law over a seeded popularity order. A share of bundles
// pairs head items with tail items of the same theme ("promo" bundles),
// which keeps every popularity-ratio slice populated.
struct SynthConfig {
  int n_items = 500;
  int n_users = 2000;
  int n_bundles = 1500;
  int bundle_min = 3;
  int bundle_max = 7;
  double zipf_exponent = 1.2;
  int d_t = 48;
  int d_m = 32;
  std::uint64_t seed = 42;
  // documented defaults beyond the required fields
  int n_themes = 12;
  int latent_dim = 12;
  double z_spread = 1.0;        // per-item spread around the theme centroid
  double proximity_tau = 0.5;   // bundle member selectivity in z space
  double feature_noise = 0.45;  // observation noise on projected features
  double promo_decile_frac = 0.30;  // head/tail drawn from the top/bottom 10%
  double promo_wide_frac = 0.25;    // head/tail drawn from the top/bottom 30%
  int promo_head_max = 2;           // popular anchor slots per promo bundle
  int promo_tail_max = 4;           // long-tail slots per promo bundle
  double organic_pop_exponent = 0.7;  // popularity weighting of organic members
  double theme_boost = 3.0;         // interaction weight boost on preferred themes
  int user_min_items = 6;
  int user_max_items = 14;
};

struct SynthData {
  ItemCorpus corpus;
  BundleTable bundles;
  InteractionMatrix interactions;
};

SynthData synth_generate(const SynthConfig& cfg);

// Writes interactions.tsv, bundles.tsv, features_text.bndf,
// features_media.bndf and idmap.tsv into dir; byte-identical per seed.
void write_dataset(const SynthData& data, const std::string& dir);

struct Dataset {
  ItemCorpus corpus;
  BundleTable bundles;
  InteractionMatrix interactions;
  IdMap users;
};

Dataset load_dataset(const std::string& dir);

}  // namespace bundleforge::corpus
