#include "bundleforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace bundleforge::corpus {

namespace fs = std::filesystem;

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::overall: return "overall";
    case Scenario::pop_to_lt: return "pop2lt";
    case Scenario::lt_to_pop: return "lt2pop";
    case Scenario::pop_to_pop: return "pop2pop";
    case Scenario::lt_to_lt: return "lt2lt";
    case Scenario::mixed: return "mixed";
  }
  return "unknown";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "overall") return Scenario::overall;
  if (name == "pop2lt") return Scenario::pop_to_lt;
  if (name == "lt2pop") return Scenario::lt_to_pop;
  if (name == "pop2pop") return Scenario::pop_to_pop;
  if (name == "lt2lt") return Scenario::lt_to_lt;
  if (name == "mixed") return Scenario::mixed;
  throw ConfigError("unknown scenario '" + name +
                    "' (expected overall|pop2lt|lt2pop|pop2pop|lt2lt)");
}

int IdMap::add(const std::string& name) {
  auto it = index.find(name);
  if (it != index.end()) return it->second;
  if (frozen)
    throw ParseError("id '" + name + "' is not present in the frozen id map");
  const int id = static_cast<int>(names.size());
  names.push_back(name);
  index[name] = id;
  return id;
}

int IdMap::lookup(const std::string& name) const {
  auto it = index.find(name);
  return it == index.end() ? -1 : it->second;
}

std::vector<int> SplitAssignment::bundles_in(Split s) const {
  std::vector<int> out;
  for (std::size_t b = 0; b < of.size(); ++b)
    if (of[b] == s) out.push_back(static_cast<int>(b));
  return out;
}

// ---------------------------------------------------------------------------
// TSV parsing
// ---------------------------------------------------------------------------

namespace {

// One "a<TAB>b" record; rejects missing/extra fields with the line number.
bool parse_pair_line(const std::string& raw, int line_no, const char* what,
                     std::string& a, std::string& b) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.empty()) return false;
  const std::size_t tab = line.find('\t');
  if (tab == std::string::npos)
    throw ParseError(std::string(what) + ": line " + std::to_string(line_no) +
                     " has no tab separator");
  if (line.find('\t', tab + 1) != std::string::npos)
    throw ParseError(std::string(what) + ": line " + std::to_string(line_no) +
                     " has more than two fields");
  a = line.substr(0, tab);
  b = line.substr(tab + 1);
  if (a.empty() || b.empty())
    throw ParseError(std::string(what) + ": line " + std::to_string(line_no) +
                     " has an empty field");
  return true;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw PrerequisiteError("cannot open '" + path + "'");
  return in;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

InteractionMatrix load_interactions(const std::string& path, IdMap& users,
                                    IdMap& items) {
  auto in = open_or_throw(path);
  InteractionMatrix d;
  std::string raw, ua, ib;
  int line_no = 0;
  std::set<std::pair<int, int>> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!parse_pair_line(raw, line_no, "interactions", ua, ib)) continue;
    const int u = users.add(ua);
    const int i = items.add(ib);
    if (!seen.insert({u, i}).second) continue;  // duplicate pair
    if (u >= static_cast<int>(d.by_user.size())) d.by_user.resize(u + 1);
    d.by_user[u].push_back(i);
  }
  d.users = users.size();
  d.items = items.size();
  d.by_user.resize(d.users);
  d.item_counts.assign(d.items, 0);
  for (auto& row : d.by_user) {
    std::sort(row.begin(), row.end());
    for (int i : row) ++d.item_counts[i];
    d.nnz += static_cast<std::int64_t>(row.size());
  }
  if (d.nnz == 0)
    std::cerr << "warning: '" << path << "' contains no interactions\n";
  return d;
}

BundleTable load_bundles(const std::string& path, IdMap& items) {
  auto in = open_or_throw(path);
  BundleTable table;
  IdMap bundles;
  std::string raw, ba, ib;
  int line_no = 0;
  std::vector<std::set<int>> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!parse_pair_line(raw, line_no, "bundles", ba, ib)) continue;
    const int b = bundles.add(ba);
    const int i = items.add(ib);
    if (b >= static_cast<int>(table.items.size())) {
      table.items.resize(b + 1);
      table.names.resize(b + 1);
      seen.resize(b + 1);
      table.names[b] = ba;
    }
    if (seen[b].insert(i).second) table.items[b].push_back(i);
  }
  // Bundles below the minimum size cannot yield a case; drop them here.
  BundleTable kept;
  for (std::size_t b = 0; b < table.items.size(); ++b) {
    if (table.items[b].size() < 2) {
      std::cerr << "warning: dropping bundle '" << table.names[b]
                << "' with fewer than 2 items\n";
      continue;
    }
    kept.names.push_back(table.names[b]);
    kept.items.push_back(std::move(table.items[b]));
  }
  return kept;
}

FeatureMatrix load_features(const std::string& path) {
  auto in = open_or_throw(path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "BNDF", 4) == 0) {
    FeatureMatrix f;
    f.n = static_cast<int>(get_u32(in));
    f.dim = static_cast<int>(get_u32(in));
    if (!in || f.n < 0 || f.dim < 1)
      throw ParseError("features '" + path + "': bad header");
    f.data.resize(static_cast<std::size_t>(f.n) * f.dim);
    static_assert(sizeof(float) == 4);
    in.read(reinterpret_cast<char*>(f.data.data()),
            static_cast<std::streamsize>(f.data.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(f.data.size() * 4))
      throw ParseError("features '" + path + "': truncated payload");
    return f;
  }
  // CSV fallback: header "item_id,v0,...", rows keyed by dense item id.
  in.clear();
  in.seekg(0);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("features '" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("item_id,", 0) != 0)
    throw ParseError("features '" + path +
                     "': neither BNDF magic nor an item_id CSV header");
  int dim = 0;
  for (char c : line)
    if (c == ',') ++dim;
  std::vector<std::vector<float>> rows;
  std::vector<bool> filled;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ','))
      throw ParseError("features '" + path + "': line " + std::to_string(line_no));
    int id;
    try {
      id = std::stoi(cell);
    } catch (...) {
      throw ParseError("features '" + path + "': bad item id at line " +
                       std::to_string(line_no));
    }
    std::vector<float> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stof(cell));
      } catch (...) {
        throw ParseError("features '" + path + "': bad value at line " +
                         std::to_string(line_no));
      }
    }
    if (static_cast<int>(vals.size()) != dim)
      throw ParseError("features '" + path + "': line " + std::to_string(line_no) +
                       " has " + std::to_string(vals.size()) + " values, expected " +
                       std::to_string(dim));
    if (id < 0) throw ParseError("features '" + path + "': negative item id");
    if (id >= static_cast<int>(rows.size())) {
      rows.resize(id + 1);
      filled.resize(id + 1, false);
    }
    if (filled[id])
      throw ParseError("features '" + path + "': duplicate item id " +
                       std::to_string(id));
    rows[id] = std::move(vals);
    filled[id] = true;
  }
  FeatureMatrix f;
  f.n = static_cast<int>(rows.size());
  f.dim = dim;
  f.data.reserve(static_cast<std::size_t>(f.n) * dim);
  for (int i = 0; i < f.n; ++i) {
    if (!filled[i])
      throw ParseError("features '" + path + "': missing row for item " +
                       std::to_string(i));
    f.data.insert(f.data.end(), rows[i].begin(), rows[i].end());
  }
  return f;
}

void save_features(const std::string& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PrerequisiteError("cannot write '" + path + "'");
  out.write("BNDF", 4);
  put_u32(out, static_cast<std::uint32_t>(f.n));
  put_u32(out, static_cast<std::uint32_t>(f.dim));
  out.write(reinterpret_cast<const char*>(f.data.data()),
            static_cast<std::streamsize>(f.data.size() * 4));
}

IdMap load_idmap(const std::string& path) {
  auto in = open_or_throw(path);
  IdMap map;
  std::string raw, name, id_str;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!parse_pair_line(raw, line_no, "idmap", name, id_str)) continue;
    int id;
    try {
      id = std::stoi(id_str);
    } catch (...) {
      throw ParseError("idmap: bad dense id at line " + std::to_string(line_no));
    }
    if (id != static_cast<int>(map.names.size()))
      throw ParseError("idmap: dense ids must be contiguous from 0, got " +
                       std::to_string(id) + " at line " + std::to_string(line_no));
    map.add(name);
  }
  map.frozen = true;
  return map;
}

void save_idmap(const std::string& path, const IdMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PrerequisiteError("cannot write '" + path + "'");
  for (int i = 0; i < map.size(); ++i) out << map.names[i] << '\t' << i << '\n';
}

// ---------------------------------------------------------------------------
// Popularity and splits
// ---------------------------------------------------------------------------

PopularityProfile compute_popularity(const std::vector<int>& counts,
                                     double head_ratio, double tail_ratio) {
  if (head_ratio < 0.0 || tail_ratio < 0.0 || head_ratio > 1.0 ||
      tail_ratio > 1.0 || head_ratio + tail_ratio > 1.0 + 1e-12)
    throw ConfigError("popularity ratios must satisfy 0 <= head, tail and head+tail <= 1, got " +
                      std::to_string(head_ratio) + "/" + std::to_string(tail_ratio));
  const int n = static_cast<int>(counts.size());
  PopularityProfile p;
  p.head_ratio = head_ratio;
  p.tail_ratio = tail_ratio;
  p.count = counts;
  p.rank.assign(n, 0);
  p.cls.assign(n, PopClass::mid);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  });
  for (int r = 0; r < n; ++r) p.rank[order[r]] = r;
  p.head_count = std::min(n, static_cast<int>(std::ceil(head_ratio * n)));
  p.tail_count = std::min(n - p.head_count,
                          static_cast<int>(std::ceil(tail_ratio * n)));
  for (int i = 0; i < n; ++i) {
    if (p.rank[i] < p.head_count)
      p.cls[i] = PopClass::head;
    else if (p.rank[i] >= n - p.tail_count)
      p.cls[i] = PopClass::tail;
  }
  return p;
}

PopularityProfile compute_popularity(const InteractionMatrix& d,
                                     double head_ratio, double tail_ratio) {
  return compute_popularity(d.item_counts, head_ratio, tail_ratio);
}

SplitAssignment split_bundles(const BundleTable& table, std::uint64_t seed) {
  const int b = table.size();
  if (b == 0) throw ContractError("split_bundles: empty bundle table");
  std::vector<int> order(b);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const int n_train = static_cast<int>(std::floor(0.7 * b));
  const int n_test = static_cast<int>(std::floor(0.2 * b));
  SplitAssignment s;
  s.of.assign(b, Split::val);
  for (int i = 0; i < n_train; ++i) s.of[order[i]] = Split::train;
  for (int i = n_train; i < n_train + n_test; ++i) s.of[order[i]] = Split::test;
  return s;
}

Scenario label_case(const std::vector<int>& query, const std::vector<int>& target,
                    const PopularityProfile& profile) {
  auto all_of_class = [&](const std::vector<int>& ids, PopClass c) {
    for (int i : ids)
      if (profile.cls[i] != c) return false;
    return true;
  };
  const bool qh = all_of_class(query, PopClass::head);
  const bool qt = all_of_class(query, PopClass::tail);
  const bool th = all_of_class(target, PopClass::head);
  const bool tt = all_of_class(target, PopClass::tail);
  if (qh && tt) return Scenario::pop_to_lt;
  if (qt && th) return Scenario::lt_to_pop;
  if (qh && th) return Scenario::pop_to_pop;
  if (qt && tt) return Scenario::lt_to_lt;
  return Scenario::mixed;
}

namespace {

BundlingCase split_to_case(const std::vector<int>& items, int bundle_id,
                           int n_query, std::vector<int> order,
                           const PopularityProfile* profile) {
  BundlingCase c;
  c.bundle_id = bundle_id;
  c.query.assign(order.begin(), order.begin() + n_query);
  c.target.assign(order.begin() + n_query, order.end());
  std::sort(c.query.begin(), c.query.end());
  std::sort(c.target.begin(), c.target.end());
  c.label = profile ? label_case(c.query, c.target, *profile) : Scenario::mixed;
  (void)items;
  return c;
}

}  // namespace

BundlingCase make_holdout_case(const std::vector<int>& bundle_items,
                               int bundle_id,
                               const PopularityProfile* profile) {
  if (bundle_items.size() < 2)
    throw ContractError("make_holdout_case: bundle " + std::to_string(bundle_id) +
                        " has fewer than 2 items");
  Rng rng(derive_seed(0x42554E444C45ULL, static_cast<std::uint64_t>(bundle_id)));
  std::vector<int> order = bundle_items;
  rng.shuffle(order);
  const int size = static_cast<int>(bundle_items.size());
  const int n_target = 1 + static_cast<int>(rng.uniform_int(0, size - 2));
  return split_to_case(bundle_items, bundle_id, size - n_target, std::move(order),
                       profile);
}

BundlingCase make_training_case(const std::vector<int>& bundle_items,
                                int bundle_id, Rng& rng,
                                const PopularityProfile* profile) {
  const int size = static_cast<int>(bundle_items.size());
  if (size < 2)
    throw ContractError("make_training_case: bundle " + std::to_string(bundle_id) +
                        " has fewer than 2 items");
  const double frac = 0.3 + rng.uniform() * 0.5;
  int n_query = static_cast<int>(std::floor(frac * size));
  n_query = std::max(1, std::min(size - 1, n_query));
  std::vector<int> order = bundle_items;
  rng.shuffle(order);
  return split_to_case(bundle_items, bundle_id, n_query, std::move(order), profile);
}

std::vector<BundlingCase> make_scenario_cases(const std::vector<int>& bundle_items,
                                              int bundle_id,
                                              const PopularityProfile& profile,
                                              Scenario scenario) {
  std::vector<BundlingCase> out;
  if (bundle_items.size() < 2) return out;
  std::vector<int> heads, mids, tails;
  for (int i : bundle_items) {
    switch (profile.cls[i]) {
      case PopClass::head: heads.push_back(i); break;
      case PopClass::mid: mids.push_back(i); break;
      case PopClass::tail: tails.push_back(i); break;
    }
  }
  std::sort(heads.begin(), heads.end());
  std::sort(tails.begin(), tails.end());
  switch (scenario) {
    case Scenario::pop_to_lt:
      if (mids.empty() && !heads.empty() && !tails.empty())
        out.push_back({bundle_id, heads, tails, Scenario::pop_to_lt});
      break;
    case Scenario::lt_to_pop:
      if (mids.empty() && !heads.empty() && !tails.empty())
        out.push_back({bundle_id, tails, heads, Scenario::lt_to_pop});
      break;
    case Scenario::pop_to_pop:
      if (mids.empty() && tails.empty() && heads.size() >= 2)
        out.push_back(make_holdout_case(bundle_items, bundle_id, &profile));
      break;
    case Scenario::lt_to_lt:
      if (mids.empty() && heads.empty() && tails.size() >= 2)
        out.push_back(make_holdout_case(bundle_items, bundle_id, &profile));
      break;
    case Scenario::overall:
      out.push_back(make_holdout_case(bundle_items, bundle_id, &profile));
      break;
    case Scenario::mixed:
      throw ConfigError("make_scenario_cases: 'mixed' is a label, not a scenario");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

// Weighted draw without replacement: linear scan over the running weights.
int draw_weighted(std::vector<double>& weights, double& total, Rng& rng) {
  const double x = rng.uniform() * total;
  double acc = 0.0;
  int picked = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (x < acc) {
      picked = static_cast<int>(i);
      break;
    }
  }
  if (picked < 0) {  // numeric slack: take the last positive weight
    for (int i = static_cast<int>(weights.size()) - 1; i >= 0; --i)
      if (weights[i] > 0.0) {
        picked = i;
        break;
      }
  }
  total -= weights[picked];
  weights[picked] = 0.0;
  return picked;
}

std::vector<int> sample_distinct(const std::vector<int>& pool, int k, Rng& rng) {
  std::vector<int> copy = pool;
  rng.shuffle(copy);
  copy.resize(std::min<std::size_t>(copy.size(), static_cast<std::size_t>(k)));
  return copy;
}

}  // namespace

SynthData synth_generate(const SynthConfig& cfg) {
  if (cfg.n_items < 10 || cfg.n_users < 1 || cfg.n_bundles < 1 ||
      cfg.bundle_min < 2 || cfg.bundle_max < cfg.bundle_min ||
      cfg.bundle_max > cfg.n_items || cfg.d_t < 1 || cfg.d_m < 1 ||
      cfg.n_themes < 1 || cfg.zipf_exponent < 0.0 || cfg.latent_dim < 1 ||
      cfg.proximity_tau <= 0.0)
    throw ConfigError("synth: infeasible generator configuration");

  Rng rng(derive_seed(cfg.seed, Stage::synth));
  const int n = cfg.n_items;

  SynthData data;
  data.corpus.n = n;
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "i%05d", i);
    data.corpus.items.add(buf);
  }

  // Intended popularity order: a seeded permutation carrying the Zipf law.
  std::vector<int> pop_order(n);
  std::iota(pop_order.begin(), pop_order.end(), 0);
  rng.shuffle(pop_order);
  std::vector<double> zipf_weight(n);
  for (int r = 0; r < n; ++r)
    zipf_weight[pop_order[r]] = std::pow(static_cast<double>(r + 1), -cfg.zipf_exponent);

  // Themes: a second independent permutation chunked into equal pools.
  std::vector<int> theme_of(n);
  {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int idx = 0; idx < n; ++idx) theme_of[order[idx]] = idx % cfg.n_themes;
  }
  std::vector<std::vector<int>> theme_pool(cfg.n_themes);
  for (int i = 0; i < n; ++i) theme_pool[theme_of[i]].push_back(i);

  // Latent compatibility vectors: theme centroid plus per-item spread.
  const int k_lat = cfg.latent_dim;
  std::vector<std::vector<double>> centroid(cfg.n_themes,
                                            std::vector<double>(k_lat));
  for (auto& c : centroid)
    for (auto& v : c) v = rng.gaussian();
  // Latents are normalized onto the sphere of radius sqrt(k): compatibility
  // is then monotone in the inner product, the same geometry pre-extracted
  // multimodal embeddings live in.
  std::vector<std::vector<double>> z(n, std::vector<double>(k_lat));
  for (int i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (int j = 0; j < k_lat; ++j) {
      z[i][j] = centroid[theme_of[i]][j] + cfg.z_spread * rng.gaussian();
      norm2 += z[i][j] * z[i][j];
    }
    const double scale = std::sqrt(static_cast<double>(k_lat) / norm2);
    for (int j = 0; j < k_lat; ++j) z[i][j] *= scale;
  }

  // Member-selection weight: closeness in z space, bandwidth scaled to the
  // expected within-theme spread.
  const double prox_denom =
      2.0 * cfg.proximity_tau * cfg.proximity_tau * cfg.z_spread * cfg.z_spread *
      static_cast<double>(k_lat);
  auto proximity = [&](int i, int s) {
    double dist2 = 0.0;
    for (int j = 0; j < k_lat; ++j) {
      const double d = z[i][j] - z[s][j];
      dist2 += d * d;
    }
    return std::exp(-dist2 / prox_denom);
  };

  // Interactions: users gravitate to the z-neighborhoods of two anchor
  // items; items are drawn by Zipf weight times that taste boost, without
  // replacement. Co-interaction therefore encodes compatibility structure
  // for well-observed items while staying popularity-driven in volume.
  auto& d = data.interactions;
  d.users = cfg.n_users;
  d.items = n;
  d.by_user.resize(cfg.n_users);
  d.item_counts.assign(n, 0);
  std::vector<double> weights(n);
  for (int u = 0; u < cfg.n_users; ++u) {
    const int anchor_a = static_cast<int>(rng.uniform_int(0, n - 1));
    const int anchor_b = static_cast<int>(rng.uniform_int(0, n - 1));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double boost =
          1.0 + cfg.theme_boost * (proximity(i, anchor_a) + proximity(i, anchor_b));
      weights[i] = zipf_weight[i] * boost;
      total += weights[i];
    }
    const int k = static_cast<int>(
        rng.uniform_int(cfg.user_min_items, cfg.user_max_items));
    auto& row = d.by_user[u];
    for (int t = 0; t < k && total > 0.0; ++t)
      row.push_back(draw_weighted(weights, total, rng));
    std::sort(row.begin(), row.end());
    for (int i : row) ++d.item_counts[i];
    d.nnz += static_cast<std::int64_t>(row.size());
  }

  // Realized popularity ranks (count descending, id ascending) drive the
  // promo bundle pools, so eligibility survives the strictest ratios.
  const PopularityProfile realized = compute_popularity(d.item_counts, 0.1, 0.1);
  auto rank_pools = [&](double q) {
    const int cut = static_cast<int>(std::ceil(q * n));
    std::vector<std::vector<int>> head(cfg.n_themes), tail(cfg.n_themes);
    for (int i = 0; i < n; ++i) {
      if (realized.rank[i] < cut) head[theme_of[i]].push_back(i);
      if (realized.rank[i] >= n - cut) tail[theme_of[i]].push_back(i);
    }
    return std::make_pair(head, tail);
  };
  auto [head_decile, tail_decile] = rank_pools(0.1);
  auto [head_wide, tail_wide] = rank_pools(0.3);

  const int n_decile = static_cast<int>(std::lround(cfg.promo_decile_frac * cfg.n_bundles));
  const int n_wide = static_cast<int>(std::lround(cfg.promo_wide_frac * cfg.n_bundles));

  // Draw `count` distinct pool members around a seed item, weighted by
  // z-proximity (optionally times a popularity weight).
  auto draw_proximal = [&](const std::vector<int>& pool, int seed_item, int count,
                           double pop_exponent) {
    std::vector<double> w(pool.size());
    double total = 0.0;
    for (std::size_t p = 0; p < pool.size(); ++p) {
      w[p] = proximity(pool[p], seed_item);
      if (pool[p] == seed_item) w[p] = 0.0;
      if (pop_exponent != 0.0)
        w[p] *= std::pow(static_cast<double>(d.item_counts[pool[p]] + 1),
                         pop_exponent);
      total += w[p];
    }
    std::vector<int> out;
    for (int s = 0; s < count && total > 1e-300; ++s)
      out.push_back(pool[draw_weighted(w, total, rng)]);
    return out;
  };

  auto make_promo = [&](const std::vector<std::vector<int>>& heads,
                        const std::vector<std::vector<int>>& tails) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int t = static_cast<int>(rng.uniform_int(0, cfg.n_themes - 1));
      if (heads[t].empty() || tails[t].empty()) continue;
      int nh = 1 + static_cast<int>(rng.uniform_int(
                        0, std::max(0, cfg.promo_head_max - 1)));
      nh = std::min<int>(nh, static_cast<int>(heads[t].size()));
      int nt = 1 + static_cast<int>(rng.uniform_int(
                        0, std::max(0, cfg.promo_tail_max - 1)));
      nt = std::min<int>(nt, static_cast<int>(tails[t].size()));
      if (nh < 1 || nt < 1 || nh + nt < 2) continue;
      const int seed_item = heads[t][rng.uniform_int(
          0, static_cast<std::int64_t>(heads[t].size()) - 1)];
      std::vector<int> items{seed_item};
      auto more_heads = draw_proximal(heads[t], seed_item, nh - 1, 0.0);
      items.insert(items.end(), more_heads.begin(), more_heads.end());
      auto ts = draw_proximal(tails[t], seed_item, nt, 0.0);
      if (ts.empty()) continue;
      items.insert(items.end(), ts.begin(), ts.end());
      rng.shuffle(items);
      return items;
    }
    return std::vector<int>{};
  };

  auto make_organic = [&]() {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int t = static_cast<int>(rng.uniform_int(0, cfg.n_themes - 1));
      const auto& pool = theme_pool[t];
      if (pool.size() < 2) continue;
      const int size = std::min<int>(
          static_cast<int>(rng.uniform_int(cfg.bundle_min, cfg.bundle_max)),
          static_cast<int>(pool.size()));
      if (size < 2) continue;
      std::vector<double> w(pool.size());
      double total = 0.0;
      for (std::size_t p = 0; p < pool.size(); ++p) {
        w[p] = std::pow(static_cast<double>(d.item_counts[pool[p]] + 1),
                        cfg.organic_pop_exponent);
        total += w[p];
      }
      if (total <= 0.0) continue;
      const int seed_item = pool[draw_weighted(w, total, rng)];
      std::vector<int> items{seed_item};
      auto rest =
          draw_proximal(pool, seed_item, size - 1, cfg.organic_pop_exponent);
      items.insert(items.end(), rest.begin(), rest.end());
      if (items.size() >= 2) return items;
    }
    return std::vector<int>{};
  };

  for (int b = 0; b < cfg.n_bundles; ++b) {
    std::vector<int> items;
    if (b < n_decile)
      items = make_promo(head_decile, tail_decile);
    else if (b < n_decile + n_wide)
      items = make_promo(head_wide, tail_wide);
    if (items.empty()) items = make_organic();
    if (items.empty())
      throw ConfigError("synth: could not build a bundle; configuration too tight");
    std::snprintf(buf, sizeof(buf), "b%05d", b);
    data.bundles.names.push_back(buf);
    data.bundles.items.push_back(std::move(items));
  }

  // Features: a random projection of the latent vector per modality, plus
  // observation noise, L2-normalized per item the way pre-extracted
  // multimodal embeddings are. Both modalities expose the same
  // compatibility structure through different lenses.
  auto gen_features = [&](int dim) {
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(k_lat));
    std::vector<std::vector<double>> proj(k_lat, std::vector<double>(dim));
    for (auto& row : proj)
      for (auto& v : row) v = rng.gaussian() * proj_scale;
    FeatureMatrix f;
    f.n = n;
    f.dim = dim;
    f.data.resize(static_cast<std::size_t>(n) * dim);
    std::vector<double> row(dim);
    for (int i = 0; i < n; ++i) {
      double norm2 = 0.0;
      for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int l = 0; l < k_lat; ++l) acc += z[i][l] * proj[l][j];
        row[j] = acc + rng.gaussian() * cfg.feature_noise;
        norm2 += row[j] * row[j];
      }
      const double scale = std::sqrt(static_cast<double>(dim) / norm2);
      for (int j = 0; j < dim; ++j)
        f.data[static_cast<std::size_t>(i) * dim + j] =
            static_cast<float>(row[j] * scale);
    }
    return f;
  };
  data.corpus.text = gen_features(cfg.d_t);
  data.corpus.media = gen_features(cfg.d_m);
  return data;
}

void write_dataset(const SynthData& data, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "interactions.tsv", std::ios::binary);
    if (!out) throw PrerequisiteError("cannot write interactions.tsv in " + dir);
    for (int u = 0; u < data.interactions.users; ++u)
      for (int i : data.interactions.by_user[u])
        out << 'u' << u << '\t' << data.corpus.items.names[i] << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "bundles.tsv", std::ios::binary);
    if (!out) throw PrerequisiteError("cannot write bundles.tsv in " + dir);
    for (int b = 0; b < data.bundles.size(); ++b)
      for (int i : data.bundles.items[b])
        out << data.bundles.names[b] << '\t' << data.corpus.items.names[i] << '\n';
  }
  save_features((fs::path(dir) / "features_text.bndf").string(), data.corpus.text);
  save_features((fs::path(dir) / "features_media.bndf").string(), data.corpus.media);
  save_idmap((fs::path(dir) / "idmap.tsv").string(), data.corpus.items);
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path base(dir);
  const fs::path idmap_path = base / "idmap.tsv";
  if (fs::exists(idmap_path)) {
    ds.corpus.items = load_idmap(idmap_path.string());
  }
  const fs::path inter_path = base / "interactions.tsv";
  if (!fs::exists(inter_path))
    throw PrerequisiteError("missing " + inter_path.string() +
                            "; run `bundleforge synth` (or point data_dir at a dataset)");
  ds.interactions = load_interactions(inter_path.string(), ds.users, ds.corpus.items);
  const fs::path bundle_path = base / "bundles.tsv";
  if (!fs::exists(bundle_path))
    throw PrerequisiteError("missing " + bundle_path.string() +
                            "; run `bundleforge synth` (or point data_dir at a dataset)");
  ds.bundles = load_bundles(bundle_path.string(), ds.corpus.items);
  ds.corpus.n = ds.corpus.items.size();
  if (ds.interactions.items < ds.corpus.n) {
    ds.interactions.items = ds.corpus.n;
    ds.interactions.item_counts.resize(ds.corpus.n, 0);
  }
  if (!ds.corpus.items.frozen)
    save_idmap(idmap_path.string(), ds.corpus.items);

  auto feature_file = [&](const std::string& stem) {
    const fs::path bin = base / (stem + ".bndf");
    if (fs::exists(bin)) return bin.string();
    const fs::path csv = base / (stem + ".csv");
    if (fs::exists(csv)) return csv.string();
    throw PrerequisiteError("missing " + bin.string() + " (or .csv fallback); run `bundleforge synth`");
  };
  ds.corpus.text = load_features(feature_file("features_text"));
  ds.corpus.media = load_features(feature_file("features_media"));
  if (ds.corpus.text.n != ds.corpus.n || ds.corpus.media.n != ds.corpus.n)
    throw ParseError("feature row count (" + std::to_string(ds.corpus.text.n) + "/" +
                     std::to_string(ds.corpus.media.n) + ") does not match item count " +
                     std::to_string(ds.corpus.n));
  return ds;
}

}  // namespace bundleforge::corpus
