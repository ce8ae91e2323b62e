#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oracle {

long double precise_distance(std::span<const float> a, std::span<const float> b) {
  std::vector<long double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    terms[i] = d * d;
  }
  // Pairwise reduction keeps the rounding error logarithmic in the length.
  while (terms.size() > 1) {
    std::vector<long double> next((terms.size() + 1) / 2);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = terms[2 * i] + (2 * i + 1 < terms.size() ? terms[2 * i + 1] : 0.0L);
    }
    terms = std::move(next);
  }
  return terms.empty() ? 0.0L : std::sqrt(terms[0]);
}

double distance(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<std::vector<double>> mutual_reachability_matrix(const Points& p, std::size_t k) {
  const std::size_t n = p.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d[i][j] = distance(p.row(i), p.row(j), p.dim);
  }
  std::vector<double> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(d[i][j]);
    }
    std::sort(others.begin(), others.end());
    core[i] = others.at(k - 1);
  }
  auto w = d;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      w[i][j] = i == j ? 0.0 : std::max({core[i], core[j], d[i][j]});
    }
  }
  return w;
}

namespace {

double lambda_of(double w) { return w > 0.0 ? 1.0 / w : std::numeric_limits<double>::infinity(); }

struct Cluster {
  std::vector<std::uint32_t> points;  // at birth
  double birth = 0.0;
  double stability = 0.0;
  std::vector<std::size_t> children;
};

}  // namespace

Partition brute_hdbscan(const Points& p, std::size_t k, std::size_t m) {
  const std::size_t n = p.size();
  const auto w = mutual_reachability_matrix(p, k);

  // mm[i][j]: smallest possible largest edge on any path from i to j.
  auto mm = w;
  for (std::size_t via = 0; via < n; ++via) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        mm[i][j] = std::min(mm[i][j], std::max(mm[i][via], mm[via][j]));
      }
    }
  }

  std::vector<Cluster> clusters;
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  clusters.push_back({all, 0.0, 0.0, {}});

  // Explicit recursion over clusters; each follows its points down until it
  // splits into two or more parts of size >= m or disappears.
  std::function<void(std::size_t)> descend = [&](std::size_t ci) {
    std::vector<std::uint32_t> alive = clusters[ci].points;
    const double birth = clusters[ci].birth;
    double stability = 0.0;
    while (true) {
      double level = 0.0;
      for (auto a : alive) {
        for (auto b : alive) level = std::max(level, mm[a][b]);
      }
      const double lambda = lambda_of(level);
      // Components of the graph with edges strictly below the level.
      std::vector<std::vector<std::uint32_t>> parts;
      std::vector<char> seen(n, 0);
      for (auto a : alive) {
        if (seen[a]) continue;
        std::vector<std::uint32_t> part;
        for (auto b : alive) {
          if (b == a || mm[a][b] < level) {
            part.push_back(b);
            seen[b] = 1;
          }
        }
        parts.push_back(std::move(part));
      }
      std::vector<std::vector<std::uint32_t>> big;
      std::size_t leaving = 0;
      for (auto& part : parts) {
        if (part.size() >= m) {
          big.push_back(std::move(part));
        } else {
          leaving += part.size();
        }
      }
      for (std::size_t i = 0; i < leaving; ++i) stability += lambda - birth;
      if (big.size() == 1) {
        alive = std::move(big[0]);
        continue;
      }
      for (std::size_t i = 0; i < alive.size() - leaving; ++i) stability += lambda - birth;
      clusters[ci].stability = stability;
      for (auto& part : big) {
        clusters.push_back({std::move(part), lambda, 0.0, {}});
        clusters[ci].children.push_back(clusters.size() - 1);
        descend(clusters.size() - 1);
      }
      return;
    }
  };
  descend(0);

  // Excess of mass; returns (best value, selected clusters) for a subtree.
  std::function<std::pair<double, std::vector<std::size_t>>(std::size_t)> best =
      [&](std::size_t ci) -> std::pair<double, std::vector<std::size_t>> {
    if (clusters[ci].children.empty()) return {clusters[ci].stability, {ci}};
    double total = 0.0;
    std::vector<std::size_t> chosen;
    for (std::size_t c : clusters[ci].children) {
      auto [v, s] = best(c);
      total += v;
      chosen.insert(chosen.end(), s.begin(), s.end());
    }
    if (ci != 0 && clusters[ci].stability > total) return {clusters[ci].stability, {ci}};
    return {total, chosen};
  };

  Partition out;
  std::vector<char> used(n, 0);
  for (std::size_t ci : best(0).second) {
    if (ci == 0) continue;
    auto pts = clusters[ci].points;
    std::sort(pts.begin(), pts.end());
    for (auto x : pts) used[x] = 1;
    out.clusters.push_back(std::move(pts));
  }
  std::sort(out.clusters.begin(), out.clusters.end());
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!used[i]) out.noise.push_back(i);
  }
  return out;
}

double mst_weight_pruefer(const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  if (n < 2) return 0.0;
  if (n == 2) return w[0][1];
  if (n > 9) throw std::invalid_argument("Pruefer enumeration limited to n <= 9");
  std::vector<std::size_t> seq(n - 2, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::size_t> degree(n, 1);
    for (auto s : seq) ++degree[s];
    double total = 0.0;
    for (auto s : seq) {
      std::size_t leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      total += w[leaf][s];
      --degree[leaf];
      --degree[s];
    }
    std::size_t u = n, v = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (degree[i] == 1) (u == n ? u : v) = i;
    }
    total += w[u][v];
    best = std::min(best, total);
    std::size_t pos = 0;
    while (pos < seq.size() && ++seq[pos] == n) seq[pos++] = 0;
    if (pos == seq.size()) break;
  }
  return best;
}

double mst_weight_subsets(const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  if (n > 16) throw std::invalid_argument("subset enumeration limited to n <= 16");
  if (n < 2) return 0.0;
  const std::size_t full = (std::size_t{1} << n) - 1;
  const double inf = std::numeric_limits<double>::infinity();
  // cross[a][B]: cheapest edge from vertex a into set B.
  std::vector<std::vector<double>> cross(n, std::vector<double>(full + 1, inf));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t set = 1; set <= full; ++set) {
      const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(set));
      cross[a][set] = std::min(cross[a][set & (set - 1)], w[a][low]);
    }
  }
  std::vector<double> g(full + 1, inf);
  for (std::size_t set = 1; set <= full; ++set) {
    if ((set & (set - 1)) == 0) {
      g[set] = 0.0;
      continue;
    }
    const std::size_t low = set & (~set + 1);
    const std::size_t rest = set ^ low;
    // Every tree on `set` splits at some edge into A (holding the lowest
    // vertex) and B = set \ A; try all such A.
    for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
      const std::size_t a_set = sub | low;
      const std::size_t b_set = set ^ a_set;
      if (b_set != 0) {
        double link = inf;
        for (std::size_t a = 0; a < n; ++a) {
          if (a_set >> a & 1) link = std::min(link, cross[a][b_set]);
        }
        g[set] = std::min(g[set], g[a_set] + g[b_set] + link);
      }
      if (sub == 0) break;
    }
  }
  return g[full];
}

double mst_weight_kruskal(const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  struct E {
    double w;
    std::size_t a, b;
  };
  std::vector<E> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({w[i][j], i, j});
  }
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) { return x.w < y.w; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  double total = 0.0;
  for (const auto& e : edges) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    total += e.w;
  }
  return total;
}

std::vector<Merge> naive_upgma(const std::map<std::uint64_t, std::vector<double>>& centroids) {
  std::vector<std::vector<std::uint64_t>> groups;
  for (const auto& [id, c] : centroids) groups.push_back({id});
  auto dist = [&](std::uint64_t a, std::uint64_t b) {
    const auto& x = centroids.at(a);
    const auto& y = centroids.at(b);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
  };
  std::vector<Merge> out;
  while (groups.size() > 1) {
    double best_h = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        double s = 0.0;
        for (auto a : groups[i]) {
          for (auto b : groups[j]) s += dist(a, b);
        }
        const double h = s / static_cast<double>(groups[i].size() * groups[j].size());
        // groups stay ordered by their smallest id, so (i, j) order is the tie order.
        if (h < best_h) {
          best_h = h;
          bi = i;
          bj = j;
        }
      }
    }
    out.push_back({groups[bi], groups[bj], best_h});
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    std::sort(groups[bi].begin(), groups[bi].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return out;
}

SearchTrace simulate_search(std::size_t pages, long long t) {
  SearchTrace trace;
  if (pages == 0) return trace;
  const long long last = static_cast<long long>(pages) - 1;
  auto judge = [&](long long page) {
    const bool ok = page <= t;
    trace.probes.push_back(static_cast<std::size_t>(page));
    trace.verdicts.push_back(ok);
    return ok;
  };
  long long good = -1, bad = static_cast<long long>(pages);
  for (long long j = 0;; ++j) {
    const long long probe = std::min((1LL << j) - 1, last);
    if (judge(probe)) {
      good = probe;
      if (probe == last) break;
    } else {
      bad = probe;
      break;
    }
  }
  while (bad - good > 1) {
    const long long mid = good + (bad - good) / 2;
    if (judge(mid)) {
      good = mid;
    } else {
      bad = mid;
    }
  }
  trace.threshold = good;
  return trace;
}

}  // namespace oracle
