#pragma once

// Reference implementations used only by the tests. They share no code with
// the library: plain loops, long double where it is cheap, no Eigen solvers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Bezier HRF: dense parametric sampling, then bisection on the abscissa.

struct Cubic {
  double x[4];
  double y[4];
};

inline double bern(const double* c, double s) {
  const double u = 1.0 - s;
  return c[0] * u * u * u + c[1] * 3.0 * u * u * s + c[2] * 3.0 * u * s * s + c[3] * s * s * s;
}

inline std::vector<Cubic> hrf_cubics(double ttp, double pk, double ttu, double us, double dur, double wp, double wu) {
  const double a = wp / 2.0, b = wu / 2.0;
  return {Cubic{{0.0, a, ttp - a, ttp}, {0.0, 0.0, pk, pk}},
          Cubic{{ttp, ttp + a, ttu - b, ttu}, {pk, pk, us, us}},
          Cubic{{ttu, ttu + b, dur - b, dur}, {us, us, 0.0, 0.0}}};
}

class DenseBezier {
public:
  DenseBezier(const std::vector<Cubic>& cubics, std::size_t points = 100000) {
    for (const auto& c : cubics)
      for (std::size_t i = 0; i <= points; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(points);
        xs_.push_back(bern(c.x, s));
        ys_.push_back(bern(c.y, s));
      }
  }

  double operator()(double t) const {
    if (t <= xs_.front()) return ys_.front();
    if (t >= xs_.back()) return ys_.back();
    std::size_t lo = 0, hi = xs_.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (xs_[mid] <= t) lo = mid;
      else hi = mid;
    }
    const double span = xs_[hi] - xs_[lo];
    if (span <= 0.0) return ys_[lo];
    const double w = (t - xs_[lo]) / span;
    return ys_[lo] + w * (ys_[hi] - ys_[lo]);
  }

private:
  std::vector<double> xs_, ys_;
};

// ---------------------------------------------------------------------------
// Stimulus matrix and convolution by brute force.

inline std::vector<std::vector<double>> stim(const std::vector<double>& onsets, int n_scans, double tr, double dt,
                                             int lags) {
  std::vector<std::vector<double>> x(static_cast<std::size_t>(n_scans), std::vector<double>(lags, 0.0));
  for (int n = 0; n < n_scans; ++n)
    for (int d = 0; d < lags; ++d)
      for (double t : onsets)
        if (std::abs(t - (n * tr - d * dt)) < dt / 2.0) x[n][d] = 1.0;
  return x;
}

// y[n] = a * sum_onsets h((n*tr - onset)/dt) for onsets on the dt lattice.
inline std::vector<double> convolve(const std::vector<double>& onsets, const std::vector<double>& h, double a,
                                    int n_scans, double tr, double dt) {
  std::vector<double> y(static_cast<std::size_t>(n_scans), 0.0);
  for (int n = 0; n < n_scans; ++n)
    for (double t : onsets) {
      const double lag = (n * tr - t) / dt;
      const long d = std::lround(lag);
      if (std::abs(lag - d) < 1e-9 && d >= 0 && d < static_cast<long>(h.size())) y[n] += a * h[d];
    }
  return y;
}

// ---------------------------------------------------------------------------
// Least squares via normal equations, Gauss-Jordan in long double.

inline std::vector<double> solve(std::vector<std::vector<long double>> a, std::vector<long double> b) {
  const std::size_t k = b.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t q = c; q < k; ++q) a[r][q] -= f * a[c][q];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(k);
  for (std::size_t i = 0; i < k; ++i) x[i] = static_cast<double>(b[i] / a[i][i]);
  return x;
}

// x is row-major N x K.
inline std::vector<double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t n = x.size(), k = x[0].size();
  std::vector<std::vector<long double>> g(k, std::vector<long double>(k, 0.0L));
  std::vector<long double> r(k, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      r[p] += static_cast<long double>(x[i][p]) * y[i];
      for (std::size_t q = 0; q < k; ++q) g[p][q] += static_cast<long double>(x[i][p]) * x[i][q];
    }
  return solve(g, r);
}

// One-sample Kolmogorov-Smirnov statistic against U(0, 1).
inline double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - p[i]);
    d = std::max(d, p[i] - static_cast<double>(i) / n);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Weighted two-class mixture and its likelihood.

struct Pt {
  double x, y;
};

struct Gauss {
  double lambda;
  Pt mu;
  double sxx, sxy, syy;
};

struct Mix {
  Gauss cls[2];
};

inline double image_ridge(const std::vector<Pt>& phi) {
  double mx = 0, my = 0;
  for (auto p : phi) {
    mx += p.x;
    my += p.y;
  }
  mx /= phi.size();
  my /= phi.size();
  double vx = 0, vy = 0;
  for (auto p : phi) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  const double tr = (vx / phi.size() + vy / phi.size()) / 2.0;
  return tr > 0 ? 1e-4 * tr : 1e-4;
}

inline Mix fit(const std::vector<int>& members, const std::vector<Pt>& phi, const std::vector<double>& alpha,
               double ridge) {
  Mix m{};
  double asum = 0;
  for (int j : members) asum += alpha[j];
  const double lam1 = asum / members.size();
  for (int c = 0; c < 2; ++c) {
    double w_tot = 0, sx = 0, sy = 0;
    for (int j : members) {
      const double w = c == 1 ? alpha[j] : 1.0 - alpha[j];
      w_tot += w;
      sx += w * phi[j].x;
      sy += w * phi[j].y;
    }
    const bool fallback = w_tot < 1e-6;
    double mx, my, cxx = 0, cxy = 0, cyy = 0, norm;
    if (fallback) {
      mx = my = 0;
      for (int j : members) {
        mx += phi[j].x;
        my += phi[j].y;
      }
      mx /= members.size();
      my /= members.size();
      norm = static_cast<double>(members.size());
    } else {
      mx = sx / w_tot;
      my = sy / w_tot;
      norm = w_tot;
    }
    for (int j : members) {
      const double w = fallback ? 1.0 : (c == 1 ? alpha[j] : 1.0 - alpha[j]);
      const double dx = phi[j].x - mx, dy = phi[j].y - my;
      cxx += w * dx * dx;
      cxy += w * dx * dy;
      cyy += w * dy * dy;
    }
    m.cls[c] = Gauss{c == 1 ? lam1 : 1.0 - lam1, {mx, my}, cxx / norm + ridge, cxy / norm, cyy / norm + ridge};
  }
  return m;
}

inline double density(const Gauss& g, Pt p) {
  const double det = g.sxx * g.syy - g.sxy * g.sxy;
  const double dx = p.x - g.mu.x, dy = p.y - g.mu.y;
  const double q = (g.syy * dx * dx - 2.0 * g.sxy * dx * dy + g.sxx * dy * dy) / det;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

inline double loglik(const std::vector<int>& members, const Mix& m, const std::vector<Pt>& phi) {
  long double total = 0;
  for (int j : members) {
    const double p = m.cls[0].lambda * density(m.cls[0], phi[j]) + m.cls[1].lambda * density(m.cls[1], phi[j]);
    total += std::log(static_cast<long double>(p));
  }
  return static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Exhaustive greedy agglomeration on a small grid. Parcels are named by their
// smallest voxel; ties go to the lexicographically smallest pair.

struct Merge {
  int first, second;
  double score;
};

class Partition {
public:
  Partition(int w, int h) : w_(w), h_(h), label_(static_cast<std::size_t>(w * h)) {
    for (int j = 0; j < w * h; ++j) label_[j] = j;
  }

  std::vector<int> members(int id) const {
    std::vector<int> m;
    for (int j = 0; j < static_cast<int>(label_.size()); ++j)
      if (label_[j] == id) m.push_back(j);
    return m;
  }

  std::set<std::pair<int, int>> adjacent_pairs() const {
    std::set<std::pair<int, int>> pairs;
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        const int j = y * w_ + x;
        const int nbrs[2] = {x + 1 < w_ ? j + 1 : -1, y + 1 < h_ ? j + w_ : -1};
        for (int k : nbrs) {
          if (k < 0 || label_[j] == label_[k]) continue;
          pairs.emplace(std::min(label_[j], label_[k]), std::max(label_[j], label_[k]));
        }
      }
    return pairs;
  }

  void merge(int a, int b) {
    const int keep = std::min(a, b), gone = std::max(a, b);
    for (auto& l : label_)
      if (l == gone) l = keep;
  }

  std::size_t count() const { return std::set<int>(label_.begin(), label_.end()).size(); }
  const std::vector<int>& labels() const { return label_; }

private:
  int w_, h_;
  std::vector<int> label_;
};

inline std::vector<int> join(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

// Best IGMM merge of the current partition: argmax of L(a u b) - L(a) - L(b).
inline Merge best_igmm(const Partition& part, const std::vector<Pt>& phi, const std::vector<double>& alpha,
                       double ridge) {
  Merge best{-1, -1, 0.0};
  for (auto [a, b] : part.adjacent_pairs()) {
    const auto ma = part.members(a), mb = part.members(b), mab = join(ma, mb);
    const double score = loglik(mab, fit(mab, phi, alpha, ridge), phi) - loglik(ma, fit(ma, phi, alpha, ridge), phi) -
                         loglik(mb, fit(mb, phi, alpha, ridge), phi);
    if (best.first < 0 || score > best.score) best = {a, b, score};
  }
  return best;
}

// Best Ward merge: argmin n_a n_b / (n_a + n_b) |mean_a - mean_b|^2.
inline Merge best_ward(const Partition& part, const std::vector<Pt>& phi) {
  Merge best{-1, -1, 0.0};
  auto mean = [&](const std::vector<int>& m) {
    Pt c{0, 0};
    for (int j : m) {
      c.x += phi[j].x;
      c.y += phi[j].y;
    }
    return Pt{c.x / m.size(), c.y / m.size()};
  };
  for (auto [a, b] : part.adjacent_pairs()) {
    const auto ma = part.members(a), mb = part.members(b);
    const Pt ca = mean(ma), cb = mean(mb);
    const double na = ma.size(), nb = mb.size();
    const double cost = na * nb / (na + nb) * ((ca.x - cb.x) * (ca.x - cb.x) + (ca.y - cb.y) * (ca.y - cb.y));
    if (best.first < 0 || cost < best.score) best = {a, b, cost};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Information measures from counts.

inline double entropy(const std::vector<int>& a) {
  std::map<int, double> c;
  for (int v : a) c[v] += 1.0;
  double h = 0;
  for (auto [k, n] : c) h -= n / a.size() * std::log(n / a.size());
  return h;
}

inline double joint_entropy(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> c;
  for (std::size_t i = 0; i < a.size(); ++i) c[{a[i], b[i]}] += 1.0;
  double h = 0;
  for (auto [k, n] : c) h -= n / a.size() * std::log(n / a.size());
  return h;
}

// Connected components of each label under 4-adjacency (flood fill).
inline std::map<int, int> components(int w, int h, const std::vector<int>& labels) {
  std::vector<char> seen(labels.size(), 0);
  std::map<int, int> comps;
  for (int s = 0; s < w * h; ++s) {
    if (seen[s]) continue;
    ++comps[labels[s]];
    std::vector<int> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      const int x = j % w, y = j / w;
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (auto& p : nb) {
        if (p[0] < 0 || p[1] < 0 || p[0] >= w || p[1] >= h) continue;
        const int k = p[1] * w + p[0];
        if (!seen[k] && labels[k] == labels[j]) {
          seen[k] = 1;
          stack.push_back(k);
        }
      }
    }
  }
  return comps;
}

}  // namespace oracle
