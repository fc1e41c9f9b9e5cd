#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <thread>

#include "qform.hpp"

namespace sqf {

using IVector = std::vector<Int>;
using Residue = std::vector<int64_t>;
using ResidueFilter = std::function<bool(const Residue&)>;

// f(y) = y^t A y + lin . y + c
struct QuadPoly {
  RMatrix A;
  std::vector<Rational> lin;
  Rational c = 0;

  size_t dim() const { return A.size(); }

  static QuadPoly form(const RMatrix& B, const Rational& shift = 0) {
    return {B, std::vector<Rational>(B.size(), Rational(0)), -shift};
  }

  template <class V>
  Rational eval(const V& y) const {
    Rational s = c;
    size_t m = dim();
    for (size_t i = 0; i < m; ++i) {
      if (y[i] == 0) continue;
      Rational yi(y[i]);
      Rational row = lin[i];
      for (size_t j = 0; j < m; ++j)
        if (y[j] != 0) row += A[i][j] * Rational(y[j]);
      s += row * yi;
    }
    return s;
  }

  template <class V>
  std::vector<Rational> grad(const V& y) const {
    size_t m = dim();
    std::vector<Rational> g(m);
    for (size_t i = 0; i < m; ++i) {
      Rational s = lin[i];
      for (size_t j = 0; j < m; ++j)
        if (y[j] != 0) s += 2 * A[i][j] * Rational(y[j]);
      g[i] = s;
    }
    return g;
  }

  int64_t min_coefficient_valuation(int64_t p) const {
    int64_t m = c == 0 ? kInfiniteValuation : valuation(c, p);
    for (size_t i = 0; i < dim(); ++i) {
      if (lin[i] != 0) m = std::min(m, valuation(lin[i], p));
      for (size_t j = 0; j < dim(); ++j)
        if (A[i][j] != 0) m = std::min(m, valuation(Rational(i == j ? A[i][j] : 2 * A[i][j]), p));
    }
    return m;
  }

  QuadPoly scaled(const Rational& f) const {
    QuadPoly r = *this;
    for (auto& row : r.A)
      for (auto& x : row) x *= f;
    for (auto& x : r.lin) x *= f;
    r.c *= f;
    return r;
  }
};

namespace detail {

inline int64_t val_or_inf(const Rational& x, int64_t p) { return x == 0 ? kInfiniteValuation : valuation(x, p); }

inline int64_t min_val(const std::vector<Rational>& g, int64_t p) {
  int64_t m = kInfiniteValuation;
  for (const auto& x : g) m = std::min(m, val_or_inf(x, p));
  return m;
}

// Calls fn(r) for every r in {0..p-1}^m.
inline void for_each_residue(size_t m, int64_t p, const std::function<void(const Residue&)>& fn) {
  Residue r(m, 0);
  while (true) {
    fn(r);
    size_t k = 0;
    while (k < m && r[k] == p - 1) r[k++] = 0;
    if (k == m) break;
    ++r[k];
  }
}

inline bool is_unit_residue(const Residue& r) {
  for (auto x : r)
    if (x) return true;
  return false;
}

struct Budget {
  size_t left;
  void spend(size_t k = 1) {
    if (k > left) throw Error(ErrorKind::BudgetExceeded, "residue descent exceeded its budget");
    left -= k;
  }
};

// Measure (relative to the residue class of y mod p^j) of lifts z with
// v(f(z)) >= L. Requires v(f(y)) >= min(j, L).
inline Rational congruence_lifts(const QuadPoly& f, int64_t p, IVector y, int64_t j, int64_t L, Budget& budget) {
  if (j >= L) return 1;
  if (min_val(f.grad(y), p) == 0) return rpow(p, -(L - j));
  size_t m = f.dim();
  Rational total = 0;
  Int pj = ipow(p, j);
  Rational inv = rpow(p, -static_cast<int64_t>(m));
  for_each_residue(m, p, [&](const Residue& d) {
    budget.spend();
    IVector z = y;
    for (size_t i = 0; i < m; ++i) z[i] += pj * d[i];
    int64_t need = std::min(j + 1, L);
    if (val_or_inf(f.eval(z), p) >= need) total += inv * congruence_lifts(f, p, z, j + 1, L, budget);
  });
  return total;
}

// Is there an exact zero of f congruent to y mod p^j? y is known mod p^J.
inline bool has_zero(const QuadPoly& f, int64_t p, const IVector& y, int64_t j, int64_t J, Budget& budget, int64_t depth) {
  Rational v = f.eval(y);
  if (v == 0) return true;
  int64_t e = valuation(v, p);
  int64_t m = min_val(f.grad(y), p);
  if (m < kInfiniteValuation && e > 2 * m && e - m >= j) return true;
  if (depth <= 0) throw Error(ErrorKind::BudgetExceeded, "zero search exceeded its depth");
  size_t n = f.dim();
  Int pJ = ipow(p, J);
  bool found = false;
  for_each_residue(n, p, [&](const Residue& d) {
    if (found) return;
    budget.spend();
    IVector z = y;
    for (size_t i = 0; i < n; ++i) z[i] += pJ * d[i];
    if (val_or_inf(f.eval(z), p) >= J + 1 && has_zero(f, p, z, j, J + 1, budget, depth - 1)) found = true;
  });
  return found;
}

// #{residues mod p^l above y (known mod p^j) that contain an exact zero}.
inline Int variety_lifts(const QuadPoly& f, int64_t p, const IVector& y, int64_t j, int64_t l, Budget& budget) {
  size_t n = f.dim();
  Rational v = f.eval(y);
  if (val_or_inf(v, p) >= j && min_val(f.grad(y), p) == 0) return ipow(p, static_cast<int64_t>(n - 1) * (l - j));
  if (j == l) return has_zero(f, p, y, l, l, budget, 4 * l + 16) ? Int(1) : Int(0);
  Int total = 0;
  Int pj = ipow(p, j);
  for_each_residue(n, p, [&](const Residue& d) {
    budget.spend();
    IVector z = y;
    for (size_t i = 0; i < n; ++i) z[i] += pj * d[i];
    if (val_or_inf(f.eval(z), p) >= j + 1) total += variety_lifts(f, p, z, j + 1, l, budget);
  });
  return total;
}

inline QuadPoly integral_or_throw(const QuadPoly& f, int64_t p) {
  int64_t mv = f.min_coefficient_valuation(p);
  if (mv < 0) throw Error(ErrorKind::InvalidArgument, "polynomial is not p-integral");
  return f;
}

}  // namespace detail

// mu{y in Z_p^m : v(f(y)) >= L, y mod p accepted}, reported per residue mod p.
inline void congruence_measure_by_residue(const QuadPoly& f0, int64_t p, int64_t L, const ResidueFilter& accept,
                                          const std::function<void(const Residue&, const Rational&)>& out,
                                          size_t budget = 5000000) {
  require_odd_prime(p);
  const QuadPoly& f = detail::integral_or_throw(f0, p);
  size_t m = f.dim();
  detail::Budget b{budget};
  Rational base = rpow(p, -static_cast<int64_t>(m));
  // coefficients mod p for the first level
  std::vector<std::vector<int64_t>> A(m, std::vector<int64_t>(m));
  std::vector<int64_t> lin(m);
  for (size_t i = 0; i < m; ++i) {
    lin[i] = to_int64(rational_mod(f.lin[i], p, 1));
    for (size_t j = 0; j < m; ++j) A[i][j] = to_int64(rational_mod(f.A[i][j], p, 1));
  }
  int64_t c = to_int64(rational_mod(f.c, p, 1));
  detail::for_each_residue(m, p, [&](const Residue& r) {
    if (accept && !accept(r)) return;
    if (L <= 0) {
      out(r, base);
      return;
    }
    int64_t val = c;
    bool singular = true;
    for (size_t i = 0; i < m; ++i) {
      int64_t row = lin[i], g = lin[i];
      for (size_t j = 0; j < m; ++j) {
        row = (row + A[i][j] * r[j]) % p;
        g = (g + 2 * A[i][j] * r[j]) % p;
      }
      val = (val + row * r[i]) % p;
      if (g % p) singular = false;
    }
    if (val % p) return;
    if (!singular) {
      out(r, base * rpow(p, -(L - 1)));
      return;
    }
    IVector y(r.begin(), r.end());
    out(r, base * detail::congruence_lifts(f, p, y, 1, L, b));
  });
}

inline Rational congruence_measure(const QuadPoly& f, int64_t p, int64_t L, const ResidueFilter& accept = {},
                                   size_t budget = 5000000) {
  Rational total = 0;
  congruence_measure_by_residue(f, p, L, accept, [&](const Residue&, const Rational& m) { total += m; }, budget);
  return total;
}

struct ResidueCount {
  int64_t p = 0;
  int64_t level = 0;
  size_t dim = 0;
  Int raw = 0;
  Rational normalized = 0;
};

// Y inside Z_p^n cut out by an optional equation f = 0, a unit condition and
// a residue filter mod p.
struct VarietySpec {
  size_t n = 0;
  std::optional<QuadPoly> equation;
  bool units = false;
  ResidueFilter filter;
};

inline ResidueCount variety_volume(const VarietySpec& Y, int64_t p, size_t d, int64_t level, size_t budget = 5000000) {
  require_odd_prime(p);
  if (level < 1) throw Error(ErrorKind::InvalidArgument, "level must be positive");
  ResidueCount rc{p, level, d, 0, 0};
  detail::Budget b{budget};
  std::optional<QuadPoly> f;
  if (Y.equation) f = detail::integral_or_throw(*Y.equation, p);
  detail::for_each_residue(Y.n, p, [&](const Residue& r) {
    if (Y.units && !detail::is_unit_residue(r)) return;
    if (Y.filter && !Y.filter(r)) return;
    if (!f) {
      rc.raw += ipow(p, static_cast<int64_t>(Y.n) * (level - 1));
      return;
    }
    IVector y(r.begin(), r.end());
    if (detail::val_or_inf(f->eval(y), p) < 1) return;
    rc.raw += detail::variety_lifts(*f, p, y, 1, level, b);
  });
  rc.normalized = Rational(rc.raw) / Rational(ipow(p, static_cast<int64_t>(d) * level));
  return rc;
}

// Level from which the residue count below is exact: the lattice then
// contains p^l times the Z_p-saturation of its span.
inline int64_t parallelepiped_stable_level(const RMatrix& v, int64_t p) {
  int64_t l = 1;
  for (int64_t e : smith_valuations(v, p))
    if (e < kInfiniteValuation) l = std::max(l, e);
  return l;
}

// nu_d of Z_p v_1 + ... + Z_p v_d by counting its residues mod p^l.
inline ResidueCount parallelepiped_volume(const RMatrix& v, int64_t p, int64_t level, size_t budget = 2000000) {
  size_t d = v.size(), n = d ? v[0].size() : 0;
  int64_t r = 0;
  for (const auto& row : v)
    for (const auto& x : row)
      if (x != 0) r = std::max(r, -valuation(x, p));
  int64_t K = level + r;
  Int mod = ipow(p, K);
  // p^r v_i mod p^{l+r}; coefficients range over Z / p^{l+r}
  std::vector<std::vector<Int>> w(d, std::vector<Int>(n));
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < n; ++j) w[i][j] = rational_mod(v[i][j] * rpow(p, r), p, K);
  size_t total = 1;
  for (size_t i = 0; i < d; ++i) {
    total *= static_cast<size_t>(to_int64(mod));
    if (total > budget) throw Error(ErrorKind::BudgetExceeded, "parallelepiped count exceeded its budget");
  }
  std::set<std::vector<Int>> seen;
  std::vector<Int> c(d, Int(0));
  for (size_t it = 0; it < total; ++it) {
    std::vector<Int> x(n, Int(0));
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < n; ++j) x[j] += c[i] * w[i][j];
    for (auto& e : x) e = sqf::mod(e, mod);
    seen.insert(x);
    for (size_t i = 0; i < d; ++i) {
      if (++c[i] < mod) break;
      c[i] = 0;
    }
  }
  ResidueCount rc{p, level, d, Int(seen.size()), 0};
  rc.normalized = Rational(rc.raw) / Rational(ipow(p, static_cast<int64_t>(d) * level));
  return rc;
}

struct OrbitVolume {
  Rational value = 0;    // nu_{n-1} of the unit cone
  Rational c_K = 0;      // value / (1 - 1/p)
  std::vector<Rational> levels;  // normalized counts at l = 1..4
  int64_t stable_from = 0;       // first level from which the counts agree
  bool stabilized = false;
};

inline QuadPoly integral_form(const RMatrix& B, int64_t p) {
  QuadPoly f = QuadPoly::form(B);
  int64_t s = std::min<int64_t>(0, f.min_coefficient_valuation(p));
  return f.scaled(rpow(p, -s));
}

inline OrbitVolume orbit_volume(const QuadraticFormP& q, int64_t max_level = 4) {
  if (q.p == kInfPlace) throw Error(ErrorKind::InvalidArgument, "finite place expected");
  if (!is_standard(q.gram, q.p)) throw Error(ErrorKind::NotStandardForm, "orbit volume needs a standard form");
  VarietySpec Y{q.n(), integral_form(q.gram, q.p), true, {}};
  OrbitVolume o;
  for (int64_t l = 1; l <= max_level; ++l) o.levels.push_back(variety_volume(Y, q.p, q.n() - 1, l).normalized);
  o.value = o.levels.back();
  o.stable_from = max_level;
  while (o.stable_from > 1 && o.levels[o.stable_from - 2] == o.value) --o.stable_from;
  o.stabilized = o.stable_from < max_level || max_level == 1;
  o.c_K = o.value / (1 - Rational(1, q.p));
  return o;
}

// Box indicator on Q_p^n: x_i in center_i + p^{exponent_i} Z_p.
struct PBox {
  std::vector<Rational> center;
  std::vector<int64_t> exponent;

  bool contains(size_t i, const Rational& x, int64_t p) const {
    Rational d = x - center[i];
    return d == 0 || valuation(d, p) >= exponent[i];
  }
};

// J_f(p^{-r}, zeta) for a standard form and a box f.
inline Rational j_kernel(const QuadraticFormP& q, const PBox& f, int64_t r, const Rational& zeta, size_t budget = 5000000) {
  int64_t p = q.p;
  if (!is_standard(q.gram, p)) throw Error(ErrorKind::NotStandardForm, "J kernel needs a standard form");
  size_t n = q.n();
  if (!f.contains(0, rpow(p, -r), p)) return 0;
  size_t m = n - 2;
  // x_i = c_i + p^{k_i} y_i for the middle coordinates
  QuadPoly g;
  g.A.assign(m, std::vector<Rational>(m, Rational(0)));
  g.lin.assign(m, Rational(0));
  Rational vol = 1;
  g.c = 0;
  for (size_t a = 0; a < m; ++a) {
    Rational sa = rpow(p, f.exponent[a + 1]);
    vol *= rpow(p, -f.exponent[a + 1]);
    for (size_t b = 0; b < m; ++b) {
      const Rational& B = q.gram[a + 1][b + 1];
      Rational sb = rpow(p, f.exponent[b + 1]);
      g.A[a][b] = B * sa * sb;
      g.lin[a] += 2 * B * f.center[b + 1] * sa;
      g.c += B * f.center[a + 1] * f.center[b + 1];
    }
  }
  // x_n = p^r (zeta - qmid) in c_n + p^{k_n} Z_p  <=>  qmid - zeta + p^{-r} c_n in p^{k_n - r} Z_p
  g.c += -zeta + rpow(p, -r) * f.center[n - 1];
  int64_t L = f.exponent[n - 1] - r;
  int64_t s = std::max<int64_t>(0, -g.min_coefficient_valuation(p));
  Rational scale = rpow(p, -r * static_cast<int64_t>(m));
  if (m == 0) {
    Rational v = g.c;
    return (v == 0 || valuation(v, p) >= L) ? scale : Rational(0);
  }
  QuadPoly gi = g.scaled(rpow(p, s));
  return scale * vol * congruence_measure(gi, p, L + s, {}, budget);
}

struct LambdaP {
  int64_t p = 0;
  Rational shell = 0;  // lambda_{q, Omega-hat}
  Rational ball = 0;   // shell / (1 - p^{2-n})
  Rational value = 0;  // the constant matching the region
  std::vector<int64_t> z_set;
  std::map<Residue, Rational> density;  // per projective class
  int64_t level = 0;                    // level at which densities stabilized
};

namespace detail {

// lim_L p^L mu{u unit, class c : q(u) in p^L Z_p} per projective class mod p.
inline std::map<Residue, Rational> cone_density(const RMatrix& B, int64_t p, int64_t* level_out, int64_t max_level = 10) {
  QuadPoly f = QuadPoly::form(B);
  int64_t s = std::max<int64_t>(0, -f.min_coefficient_valuation(p));
  QuadPoly fi = f.scaled(rpow(p, s));
  auto at = [&](int64_t L) {
    std::map<Residue, Rational> d;
    congruence_measure_by_residue(fi, p, L, is_unit_residue, [&](const Residue& r, const Rational& m) {
      d[PRegion::class_key(r, p)] += m * rpow(p, L - s);
    });
    return d;
  };
  auto prev = at(1);
  for (int64_t L = 2; L <= max_level; ++L) {
    auto cur = at(L);
    if (cur == prev) {
      if (level_out) *level_out = L - 1;
      return cur;
    }
    prev = std::move(cur);
  }
  throw Error(ErrorKind::PrecisionExhausted, "cone density did not stabilize");
}

}  // namespace detail

inline LambdaP lambda_p(const QuadraticFormP& q, const PRegion& region) {
  if (q.p == kInfPlace) throw Error(ErrorKind::InvalidArgument, "finite place expected");
  int64_t p = q.p, n = static_cast<int64_t>(q.n());
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "rank at least 3 expected");
  LambdaP L;
  L.p = p;
  L.density = detail::cone_density(q.gram, p, &L.level);
  std::set<int64_t> zs;
  for (const auto& [key, d] : L.density) {
    int64_t e = region.exponent_for(key, p);
    L.shell += d * rpow(p, e * (n - 2));
    if (d != 0) zs.insert(-e);
  }
  L.z_set.assign(zs.begin(), zs.end());
  L.ball = L.shell / (1 - rpow(p, 2 - n));
  L.value = region.shell ? L.shell : L.ball;
  return L;
}

// vol{v in Q_p^n : ||v|| <= T rho(v) (or = for shells), q(v) in I_p}, exactly.
inline Rational volume_p(const QuadraticFormP& q, const PInterval& I, const PRegion& region, int64_t t) {
  int64_t p = q.p, n = static_cast<int64_t>(q.n());
  QuadPoly f = QuadPoly::form(q.gram);
  int64_t s = std::max<int64_t>(0, -f.min_coefficient_valuation(p));
  int64_t b = I.scale;
  const Rational& a = I.center;
  bool a_in = a == 0 || valuation(a, p) >= b;
  // classes present among unit residues
  std::map<Residue, int64_t> top;  // class -> top shell exponent k
  std::map<Residue, Rational> class_measure;
  detail::for_each_residue(n, p, [&](const Residue& r) {
    if (!detail::is_unit_residue(r)) return;
    auto key = PRegion::class_key(r, p);
    top[key] = t + region.exponent_for(key, p);
    class_measure[key] += rpow(p, -n);
  });
  Rational total = 0;
  int64_t k1 = static_cast<int64_t>(std::floor((-b - s) / 2.0));
  int64_t kmax = k1, kmin = kInfiniteValuation;
  for (const auto& [key, K] : top) {
    kmax = std::max(kmax, K);
    kmin = std::min(kmin, region.shell ? K : std::min(K, k1) + 1);
    // shells k <= k1 satisfy 2k + b + s <= 0 and need no residue count
    if (region.shell) {
      if (K <= k1 && a_in) total += class_measure[key] * rpow(p, n * K);
    } else if (a_in) {
      total += class_measure[key] * rpow(p, n * std::min(K, k1)) / (1 - rpow(p, -n));
    }
  }
  QuadPoly g = f.scaled(rpow(p, s));
  for (int64_t k = std::max(kmin, k1 + 1); k <= kmax; ++k) {
    Rational target = rpow(p, s + 2 * k) * a;
    if (target != 0 && valuation(target, p) < 0) continue;
    g.c = -target;
    auto accept = [&](const Residue& r) {
      if (!detail::is_unit_residue(r)) return false;
      int64_t K = top.at(PRegion::class_key(r, p));
      return region.shell ? K == k : k <= K;
    };
    total += rpow(p, n * k) * congruence_measure(g, p, 2 * k + b + s, accept);
  }
  return total;
}

// Real place: q(M u) = |u_+|^2 - |u_-|^2.
struct RealFrame {
  size_t n = 0, k = 0, l = 0;
  Eigen::MatrixXd M;
  double det = 0;

  static RealFrame of(const QuadraticFormP& q) {
    if (q.p != kInfPlace) throw Error(ErrorKind::InvalidArgument, "real place expected");
    size_t n = q.n();
    Eigen::MatrixXd B(n, n);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) B(i, j) = q.real_gram[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    const auto& ev = es.eigenvalues();
    double rho = ev.cwiseAbs().maxCoeff();
    RealFrame f;
    f.n = n;
    f.M.resize(n, n);
    f.det = 1;
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < n; ++i) {
      if (std::abs(ev(i)) <= 1e-9 * rho) throw Error(ErrorKind::Degenerate, "real form is degenerate");
      (ev(i) > 0 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) throw Error(ErrorKind::NotIsotropic, "real form is definite");
    size_t c = 0;
    for (auto idx : {&pos, &neg})
      for (size_t i : *idx) {
        double s = 1 / std::sqrt(std::abs(ev(i)));
        f.M.col(c++) = es.eigenvectors().col(i) * s;
        f.det *= s;
      }
    f.k = pos.size();
    f.l = neg.size();
    return f;
  }
};

inline double sphere_area(size_t k) { return 2 * std::pow(M_PI, k / 2.0) / std::tgamma(k / 2.0); }

inline double real_norm(const Eigen::VectorXd& x, RealNorm norm) {
  return norm == RealNorm::Sup ? x.cwiseAbs().maxCoeff() : x.norm();
}

// Stratified direction samples (M w1, M w2), w1 on S^{k-1}, w2 on S^{l-1}.
struct DirectionSample {
  Eigen::VectorXd a, b;
};

inline constexpr size_t kSampleChunks = 16;

inline std::vector<DirectionSample> sample_directions(const RealFrame& fr, size_t samples, uint64_t seed) {
  std::vector<DirectionSample> out(samples);
  boost::math::normal_distribution<double> nd;
  size_t per = (samples + kSampleChunks - 1) / kSampleChunks;
  for (size_t c = 0; c < kSampleChunks; ++c) {
    std::mt19937_64 rng(seed * 1000003ULL + c);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0, 1);
    size_t lo = c * per, hi = std::min(samples, lo + per);
    for (size_t i = lo; i < hi; ++i) {
      Eigen::VectorXd w1(fr.k), w2(fr.l);
      // stratify the first Gaussian coordinate
      double strat = (static_cast<double>(i - lo) + u(rng)) / static_cast<double>(hi - lo);
      strat = std::min(std::max(strat, 1e-15), 1 - 1e-15);
      w1(0) = boost::math::quantile(nd, strat);
      for (size_t j = 1; j < fr.k; ++j) w1(j) = g(rng);
      for (size_t j = 0; j < fr.l; ++j) w2(j) = g(rng);
      w1.normalize();
      w2.normalize();
      Eigen::VectorXd full1 = Eigen::VectorXd::Zero(fr.n), full2 = Eigen::VectorXd::Zero(fr.n);
      full1.head(fr.k) = w1;
      full2.tail(fr.l) = w2;
      out[i] = {fr.M * full1, fr.M * full2};
    }
  }
  return out;
}

struct MeanEstimate {
  double mean = 0, stderr_ = 0;
};

inline MeanEstimate kahan_mean(const std::vector<double>& x) {
  double s = 0, comp = 0;
  for (double v : x) {
    double y = v - comp;
    double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  MeanEstimate e;
  size_t N = x.size();
  if (!N) return e;
  e.mean = s / static_cast<double>(N);
  double ss = 0;
  for (double v : x) ss += (v - e.mean) * (v - e.mean);
  e.stderr_ = N > 1 ? std::sqrt(ss / static_cast<double>(N - 1) / static_cast<double>(N)) : 0.0;
  return e;
}

inline void parallel_for(size_t count, size_t workers, const std::function<void(size_t)>& fn) {
  workers = std::max<size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> th;
  for (size_t w = 0; w < workers; ++w)
    th.emplace_back([&, w] {
      for (size_t i = w; i < count; i += workers) fn(i);
    });
  for (auto& t : th) t.join();
}

struct LambdaInf {
  double value = 0, stderr_ = 0;
  size_t samples = 0;
  uint64_t seed = 0;
};

inline double lambda_inf_factor(const RealFrame& fr) {
  double n2 = static_cast<double>(fr.n) - 2;
  return std::abs(fr.det) * sphere_area(fr.k) * sphere_area(fr.l) / (2 * n2);
}

inline LambdaInf lambda_inf(const QuadraticFormP& q, const InfRegion& region, size_t samples, uint64_t seed,
                            double max_rel_err = 0.05) {
  RealFrame fr = RealFrame::of(q);
  if (fr.n < 3) throw Error(ErrorKind::InvalidArgument, "rank at least 3 expected");
  auto dirs = sample_directions(fr, samples, seed);
  std::vector<double> vals(samples);
  double n2 = static_cast<double>(fr.n) - 2;
  for (size_t i = 0; i < samples; ++i)
    vals[i] = std::pow(region.radius / real_norm(dirs[i].a + dirs[i].b, region.norm), n2);
  auto e = kahan_mean(vals);
  double f = lambda_inf_factor(fr);
  LambdaInf L{e.mean * f, e.stderr_ * f, samples, seed};
  if (!(L.stderr_ <= max_rel_err * L.value))
    throw Error(ErrorKind::PrecisionExhausted, "Monte Carlo error above the configured bound");
  return L;
}

namespace detail {

// Integral of w(eta) over {eta >= 0 : N(c(eta) a + s(eta) b) <= bound} where the
// pair (c, s) is (cosh, sinh) or (sinh, cosh).
inline double eta_integral(const Eigen::VectorXd& a, const Eigen::VectorXd& b, RealNorm norm, double bound, bool swap,
                           size_t k, size_t l) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  auto point = [&](double eta) {
    double ch = std::cosh(eta), sh = std::sinh(eta);
    return swap ? Eigen::VectorXd(sh * a + ch * b) : Eigen::VectorXd(ch * a + sh * b);
  };
  auto inside = [&](double eta) { return real_norm(point(eta), norm) <= bound; };
  auto weight = [&](double eta) {
    double ch = std::cosh(eta), sh = std::sinh(eta);
    double s = swap ? sh : ch, t = swap ? ch : sh;
    return std::pow(s, static_cast<double>(k) - 1) * std::pow(t, static_cast<double>(l) - 1);
  };
  // e^eta |a+b|/2 - |a-b|/2 <= |point| <= kappa N(point)
  double kappa = norm == RealNorm::Sup ? std::sqrt(static_cast<double>(a.size())) : 1.0;
  double plus = (a + b).norm(), minus = (a - b).norm();
  double first = swap ? (b + a).norm() : plus;
  double ub = std::log(std::max(2.0, (2 * kappa * bound + minus + 1e-300) / std::max(first, 1e-300))) + 1;
  const int grid = 48;
  double total = 0;
  bool prev_in = inside(0);
  double start = 0;
  for (int g = 1; g <= grid; ++g) {
    double x = ub * g / grid;
    bool in = inside(x);
    if (in != prev_in || g == grid) {
      double cross = x;
      if (in != prev_in) {
        double lo = ub * (g - 1) / grid, hi = x;
        for (int it = 0; it < 60; ++it) {
          double mid = (lo + hi) / 2;
          (inside(mid) == prev_in ? lo : hi) = mid;
        }
        cross = (lo + hi) / 2;
      }
      if (prev_in) total += GL::integrate(weight, start, cross);
      start = cross;
      prev_in = in;
    }
  }
  return total;
}

// Integral over zeta in (lo, hi), one sign, of |zeta|^{(n-2)/2} G(zeta) / 2.
inline double zeta_integral(const DirectionSample& d, RealNorm norm, double R, double lo, double hi, const RealFrame& fr) {
  using GL = boost::math::quadrature::gauss<double, 30>;
  if (hi <= lo) return 0;
  double n2 = static_cast<double>(fr.n) - 2;
  auto integrand = [&](double zeta) {
    double az = std::abs(zeta);
    if (az == 0) return 0.0;
    double G = eta_integral(d.a, d.b, norm, R / std::sqrt(az), zeta < 0, fr.k, fr.l);
    return 0.5 * std::pow(az, n2 / 2) * G;
  };
  // zeta = edge * u^2 near zero smooths the endpoint
  if (lo >= 0 && lo == 0)
    return GL::integrate([&](double u) { return integrand(hi * u * u) * 2 * hi * u; }, 0.0, 1.0);
  if (hi <= 0 && hi == 0)
    return GL::integrate([&](double u) { return integrand(lo * u * u) * 2 * std::abs(lo) * u; }, 0.0, 1.0);
  return GL::integrate(integrand, lo, hi);
}

}  // namespace detail

struct RealVolume {
  double value = 0, stderr_ = 0;
  double lambda = 0, lambda_stderr = 0;
  double ratio = 0, ratio_stderr = 0;  // value / (lambda (b - a) T^{n-2}), paired samples
};

// vol{v : N(v) <= T R, q(v) in (a, b)} with the direction samples of lambda_inf.
inline RealVolume volume_inf(const QuadraticFormP& q, double a, double b, const InfRegion& region, double T,
                             size_t samples, uint64_t seed, size_t workers = 1) {
  RealVolume out;
  if (!(b > a)) return out;
  RealFrame fr = RealFrame::of(q);
  auto dirs = sample_directions(fr, samples, seed);
  double n2 = static_cast<double>(fr.n) - 2;
  double R = T * region.radius;
  std::vector<double> vol(samples), lam(samples);
  parallel_for(kSampleChunks, workers, [&](size_t c) {
    size_t per = (samples + kSampleChunks - 1) / kSampleChunks;
    for (size_t i = c * per; i < std::min(samples, (c + 1) * per); ++i) {
      const auto& d = dirs[i];
      double v = 0;
      if (a < 0 && b > 0) {
        v = detail::zeta_integral(d, region.norm, R, a, 0, fr) + detail::zeta_integral(d, region.norm, R, 0, b, fr);
      } else {
        v = detail::zeta_integral(d, region.norm, R, a, b, fr);
      }
      vol[i] = v;
      lam[i] = std::pow(region.radius / real_norm(d.a + d.b, region.norm), n2) / (2 * n2);
    }
  });
  double f = std::abs(fr.det) * sphere_area(fr.k) * sphere_area(fr.l);
  auto ev = kahan_mean(vol), el = kahan_mean(lam);
  out.value = ev.mean * f;
  out.stderr_ = ev.stderr_ * f;
  out.lambda = el.mean * f;
  out.lambda_stderr = el.stderr_ * f;
  double scale = (b - a) * std::pow(T, n2);
  out.ratio = ev.mean / (el.mean * scale);
  // delta method on the paired ratio
  std::vector<double> resid(samples);
  for (size_t i = 0; i < samples; ++i) resid[i] = vol[i] / scale - out.ratio * lam[i];
  out.ratio_stderr = kahan_mean(resid).stderr_ / el.mean;
  return out;
}

struct LambdaConstants {
  std::map<int64_t, LambdaP> finite;
  LambdaInf inf;
  double product = 0, stderr_ = 0;
};

inline LambdaConstants lambda_all(const QuadraticFormS& q, const Region& omega, size_t samples, uint64_t seed) {
  q.validate();
  LambdaConstants L;
  L.inf = lambda_inf(q.inf, omega.inf, samples, seed);
  double fin = 1;
  for (const auto& [p, qp] : q.finite) {
    L.finite[p] = lambda_p(qp, omega.at(p));
    fin *= L.finite[p].value.get_d();
  }
  L.product = L.inf.value * fin;
  L.stderr_ = L.inf.stderr_ * fin;
  return L;
}

struct VolumeResult {
  double value = 0, stderr_ = 0;
  RealVolume inf;
  std::map<int64_t, Rational> finite;
  double prediction = 0;  // lambda |I| ||T||^{n-2}
  double ratio = 0, ratio_stderr = 0;
};

inline VolumeResult volume_V(const QuadraticFormS& q, const SInterval& I, const Region& omega, const STime& T,
                             size_t samples, uint64_t seed, size_t workers = 1) {
  q.validate();
  VolumeResult r;
  if (!(I.b_inf > I.a_inf)) return r;
  r.inf = volume_inf(q.inf, I.a_inf, I.b_inf, omega.inf, T.T_inf, samples, seed, workers);
  double fin = 1, fin_pred = 1;
  double n2 = static_cast<double>(q.n) - 2;
  for (const auto& [p, qp] : q.finite) {
    auto it = T.n.find(p);
    int64_t t = it == T.n.end() ? 0 : it->second;
    auto Ii = I.finite.find(p);
    PInterval Ip = Ii == I.finite.end() ? PInterval{} : Ii->second;
    r.finite[p] = volume_p(qp, Ip, omega.at(p), t);
    fin *= r.finite[p].get_d();
    fin_pred *= lambda_p(qp, omega.at(p)).value.get_d() * std::pow(static_cast<double>(p), -static_cast<double>(Ip.scale)) *
                std::pow(static_cast<double>(p), n2 * static_cast<double>(t));
  }
  r.value = r.inf.value * fin;
  r.stderr_ = r.inf.stderr_ * fin;
  r.prediction = r.inf.lambda * (I.b_inf - I.a_inf) * std::pow(T.T_inf, n2) * fin_pred;
  r.ratio = r.inf.ratio * fin / fin_pred;
  r.ratio_stderr = r.inf.ratio_stderr * fin / fin_pred;
  return r;
}

}  // namespace sqf
