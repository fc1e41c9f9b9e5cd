#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "padic.hpp"
#include "volume.hpp"

namespace sqf {

namespace detail {

inline int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline int64_t pmod(int64_t a, int64_t m) {
  int64_t r = a % m;
  return r < 0 ? r + m : r;
}

inline int64_t isqrt_floor(int64_t x) {
  if (x < 0) return -1;
  auto r = static_cast<int64_t>(std::sqrt(static_cast<long double>(x)));
  while (r > 0 && r * r > x) --r;
  while ((r + 1) * (r + 1) <= x) ++r;
  return r;
}

inline Int floor_of(const Rational& x) {
  Int q;
  mpz_fdiv_q(q.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
  return q;
}

inline Int ceil_of(const Rational& x) {
  Int q;
  mpz_cdiv_q(q.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
  return q;
}

inline __int128 to_i128(const Int& x) {
  Int cap = Int(1) << 100;
  if (abs(x) > cap) return x < 0 ? -(static_cast<__int128>(1) << 100) : (static_cast<__int128>(1) << 100);
  std::string s = x.get_str();
  bool neg = s[0] == '-';
  __int128 r = 0;
  for (size_t i = neg ? 1 : 0; i < s.size(); ++i) r = r * 10 + (s[i] - '0');
  return neg ? -r : r;
}

}  // namespace detail

// Residue data of one finite place: which residues of w mod p^level satisfy
// the interval and norm conditions. Places whose table would exceed the
// budget are checked point by point instead.
struct PlaceCongruence {
  int64_t p = 0;
  int64_t k = 0;        // exponent of p in D
  int64_t q_level = 0;  // digits of p^s q(w) that are compared
  int64_t level = 0;
  int64_t modulus = 1;
  bool direct = false;
  double admitted = 1;        // fraction of all residues of w admitted
  double inner_admitted = 1;  // fraction of innermost prefix residues visited
  std::vector<uint8_t> ok;    // prefix code * modulus + last residue
  std::vector<std::vector<int32_t>> last;
  std::vector<std::vector<int32_t>> inner;

  // data of the pointwise test
  bool const_ok = true, use_q = false;
  int64_t PL = 1, tm = 0, e_max = 0;
  std::vector<std::vector<int64_t>> G;  // p^s B mod p^L, off-diagonal doubled
  PRegion region;

  // w in original coordinate order; any integers, or residues mod p^level
  bool admits(const int64_t* w, size_t n) const {
    if (!const_ok) return false;
    if (use_q) {
      __int128 acc = 0;
      for (size_t i = 0; i < n; ++i) {
        int64_t wi = detail::pmod(w[i], PL);
        if (!wi) continue;
        int64_t row = static_cast<int64_t>(static_cast<__int128>(G[i][i]) * wi % PL);
        for (size_t j = i + 1; j < n; ++j)
          row = static_cast<int64_t>((row + static_cast<__int128>(G[i][j]) * detail::pmod(w[j], PL)) % PL);
        acc = (acc + static_cast<__int128>(row) * wi) % PL;
      }
      if (static_cast<int64_t>(acc) != tm) return false;
    }
    int64_t m = level;
    for (size_t i = 0; i < n && m > 0; ++i) {
      int64_t x = w[i], v = 0;
      if (x == 0) continue;
      while (v < m && x % p == 0) {
        x /= p;
        ++v;
      }
      m = std::min(m, v);
    }
    if (m >= level) return !region.shell;
    int64_t pm = 1;
    for (int64_t e = 0; e < m; ++e) pm *= p;
    std::vector<int64_t> u(n);
    for (size_t i = 0; i < n; ++i) u[i] = detail::pmod(w[i] / pm, p);
    int64_t d = e_max - region.exponent_for(u, p);
    return region.shell ? m == d : m >= d;
  }
};

struct EnumerationPlan {
  size_t n = 0;
  Rational D = 1;
  int64_t box = 0;  // sup bound on |w_i|
  bool euclid = false;
  int64_t box_sq = 0;  // floor of the squared Euclidean bound
  bool exact_real = true;
  bool empty = false;
  std::vector<size_t> order;  // order[n-1] is resolved by interval
  std::optional<size_t> stride_place;
  std::vector<PlaceCongruence> places;
  double est_prefixes = 0, est_cost = 0;
};

struct CountResult {
  uint64_t count = 0;
  uint64_t undecided = 0;
  EnumerationPlan plan;
  double wall_ms = 0;
};

namespace detail {

inline PlaceCongruence build_place(const QuadraticFormP& qp, const PInterval& I, const PRegion& R, const Rational& D,
                                   const std::vector<size_t>& order, size_t budget) {
  int64_t p = qp.p;
  size_t n = qp.n();
  PlaceCongruence pc;
  pc.p = p;
  pc.region = R;
  pc.k = valuation(D, p);
  int64_t s = std::max<int64_t>(0, -min_valuation(qp.gram, p));
  int64_t L = 2 * pc.k + I.scale + s;
  pc.q_level = L;
  if (qp.prec < kInfiniteValuation && qp.prec + s < L)
    throw Error(ErrorKind::PrecisionExhausted, "form digits do not decide the interval at p = " + std::to_string(p));
  Rational t = rpow(p, s) * D * D * I.center;
  int64_t vt = val_or_inf(t, p);

  pc.e_max = R.max_exponent();
  int64_t e_min = R.exponent;
  for (const auto& [_, e] : R.table) e_min = std::min(e_min, e);
  int64_t l = std::max<int64_t>({L, pc.e_max - e_min + 1, 1});
  if (std::pow(static_cast<double>(p), static_cast<double>(l)) > 4e18)
    throw Error(ErrorKind::BudgetExceeded, "p-adic level too deep at p = " + std::to_string(p));
  pc.level = l;

  // interval condition: v(p^s q(w) - t) >= L
  if (L <= 0) {
    pc.const_ok = std::min<int64_t>(vt, 0) >= L;
  } else if (vt < 0) {
    pc.const_ok = false;
  } else {
    pc.use_q = true;
    pc.PL = to_int64(ipow(p, L));
    pc.tm = to_int64(rational_mod(t, p, L));
    pc.G.assign(n, std::vector<int64_t>(n, 0));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        Int g = rational_mod(rpow(p, s) * qp.gram[i][j], p, L);
        if (i != j) g = mod(2 * g, Int(pc.PL));
        pc.G[i][j] = to_int64(g);
      }
  }

  double total = std::pow(static_cast<double>(p), static_cast<double>(l * static_cast<int64_t>(n)));
  if (total > static_cast<double>(budget)) {
    pc.direct = true;
    pc.modulus = 1;
    pc.admitted = pc.inner_admitted = 1;
    return pc;
  }
  int64_t P = to_int64(ipow(p, l));
  pc.modulus = P;
  size_t prefix_codes = 1;
  for (size_t i = 0; i + 1 < n; ++i) prefix_codes *= static_cast<size_t>(P);
  size_t outer_codes = prefix_codes / static_cast<size_t>(P);
  pc.ok.assign(prefix_codes * static_cast<size_t>(P), 0);
  pc.last.assign(prefix_codes, {});
  pc.inner.assign(outer_codes, {});
  if (!pc.const_ok) {
    pc.admitted = pc.inner_admitted = 0;
    return pc;
  }

  std::vector<int64_t> r(n, 0), w(n, 0);
  size_t admitted = 0;
  while (true) {
    for (size_t i = 0; i < n; ++i) w[order[i]] = r[i];
    if (pc.admits(w.data(), n)) {
      size_t code = 0;
      for (size_t i = 0; i + 1 < n; ++i) code = code * static_cast<size_t>(P) + static_cast<size_t>(r[i]);
      pc.ok[code * static_cast<size_t>(P) + static_cast<size_t>(r[n - 1])] = 1;
      pc.last[code].push_back(static_cast<int32_t>(r[n - 1]));
      ++admitted;
    }
    bool done = true;
    for (size_t i = n; i-- > 0;) {
      if (++r[i] < P) {
        done = false;
        break;
      }
      r[i] = 0;
    }
    if (done) break;
  }
  pc.admitted = static_cast<double>(admitted) / total;
  size_t visited = 0;
  for (size_t oc = 0; oc < outer_codes; ++oc)
    for (int64_t x = 0; x < P; ++x)
      if (!pc.last[oc * static_cast<size_t>(P) + static_cast<size_t>(x)].empty()) {
        pc.inner[oc].push_back(static_cast<int32_t>(x));
        ++visited;
      }
  pc.inner_admitted = static_cast<double>(visited) / static_cast<double>(prefix_codes);
  return pc;
}

inline Rational exact_or(const std::optional<Rational>& e, double d) { return e ? *e : Rational(d); }

}  // namespace detail

// Plans the enumeration of w = D v in Z^n. The last coordinate is picked by a
// dry-run cost estimate over all candidates.
inline EnumerationPlan make_plan(const QuadraticFormS& q, const SInterval& I, const Region& omega, const STime& T,
                                 size_t budget = 20000000) {
  q.validate();
  size_t n = q.n;
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "counting needs n >= 2");
  for (const auto& [p, e] : T.n) {
    if (!q.finite.count(p)) throw Error(ErrorKind::InvalidArgument, "time given at a prime outside S");
    if (e < 0) throw Error(ErrorKind::InvalidArgument, "n_p < 0 is not supported");
  }
  for (const auto& [p, _] : I.finite)
    if (!q.finite.count(p)) throw Error(ErrorKind::InvalidArgument, "interval given at a prime outside S");
  for (const auto& [p, _] : omega.finite)
    if (!q.finite.count(p)) throw Error(ErrorKind::InvalidArgument, "region given at a prime outside S");
  if (!(T.T_inf > 0) || !(omega.inf.radius > 0)) throw Error(ErrorKind::InvalidArgument, "real dilation must be positive");

  EnumerationPlan plan;
  plan.n = n;
  plan.exact_real = q.inf.exact;
  if (q.inf.gram.empty()) throw Error(ErrorKind::InvalidArgument, "real Gram missing");
  plan.euclid = omega.inf.norm == RealNorm::Euclid;
  for (const auto& [p, qp] : q.finite) {
    auto it = T.n.find(p);
    int64_t np = it == T.n.end() ? 0 : it->second;
    plan.D *= rpow(p, np + omega.at(p).max_exponent());
  }
  Rational Tr = detail::exact_or(T.T_inf_exact, T.T_inf) * detail::exact_or(omega.inf.radius_exact, omega.inf.radius);
  Rational bound = plan.D * Tr;
  if (plan.euclid) {
    plan.box_sq = to_int64(detail::floor_of(Rational(bound * bound)));
    plan.box = detail::isqrt_floor(plan.box_sq);
  } else {
    plan.box = to_int64(detail::floor_of(bound));
  }
  if (plan.box > 2000000) throw Error(ErrorKind::BudgetExceeded, "integer box too large");
  plan.empty = !(I.b_inf > I.a_inf);

  double best = -1;
  for (size_t last = n; last-- > 0;) {
    std::vector<size_t> order;
    for (size_t i = 0; i < n; ++i)
      if (i != last) order.push_back(i);
    order.push_back(last);
    std::vector<PlaceCongruence> places;
    for (const auto& [p, qp] : q.finite) {
      auto it = T.n.find(p);
      auto Ii = I.finite.find(p);
      (void)it;
      places.push_back(
          detail::build_place(qp, Ii == I.finite.end() ? PInterval{} : Ii->second, omega.at(p), plan.D, order, budget));
    }
    std::optional<size_t> stride;
    double frac = 1, list = 1;
    for (size_t t = 0; t < places.size(); ++t) {
      if (places[t].direct) {
        list *= 2.0 * static_cast<double>(plan.box) + 1;
        continue;
      }
      if (!stride || places[t].inner_admitted < places[*stride].inner_admitted) stride = t;
      double pre = places[t].inner_admitted > 0 ? places[t].admitted / places[t].inner_admitted : 0;
      list *= pre * static_cast<double>(places[t].modulus);
    }
    if (stride) frac = places[*stride].inner_admitted;
    double prefixes = std::pow(2.0 * static_cast<double>(plan.box) + 1, static_cast<double>(n - 1)) * frac;
    double cost = prefixes * (8 + list);
    if (best < 0 || cost < best) {
      best = cost;
      plan.order = order;
      plan.places = std::move(places);
      plan.stride_place = stride;
      plan.est_prefixes = prefixes;
      plan.est_cost = cost;
    }
  }
  return plan;
}

namespace detail {

struct Tally {
  uint64_t count = 0, undecided = 0;
};

// Resolves the last coordinate x in [lo, hi] for a fixed prefix.
// eval(x) returns 0 (out), 1 (in) or 2 (undecided); roots are the approximate
// points where eval may change; allowed(x) checks residues; ap(g0, g1) counts
// admissible residues in a gap.
template <class Eval, class Allowed, class Ap>
inline void sweep(int64_t lo, int64_t hi, long double* roots, int nr, Eval eval, Allowed allowed, Ap ap, Tally& t) {
  if (lo > hi) return;
  int64_t wl[4], wh[4];
  int nw = 0;
  std::sort(roots, roots + nr);
  for (int i = 0; i < nr; ++i) {
    long double r = roots[i];
    if (!(r > static_cast<long double>(lo) - 3) || !(r < static_cast<long double>(hi) + 3)) continue;
    int64_t f = static_cast<int64_t>(std::floor(r));
    int64_t a = std::max(lo, f - 1), b = std::min(hi, f + 2);
    if (a > b) continue;
    if (nw > 0 && a <= wh[nw - 1] + 1) {
      wh[nw - 1] = std::max(wh[nw - 1], b);
    } else {
      wl[nw] = a;
      wh[nw] = b;
      ++nw;
    }
  }
  auto gap = [&](int64_t g0, int64_t g1) {
    if (g0 > g1) return;
    int64_t mid = g0 + (g1 - g0) / 2;
    int e = eval(mid);
    if (e == 1) {
      t.count += ap(g0, g1);
    } else if (e == 2) {
      for (int64_t x = g0; x <= g1; ++x)
        if (allowed(x)) {
          int f = eval(x);
          if (f == 1) ++t.count;
          else if (f == 2) ++t.undecided;
        }
    }
  };
  int64_t cur = lo;
  for (int i = 0; i < nw; ++i) {
    gap(cur, wl[i] - 1);
    for (int64_t x = wl[i]; x <= wh[i]; ++x)
      if (allowed(x)) {
        int f = eval(x);
        if (f == 1) ++t.count;
        else if (f == 2) ++t.undecided;
      }
    cur = wh[i] + 1;
  }
  gap(cur, hi);
}

inline int quad_roots(long double A, long double B, long double C, long double* out) {
  if (A == 0) {
    if (B == 0) return 0;
    out[0] = -C / B;
    return 1;
  }
  long double disc = B * B - 4 * A * C;
  if (disc < 0) return 0;
  long double s = std::sqrt(disc);
  out[0] = (-B - s) / (2 * A);
  out[1] = (-B + s) / (2 * A);
  return 2;
}

inline int quad_roots_exact(__int128 A, __int128 B, __int128 C, long double* out) {
  if (A == 0) {
    if (B == 0) return 0;
    out[0] = -static_cast<long double>(C) / static_cast<long double>(B);
    return 1;
  }
  __int128 disc = B * B - 4 * A * C;
  if (disc < 0) return 0;
  long double s = std::sqrt(static_cast<long double>(disc));
  out[0] = (-static_cast<long double>(B) - s) / (2 * static_cast<long double>(A));
  out[1] = (-static_cast<long double>(B) + s) / (2 * static_cast<long double>(A));
  return 2;
}

// The real form splits into an exact rational part, scaled to integers, and
// an optional inexact part carried in long double with an error budget.
class Kernel {
 public:
  Kernel(const EnumerationPlan& plan, const QuadraticFormS& q, const SInterval& I) : P_(plan), n_(plan.n) {
    size_t n = n_;
    const auto& o = plan.order;
    Rational D2 = plan.D * plan.D;
    Rational a = D2 * detail::exact_or(I.a_exact, I.a_inf), b = D2 * detail::exact_or(I.b_exact, I.b_inf);
    Int den = lcm(Int(a.get_den()), Int(b.get_den()));
    for (auto& row : q.inf.gram)
      for (auto& x : row) den = lcm(den, Int(x.get_den()));
    den_ = den.get_d();
    G_.assign(n, std::vector<int64_t>(n));
    Int gmax = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        Int g(Rational(q.inf.gram[o[i]][o[j]] * den));
        gmax = std::max(gmax, Int(abs(g)));
        G_[i][j] = to_int64(g);
      }
    double bx = static_cast<double>(plan.box) * static_cast<double>(n);
    if (gmax.get_d() * bx * bx > 1e17) throw Error(ErrorKind::BudgetExceeded, "real values exceed the integer path");
    La_ = to_i128(Int(Rational(a * den)));
    Lb_ = to_i128(Int(Rational(b * den)));
    const __int128 cap = static_cast<__int128>(1) << 80;
    La_ = std::clamp(La_, -cap, cap);
    Lb_ = std::clamp(Lb_, -cap, cap);
    if (!q.inf.exact) {
      irr_ = true;
      Gd_.assign(n, std::vector<long double>(n));
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) Gd_[i][j] = q.inf.irr[o[i]][o[j]];
    }
    for (size_t t = 0; t < plan.places.size(); ++t) {
      if (plan.places[t].direct) {
        dir_.push_back(&plan.places[t]);
        continue;
      }
      tab_.push_back(&plan.places[t]);
      mods_.push_back(plan.places[t].modulus);
      M_ *= plan.places[t].modulus;
      if (plan.stride_place && *plan.stride_place == t) stride_ = tab_.size() - 1;
    }
    if (tab_.size() > 8) throw Error(ErrorKind::InvalidArgument, "too many primes");
    for (size_t t = 0; t < mods_.size(); ++t) {
      int64_t Mt = M_ / mods_[t];
      int64_t inv = to_int64(inverse_mod(Int(Mt % mods_[t]), Int(mods_[t])));
      crt_.push_back(static_cast<int64_t>(static_cast<__int128>(Mt) * inv % M_));
    }
    orig_.assign(n, 0);
  }

  // Counts prefixes whose first coordinate lies in [a, b].
  Tally run(int64_t a, int64_t b) {
    Tally t;
    State s;
    s.acc.assign(n_, 0);
    s.accd.assign(n_, 0);
    s.acca.assign(n_, 0);
    s.codes.assign(mods_.size(), 0);
    if (n_ == 2) {
      inner_loop(s, a, b, t);
      return t;
    }
    outer(s, 0, a, b, t);
    return t;
  }

 private:
  struct State {
    std::vector<int64_t> acc;                // sum over assigned i of G[i][j] w_i
    std::vector<long double> accd, acca;     // same for the inexact part and its absolute value
    int64_t C = 0;
    long double Cd = 0, Ca = 0;
    int64_t sumsq = 0;
    std::vector<size_t> codes;
  };

  std::pair<int64_t, int64_t> range(const State& s) const {
    if (!P_.euclid) return {-P_.box, P_.box};
    int64_t r = isqrt_floor(P_.box_sq - s.sumsq);
    return {-r, r};
  }

  void assign(State& s, size_t d, int64_t w) {
    s.C += w * (2 * s.acc[d] + G_[d][d] * w);
    for (size_t j = d + 1; j < n_; ++j) s.acc[j] += G_[d][j] * w;
    if (irr_) {
      long double x = static_cast<long double>(w), ax = std::fabs(x);
      s.Cd += x * (2 * s.accd[d] + Gd_[d][d] * x);
      s.Ca += ax * (2 * s.acca[d] + std::fabs(Gd_[d][d]) * ax);
      for (size_t j = d + 1; j < n_; ++j) {
        s.accd[j] += Gd_[d][j] * x;
        s.acca[j] += std::fabs(Gd_[d][j]) * ax;
      }
    }
    s.sumsq += w * w;
    for (size_t t = 0; t < mods_.size(); ++t)
      s.codes[t] = s.codes[t] * static_cast<size_t>(mods_[t]) + static_cast<size_t>(pmod(w, mods_[t]));
    orig_[P_.order[d]] = w;
  }

  void outer(const State& s, size_t d, int64_t a, int64_t b, Tally& t) {
    auto [lo, hi] = range(s);
    if (d == 0) {
      lo = std::max(lo, a);
      hi = std::min(hi, b);
    }
    for (int64_t w = lo; w <= hi; ++w) {
      State c = s;
      assign(c, d, w);
      if (d + 3 == n_) inner_loop(c, INT64_MIN, INT64_MAX, t);
      else outer(c, d + 1, a, b, t);
    }
  }

  void inner_loop(const State& s, int64_t a, int64_t b, Tally& t) {
    auto [lo, hi] = range(s);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
    if (lo > hi) return;
    size_t d = n_ - 2;
    if (stride_) {
      size_t sp = *stride_;
      int64_t Ps = mods_[sp];
      for (int32_t r : tab_[sp]->inner[s.codes[sp]])
        for (int64_t w = lo + pmod(r - lo, Ps); w <= hi; w += Ps) prefix(s, d, w, t);
    } else {
      for (int64_t w = lo; w <= hi; ++w) prefix(s, d, w, t);
    }
  }

  void prefix(const State& s, size_t d, int64_t w, Tally& t) {
    size_t nt = tab_.size();
    size_t codes[8];
    for (size_t k = 0; k < nt; ++k) {
      codes[k] = s.codes[k] * static_cast<size_t>(mods_[k]) + static_cast<size_t>(pmod(w, mods_[k]));
      if (tab_[k]->last[codes[k]].empty()) return;
    }
    int64_t xr = P_.box;
    if (P_.euclid) {
      xr = isqrt_floor(P_.box_sq - s.sumsq - w * w);
      if (xr < 0) return;
    }
    size_t l = n_ - 1;
    orig_[P_.order[d]] = w;
    __int128 A = G_[l][l];
    __int128 B = 2 * (static_cast<__int128>(s.acc[l]) + static_cast<__int128>(G_[d][l]) * w);
    __int128 C = s.C + static_cast<__int128>(w) * (2 * s.acc[d] + G_[d][d] * w);

    auto allowed = [&](int64_t x) {
      for (size_t k = 0; k < nt; ++k)
        if (!tab_[k]->ok[codes[k] * static_cast<size_t>(mods_[k]) + static_cast<size_t>(pmod(x, mods_[k]))])
          return false;
      if (!dir_.empty()) {
        orig_[P_.order[l]] = x;
        for (const auto* pc : dir_)
          if (!pc->admits(orig_.data(), n_)) return false;
      }
      return true;
    };
    int64_t combo[64];
    size_t ncombo = 0;
    bool pointwise = !dir_.empty();
    if (nt > 1 && !pointwise) {
      size_t total = 1;
      for (size_t k = 0; k < nt; ++k) total *= tab_[k]->last[codes[k]].size();
      if (total > 64) {
        pointwise = true;
      } else {
        combo[0] = 0;
        ncombo = 1;
        for (size_t k = 0; k < nt; ++k) {
          const auto& L = tab_[k]->last[codes[k]];
          size_t m = ncombo;
          ncombo = 0;
          int64_t tmp[64];
          for (size_t i = 0; i < m; ++i)
            for (int32_t r : L)
              tmp[ncombo++] = (combo[i] + static_cast<int64_t>(static_cast<__int128>(r) * crt_[k] % M_)) % M_;
          std::copy(tmp, tmp + ncombo, combo);
        }
      }
    }
    auto ap = [&](int64_t g0, int64_t g1) -> uint64_t {
      if (pointwise) {
        uint64_t c = 0;
        for (int64_t x = g0; x <= g1; ++x) c += allowed(x);
        return c;
      }
      if (nt == 0) return static_cast<uint64_t>(g1 - g0 + 1);
      if (nt == 1) {
        uint64_t c = 0;
        int64_t m = mods_[0];
        for (int32_t r : tab_[0]->last[codes[0]])
          c += static_cast<uint64_t>(floor_div(g1 - r, m) - floor_div(g0 - 1 - r, m));
        return c;
      }
      uint64_t c = 0;
      for (size_t i = 0; i < ncombo; ++i)
        c += static_cast<uint64_t>(floor_div(g1 - combo[i], M_) - floor_div(g0 - 1 - combo[i], M_));
      return c;
    };

    long double roots[4];
    int nr = 0;
    if (!irr_) {
      nr += quad_roots_exact(A, B, C - La_, roots + nr);
      nr += quad_roots_exact(A, B, C - Lb_, roots + nr);
      auto eval = [&](int64_t x) {
        __int128 X = x;
        __int128 f = (A * X + B) * X + C;
        return (f > La_ && f < Lb_) ? 1 : 0;
      };
      sweep(-xr, xr, roots, nr, eval, allowed, ap, t);
      return;
    }
    long double wd = static_cast<long double>(w), aw = std::fabs(wd);
    long double Ad = Gd_[l][l], Aa = std::fabs(Ad);
    long double Bd = 2 * (s.accd[l] + Gd_[d][l] * wd), Ba = 2 * (s.acca[l] + std::fabs(Gd_[d][l]) * aw);
    long double Cd = s.Cd + wd * (2 * s.accd[d] + Gd_[d][d] * wd);
    long double Ca = s.Ca + aw * (2 * s.acca[d] + std::fabs(Gd_[d][d]) * aw);
    long double At = static_cast<long double>(A) / den_ + Ad, Bt = static_cast<long double>(B) / den_ + Bd,
                Ct = static_cast<long double>(C) / den_ + Cd;
    nr += quad_roots(At, Bt, Ct - static_cast<long double>(La_) / den_, roots + nr);
    nr += quad_roots(At, Bt, Ct - static_cast<long double>(Lb_) / den_, roots + nr);
    auto eval = [&](int64_t x) {
      __int128 X = x;
      __int128 E = (A * X + B) * X + C;
      long double xd = static_cast<long double>(x), ax = std::fabs(xd);
      long double F = (Ad * xd + Bd) * xd + Cd;
      long double Fa = (Aa * ax + Ba) * ax + Ca;
      if (Fa == 0) return (E > La_ && E < Lb_) ? 1 : 0;
      long double da = static_cast<long double>(E - La_) / den_, db = static_cast<long double>(E - Lb_) / den_;
      long double ta = da + F, tb = db + F;
      long double ea = 0x1p-48L * Fa + 0x1p-60L * std::fabs(da), eb = 0x1p-48L * Fa + 0x1p-60L * std::fabs(db);
      if (std::fabs(ta) <= ea || std::fabs(tb) <= eb) return 2;
      return (ta > 0 && tb < 0) ? 1 : 0;
    };
    sweep(-xr, xr, roots, nr, eval, allowed, ap, t);
  }

  const EnumerationPlan& P_;
  size_t n_;
  std::vector<std::vector<int64_t>> G_;
  long double den_ = 1;
  __int128 La_ = 0, Lb_ = 0;
  bool irr_ = false;
  std::vector<std::vector<long double>> Gd_;
  std::vector<const PlaceCongruence*> tab_, dir_;
  std::optional<size_t> stride_;
  std::vector<int64_t> mods_, crt_;
  int64_t M_ = 1;
  std::vector<int64_t> orig_;  // current vector in original coordinates
};

}  // namespace detail

inline size_t default_workers() {
  if (const char* e = std::getenv("SQF_WORKERS")) {
    long v = std::strtol(e, nullptr, 10);
    if (v > 0) return static_cast<size_t>(v);
  }
  return 1;
}

inline CountResult count_with_plan(const EnumerationPlan& plan, const QuadraticFormS& q, const SInterval& I,
                                   size_t workers = 1) {
  auto t0 = std::chrono::steady_clock::now();
  CountResult res;
  res.plan = plan;
  if (!plan.empty) {
    bool lists = std::all_of(plan.places.begin(), plan.places.end(), [](const PlaceCongruence& pc) { return pc.admitted > 0; });
    if (lists) {
      // disjoint slabs of the first coordinate
      int64_t lo = -plan.box, hi = plan.box;
      size_t chunks = plan.n == 2 ? 1 : std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(hi - lo + 1), 4 * workers));
      std::vector<detail::Tally> part(chunks);
      int64_t span = hi - lo + 1;
      auto body = [&](size_t c) {
        int64_t a = lo + span * static_cast<int64_t>(c) / static_cast<int64_t>(chunks);
        int64_t b = lo + span * static_cast<int64_t>(c + 1) / static_cast<int64_t>(chunks) - 1;
        if (plan.n == 2) {
          a = INT64_MIN;
          b = INT64_MAX;
        }
        part[c] = detail::Kernel(plan, q, I).run(a, b);
      };
      parallel_for(chunks, workers, body);
      for (auto& t : part) {
        res.count += t.count;
        res.undecided += t.undecided;
      }
    }
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// N(T): S-integral v with ||v||_inf <= T_inf rho_inf, ||v||_p <= T_p rho_p(class),
// q_inf(v) in (a, b) and q_p(v) in I_p.
inline CountResult count_N(const QuadraticFormS& q, const SInterval& I, const Region& omega, const STime& T,
                           size_t workers = 1) {
  EnumerationPlan plan = make_plan(q, I, omega, T);
  return count_with_plan(plan, q, I, workers);
}

// Exact membership of one vector v in Z_S^n in the counting set.
inline bool in_count_region(const QuadraticFormS& q, const SInterval& I, const Region& omega, const STime& T,
                            const std::vector<Rational>& v) {
  size_t n = q.n;
  if (v.size() != n) throw Error(ErrorKind::InvalidArgument, "dimension mismatch");
  auto primes = q.primes();
  for (const auto& x : v) {
    Int d = x.get_den();
    for (int64_t p : primes) d = strip(d, p);
    if (d != 1) return false;
  }
  Rational Tr = detail::exact_or(T.T_inf_exact, T.T_inf) * detail::exact_or(omega.inf.radius_exact, omega.inf.radius);
  if (omega.inf.norm == RealNorm::Sup) {
    for (const auto& x : v)
      if (abs(x) > Tr) return false;
  } else {
    Rational s = 0;
    for (const auto& x : v) s += x * x;
    if (s > Tr * Tr) return false;
  }
  {
    // inexact entries are taken at their double values
    Rational val = qvalue(q.inf.gram, v);
    if (!q.inf.exact) {
      RMatrix irr(n, std::vector<Rational>(n));
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) irr[i][j] = Rational(q.inf.irr[i][j]);
      val += qvalue(irr, v);
    }
    if (!(val > detail::exact_or(I.a_exact, I.a_inf)) || !(val < detail::exact_or(I.b_exact, I.b_inf))) return false;
  }
  for (int64_t p : primes) {
    auto it = T.n.find(p);
    int64_t np = it == T.n.end() ? 0 : it->second;
    const PRegion& R = omega.at(p);
    int64_t m = kInfiniteValuation;
    for (const auto& x : v) m = std::min(m, detail::val_or_inf(x, p));
    if (m < kInfiniteValuation) {
      std::vector<int64_t> u(n);
      for (size_t i = 0; i < n; ++i) u[i] = to_int64(rational_mod(v[i] * rpow(p, -m), p, 1));
      int64_t e = np + R.exponent_for(u, p);
      if (R.shell ? -m != e : -m > e) return false;
    } else if (R.shell) {
      return false;
    }
    if (!I.contains_p(p, qvalue(q.finite.at(p).gram, v))) return false;
  }
  return true;
}

// Zeros of x1 x2 - x3^2 from the parametrization a k (u^2, v^2, u v), and their
// images on the zero set of x1^2 + x2^2 - alpha^2 x3^2.
struct NullVector {
  std::vector<Rational> y, x;
  Int k, u, v;
};

struct NullFamily {
  Rational a;
  RMatrix A;  // x = A y
  std::vector<NullVector> vectors;
};

inline RMatrix null_transport(const Rational& alpha) {
  Rational al = abs(alpha);
  Rational r = al.get_num(), s = al.get_den();
  return {{r, -r, 0}, {0, 0, 2 * r}, {-s, -s, 0}};
}

inline NullFamily null_vectors(const Rational& alpha, const STime& T) {
  NullFamily F;
  F.a = 1;
  for (const auto& [p, e] : T.n) {
    if (e < 0) throw Error(ErrorKind::InvalidArgument, "T_p must be at least 1");
    F.a *= rpow(p, -e);
  }
  F.A = null_transport(alpha);
  Rational Tinf = detail::exact_or(T.T_inf_exact, T.T_inf);
  auto coprime_to_S = [&](const Int& x) {
    for (const auto& [p, _] : T.n)
      if (mod(x, Int(p)) == 0) return false;
    return true;
  };
  Int kmax = detail::floor_of(Rational(Tinf / (3 * F.a)));
  for (Int k = 1; k <= kmax; ++k) {
    if (!coprime_to_S(k)) continue;
    Int bound = detail::floor_of(Rational(Tinf / (3 * F.a * k)));
    Int umax = sqrt(bound);
    for (Int u = 1; u <= umax; ++u) {
      if (!coprime_to_S(u)) continue;
      for (Int v = -umax; v <= umax; ++v) {
        if (v == 0 || !coprime_to_S(v) || gcd(u, v) != 1) continue;
        for (int sg : {1, -1}) {
          NullVector nv;
          nv.k = sg * k;
          nv.u = u;
          nv.v = v;
          Rational ak = F.a * nv.k;
          nv.y = {ak * u * u, ak * v * v, ak * u * v};
          nv.x.assign(3, Rational(0));
          for (size_t i = 0; i < 3; ++i)
            for (size_t j = 0; j < 3; ++j) nv.x[i] += F.A[i][j] * nv.y[j];
          F.vectors.push_back(std::move(nv));
        }
      }
    }
  }
  return F;
}

// y1 y2 = y3^2, ||y_i||_p = T_p for every i and p, and ||y||_inf <= T_inf.
inline bool null_conditions_hold(const std::vector<Rational>& y, const STime& T) {
  if (y[0] * y[1] != y[2] * y[2]) return false;
  for (const auto& [p, e] : T.n)
    for (const auto& c : y)
      if (c == 0 || -valuation(c, p) != e) return false;
  Rational Tinf = detail::exact_or(T.T_inf_exact, T.T_inf);
  for (const auto& c : y)
    if (abs(c) > Tinf) return false;
  return true;
}

// Every zero of x1^2 + x2^2 - alpha^2 x3^2 in D^{-1} Z^3 with sup norm at most
// T_inf, D = prod T_p. The counting set of the construction lies in this lattice.
inline std::vector<std::vector<Rational>> null_cone(const Rational& alpha, const STime& T) {
  if (alpha == 0) throw Error(ErrorKind::InvalidArgument, "alpha must be nonzero");
  Rational D = 1;
  for (const auto& [p, e] : T.n) {
    if (e < 0) throw Error(ErrorKind::InvalidArgument, "T_p must be at least 1");
    D *= rpow(p, e);
  }
  Rational al = abs(alpha);
  int64_t r = to_int64(Int(al.get_num())), s = to_int64(Int(al.get_den()));
  int64_t B = to_int64(detail::floor_of(Rational(D * detail::exact_or(T.T_inf_exact, T.T_inf))));
  std::vector<std::vector<Rational>> out;
  for (int64_t w1 = -B; w1 <= B; ++w1)
    for (int64_t w2 = -B; w2 <= B; ++w2) {
      int64_t h2 = w1 * w1 + w2 * w2;
      int64_t h = detail::isqrt_floor(h2);
      if (h == 0 || h * h != h2 || h % r != 0) continue;
      int64_t w3 = h / r * s;
      if (w3 > B) continue;
      for (int64_t sg : {1, -1}) out.push_back({Rational(w1) / D, Rational(w2) / D, Rational(sg * w3) / D});
    }
  return out;
}

struct Beta {
  Rational inf_sq;
  double inf = 0;
  std::map<int64_t, Rational> p_sq;
  std::map<int64_t, Padic> p_root;
};

// beta_inf^2 = alpha^2 - (1 + alpha^2) / T_inf^2 and beta_p^2 = alpha^2 + u_p p^{2 m_p}.
inline Beta perturb_beta(const Rational& alpha, const STime& T, const std::map<int64_t, Int>& units = {},
                         int64_t digits = kDefaultPrecision) {
  Beta b;
  Rational Tinf = detail::exact_or(T.T_inf_exact, T.T_inf);
  Rational a2 = alpha * alpha;
  b.inf_sq = a2 - (1 + a2) / (Tinf * Tinf);
  if (b.inf_sq <= 0) throw Error(ErrorKind::NegativeSquare, "beta_inf^2 is not positive");
  b.inf = std::sqrt(b.inf_sq.get_d());
  for (const auto& [p, m] : T.n) {
    auto it = units.find(p);
    Int u = it == units.end() ? Int(1) : it->second;
    if (mod(u, Int(p)) == 0) throw Error(ErrorKind::InvalidArgument, "u_p must be a unit");
    Rational sq = a2 + u * rpow(p, 2 * m);
    if (sq == 0) throw Error(ErrorKind::NotASquare, "beta_p^2 vanishes");
    b.p_sq[p] = sq;
    b.p_root.emplace(p, sqrt_padic(sq, p, digits));
  }
  return b;
}

inline QuadraticFormS beta_form(const Beta& b) {
  QuadraticFormS q;
  q.n = 3;
  q.inf = QuadraticFormP::real_exact({{1, 0, 0}, {0, 1, 0}, {0, 0, -b.inf_sq}});
  for (const auto& [p, sq] : b.p_sq) q.finite[p] = QuadraticFormP::finite({{1, 0, 0}, {0, 1, 0}, {0, 0, -sq}}, p);
  return q;
}

struct CountReport {
  STime T;
  uint64_t N = 0, undecided = 0;
  double V = 0, prediction = 0, ratio = 0, v_ratio = 0, wall_ms = 0;
  std::string error;
};

inline std::vector<CountReport> asymptotics_experiment(const QuadraticFormS& q, const SInterval& I, const Region& omega,
                                                       const std::vector<STime>& Ts, size_t samples, uint64_t seed,
                                                       size_t workers = 1) {
  std::vector<CountReport> out;
  for (const auto& T : Ts) {
    CountReport r;
    r.T = T;
    try {
      auto c = count_N(q, I, omega, T, workers);
      r.N = c.count;
      r.undecided = c.undecided;
      r.wall_ms = c.wall_ms;
      auto v = volume_V(q, I, omega, T, samples, seed, workers);
      r.V = v.value;
      r.prediction = v.prediction;
      r.ratio = static_cast<double>(r.N) / r.prediction;
      r.v_ratio = static_cast<double>(r.N) / r.V;
    } catch (const Error& e) {
      r.error = e.what();
    }
    out.push_back(r);
  }
  return out;
}

struct CounterexampleRow {
  STime T;
  Beta beta;
  uint64_t N = 0, undecided = 0;
  size_t constructed = 0, condition_failures = 0;
  size_t family_floor = 0;  // parametrized vectors inside the counting set
  size_t floor = 0;         // all of null_cone inside the counting set
  double threshold = 0;
  std::string error;
};

struct CounterexampleTable {
  Rational alpha;
  double epsilon = 0;
  RMatrix transport;
  std::vector<CounterexampleRow> rows;
  double slope = 0;  // of log N against log||T|| + (1 - eps) log log||T||
};

// The counting problem of the construction: I_inf = (1/4, 1), I_p = Z_p,
// sup ball at infinity and unit shells at the finite places.
inline SInterval counterexample_interval() { return SInterval::real_only(Rational(1, 4), Rational(1)); }

inline Region counterexample_region(const STime& T) {
  Region R;
  for (const auto& [p, _] : T.n) R.finite[p].shell = true;
  return R;
}

inline CounterexampleTable counterexample_experiment(const Rational& alpha, double epsilon, const std::vector<STime>& Ts,
                                                     const std::map<int64_t, Int>& units = {}, size_t workers = 1) {
  if (!(epsilon > 0 && epsilon < 1)) throw Error(ErrorKind::InvalidArgument, "epsilon must lie in (0, 1)");
  CounterexampleTable tab;
  tab.alpha = alpha;
  tab.epsilon = epsilon;
  tab.transport = null_transport(alpha);
  SInterval I = counterexample_interval();
  std::vector<double> xs, ys;
  for (const auto& T : Ts) {
    CounterexampleRow row;
    row.T = T;
    double norm = T.norm();
    row.threshold = norm * std::pow(std::log(norm), 1 - epsilon);
    try {
      row.beta = perturb_beta(alpha, T, units);
      QuadraticFormS q = beta_form(row.beta);
      Region R = counterexample_region(T);
      auto F = null_vectors(alpha, T);
      row.constructed = F.vectors.size();
      for (const auto& nv : F.vectors) {
        if (!null_conditions_hold(nv.y, T)) ++row.condition_failures;
        if (in_count_region(q, I, R, T, nv.x)) ++row.family_floor;
      }
      for (const auto& x : null_cone(alpha, T))
        if (in_count_region(q, I, R, T, x)) ++row.floor;
      auto c = count_N(q, I, R, T, workers);
      row.N = c.count;
      row.undecided = c.undecided;
      if (row.N > 0) {
        xs.push_back(std::log(norm) + (1 - epsilon) * std::log(std::log(norm)));
        ys.push_back(std::log(static_cast<double>(row.N)));
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    tab.rows.push_back(row);
  }
  if (xs.size() >= 2) {
    double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    tab.slope = sxx > 0 ? sxy / sxx : 0;
  }
  return tab;
}

}  // namespace sqf
