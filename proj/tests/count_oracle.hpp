#pragma once

// Naive enumeration of the counting set, shared by the unit tests and the
// acceptance binary. Every integer vector w in the box is tested directly.

#include <random>

#include "sqf/counting.hpp"

namespace oracle {

using namespace sqf;

struct Instance {
  QuadraticFormS q;
  SInterval I;
  Region omega;
  STime T;
};

inline int64_t vp64(int64_t x, int64_t p) {
  if (x == 0) return 1000;
  int64_t v = 0;
  while (x % p == 0) {
    x /= p;
    ++v;
  }
  return v;
}

// Inexact Gram entries are taken at their double values as exact rationals.
inline uint64_t brute_count(const Instance& in) {
  const auto& q = in.q;
  size_t n = q.n;
  Rational D = 1;
  std::map<int64_t, int64_t> k;
  for (const auto& [p, _] : q.finite) {
    auto it = in.T.n.find(p);
    int64_t np = it == in.T.n.end() ? 0 : it->second;
    k[p] = np + in.omega.at(p).max_exponent();
    D *= rpow(p, k[p]);
  }
  Rational Tr = (in.T.T_inf_exact ? *in.T.T_inf_exact : Rational(in.T.T_inf)) *
                (in.omega.inf.radius_exact ? *in.omega.inf.radius_exact : Rational(in.omega.inf.radius));
  Rational bound = D * Tr;
  Int bi;
  mpz_fdiv_q(bi.get_mpz_t(), bound.get_num_mpz_t(), bound.get_den_mpz_t());
  int64_t B = bi.get_si();
  bool euclid = in.omega.inf.norm == RealNorm::Euclid;
  Rational bound_sq = bound * bound;

  // real Gram as exact rationals
  RMatrix Ginf = q.inf.gram;
  if (!q.inf.exact)
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) Ginf[i][j] += Rational(q.inf.irr[i][j]);
  Int den = 1;
  for (auto& r : Ginf)
    for (auto& x : r) den = lcm(den, Int(x.get_den()));
  std::vector<std::vector<Int>> Gi(n, std::vector<Int>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) Gi[i][j] = Int(Ginf[i][j] * den);
  Rational a = in.I.a_exact ? *in.I.a_exact : Rational(in.I.a_inf);
  Rational b = in.I.b_exact ? *in.I.b_exact : Rational(in.I.b_inf);
  Rational lo = a * D * D * den, hi = b * D * D * den;

  struct Fin {
    int64_t p;
    std::vector<std::vector<int64_t>> G;  // den_p * B_p
    Int den;
    Rational target;  // den_p D^2 center
    int64_t need;     // valuation required of den_p q(w) - target
  };
  std::vector<Fin> fins;
  for (const auto& [p, qp] : q.finite) {
    Fin f;
    f.p = p;
    f.den = 1;
    for (auto& r : qp.gram)
      for (auto& x : r) f.den = lcm(f.den, Int(x.get_den()));
    f.G.assign(n, std::vector<int64_t>(n));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) f.G[i][j] = Int(qp.gram[i][j] * f.den).get_si();
    auto it = in.I.finite.find(p);
    PInterval Ip = it == in.I.finite.end() ? PInterval{} : it->second;
    f.target = Rational(f.den) * D * D * Ip.center;
    f.need = Ip.scale + valuation(Rational(Rational(f.den) * D * D), p);
    fins.push_back(f);
  }

  uint64_t count = 0;
  std::vector<int64_t> w(n, -B);
  std::vector<int64_t> u(n);
  while (true) {
    bool in_box = true;
    if (euclid) {
      int64_t s = 0;
      for (auto x : w) s += x * x;
      in_box = Rational(s) <= bound_sq;
    }
    if (in_box) {
      Int val = 0;
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) val += Gi[i][j] * w[i] * w[j];
      bool good = Rational(val) > lo && Rational(val) < hi;
      for (const auto& f : fins) {
        if (!good) break;
        int64_t p = f.p;
        int64_t m = 1000;
        for (auto x : w) m = std::min(m, vp64(x, p));
        const PRegion& R = in.omega.at(p);
        // ||v||_p = p^{k_p - m}
        if (m >= 1000) {
          good = !R.shell;
        } else {
          int64_t pm = 1;
          for (int64_t e = 0; e < m; ++e) pm *= p;
          for (size_t i = 0; i < n; ++i) u[i] = ((w[i] / pm) % p + p) % p;
          int64_t e = in.T.n.count(p) ? in.T.n.at(p) : 0;
          e += R.exponent_for(u, p);
          int64_t kp = valuation(D, p);
          good = R.shell ? kp - m == e : kp - m <= e;
        }
        if (!good) break;
        int64_t qv = 0;
        for (size_t i = 0; i < n; ++i)
          for (size_t j = 0; j < n; ++j) qv += f.G[i][j] * w[i] * w[j];
        Rational diff = Rational(qv) - f.target;
        good = diff == 0 || valuation(diff, p) >= f.need;
      }
      if (good) ++count;
    }
    size_t i = 0;
    while (i < n && w[i] == B) w[i++] = -B;
    if (i == n) break;
    ++w[i];
  }
  return count;
}

inline Rational pick(std::mt19937_64& rng, const std::vector<Rational>& xs) {
  std::uniform_int_distribution<size_t> d(0, xs.size() - 1);
  return xs[d(rng)];
}

inline int64_t uniform(std::mt19937_64& rng, int64_t a, int64_t b) {
  return std::uniform_int_distribution<int64_t>(a, b)(rng);
}

inline RMatrix random_gram(std::mt19937_64& rng, size_t n, const std::vector<Rational>& entries) {
  while (true) {
    RMatrix B(n, std::vector<Rational>(n, Rational(0)));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i; j < n; ++j) {
        Rational x = pick(rng, entries);
        if (i != j && uniform(rng, 0, 2) != 0) x = 0;
        B[i][j] = B[j][i] = x;
      }
    if (determinant(B) != 0) return B;
  }
}

// Random instance with integer box bound at most max_box; S is a random
// subset of {3, 5} plus infinity.
inline Instance random_instance(std::mt19937_64& rng, size_t n, int64_t max_box) {
  Instance in;
  in.q.n = n;
  std::vector<int64_t> S;
  int mask = static_cast<int>(uniform(rng, 0, 3));
  if (mask & 1) S.push_back(3);
  if (mask & 2) S.push_back(5);
  std::vector<Rational> ent = {1, -1, 2, -2, 3, -3, 5, Rational(1, 2), Rational(-1, 2), Rational(1, 3), Rational(5, 3),
                               Rational(3, 5), 0};
  RMatrix Binf = random_gram(rng, n, ent);
  in.q.inf = QuadraticFormP::real_exact(Binf);
  for (int64_t p : S) {
    // either the same rational form or an independent one
    RMatrix Bp = uniform(rng, 0, 1) ? Binf : random_gram(rng, n, ent);
    in.q.finite[p] = QuadraticFormP::finite(Bp, p);
  }
  Rational D = 1;
  for (int64_t p : S) {
    int64_t np = uniform(rng, 0, 1);
    in.T.n[p] = np;
    PRegion R;
    R.exponent = uniform(rng, -1, 1);
    R.shell = uniform(rng, 0, 2) == 0;
    if (uniform(rng, 0, 2) == 0) {
      std::vector<int64_t> key(n, 0);
      key[0] = 1;
      R.table[PRegion::class_key(key, p)] = R.exponent + 1;
      std::vector<int64_t> key2(n, 0);
      key2[n - 1] = 1;
      R.table[PRegion::class_key(key2, p)] = R.exponent - 1;
    }
    in.omega.finite[p] = R;
    D *= rpow(p, np + R.max_exponent());
    PInterval Ip;
    Ip.center = pick(rng, {0, 1, -1, 2, Rational(1, 3), 5, Rational(2, 5)});
    Ip.scale = uniform(rng, -1, 2);
    in.I.finite[p] = Ip;
  }
  in.omega.inf.norm = uniform(rng, 0, 1) ? RealNorm::Sup : RealNorm::Euclid;
  Rational rad = pick(rng, {1, Rational(1, 2), Rational(3, 2)});
  in.omega.inf.radius = rad.get_d();
  in.omega.inf.radius_exact = rad;
  // choose T_inf so that the integer box is at most max_box
  int64_t box = uniform(rng, std::max<int64_t>(1, max_box / 3), max_box);
  Rational Tinf = Rational(box) / (D * rad);
  Tinf.canonicalize();
  in.T.T_inf_exact = Tinf;
  in.T.T_inf = Tinf.get_d();
  Rational a = pick(rng, {-4, -2, -1, Rational(-1, 2), 0, Rational(1, 3), 1});
  Rational w = pick(rng, {Rational(1, 2), 1, 2, 5, 20});
  // scale so that the real interval is comparable to the values of q
  Rational s = Tinf * Tinf * rad * rad;
  in.I.a_exact = a * s;
  in.I.b_exact = (a + w) * s;
  in.I.a_inf = in.I.a_exact->get_d();
  in.I.b_inf = in.I.b_exact->get_d();
  return in;
}

}  // namespace oracle
