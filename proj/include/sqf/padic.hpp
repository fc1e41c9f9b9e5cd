#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "arith.hpp"

namespace sqf {

inline constexpr int64_t kDefaultPrecision = 64;

// Bounded-precision element of Q_p. A nonzero value is p^val * unit with unit
// known mod p^prec. Zero carries its absolute precision in prec (exact zero
// uses kInfiniteValuation).
class Padic {
 public:
  Padic() = default;

  static Padic zero(int64_t p, int64_t abs_prec = kInfiniteValuation) {
    require_odd_prime(p);
    Padic z;
    z.p_ = p;
    z.val_ = kInfiniteValuation;
    z.unit_ = 0;
    z.prec_ = abs_prec;
    return z;
  }

  static Padic from_rational(const Rational& x, int64_t p, int64_t prec = kDefaultPrecision) {
    require_odd_prime(p);
    if (prec <= 0) throw Error(ErrorKind::InvalidArgument, "precision must be positive");
    if (x == 0) return zero(p);
    Padic r;
    r.p_ = p;
    r.val_ = valuation(x, p);
    Int m = ipow(p, prec);
    Int num = strip(x.get_num(), p), den = strip(x.get_den(), p);
    r.unit_ = mod(num * inverse_mod(den, m), m);
    r.prec_ = prec;
    return r;
  }

  static Padic from_int(const Int& x, int64_t p, int64_t prec = kDefaultPrecision) {
    return from_rational(Rational(x), p, prec);
  }

  // Base-p little-endian digits of the unit part scaled by p^val.
  static Padic from_digits(int64_t p, int64_t val, const std::vector<int64_t>& digits) {
    require_odd_prime(p);
    if (digits.empty()) throw Error(ErrorKind::InvalidArgument, "empty digit list");
    Int u = 0;
    for (size_t i = digits.size(); i-- > 0;) {
      if (digits[i] < 0 || digits[i] >= p) throw Error(ErrorKind::InvalidArgument, "digit out of range");
      u = u * p + digits[i];
    }
    int64_t n = static_cast<int64_t>(digits.size());
    if (u == 0) return zero(p, val + n);
    int64_t shift = valuation(u, p);
    Padic r;
    r.p_ = p;
    r.val_ = val + shift;
    r.prec_ = n - shift;
    r.unit_ = mod(u / ipow(p, shift), ipow(p, r.prec_));
    return r;
  }

  int64_t p() const { return p_; }
  bool is_zero() const { return val_ == kInfiniteValuation; }
  bool is_exact_zero() const { return is_zero() && prec_ >= kInfiniteValuation; }
  int64_t val() const { return val_; }
  const Int& unit() const { return unit_; }
  // Relative precision for nonzero values, absolute precision for zero.
  int64_t prec() const { return prec_; }
  int64_t abs_prec() const { return is_zero() ? prec_ : val_ + prec_; }

  // |x|_p as a double.
  double norm() const {
    if (is_zero()) return 0.0;
    return std::pow(static_cast<double>(p_), static_cast<double>(-val_));
  }

  std::vector<int64_t> digits() const {
    std::vector<int64_t> d;
    if (is_zero()) return d;
    Int u = unit_;
    for (int64_t i = 0; i < prec_; ++i) {
      Int q, r;
      mpz_fdiv_qr_ui(q.get_mpz_t(), r.get_mpz_t(), u.get_mpz_t(), static_cast<unsigned long>(p_));
      d.push_back(r.get_si());
      u = q;
    }
    return d;
  }

  // Representative p^val * unit with unit in [0, p^prec).
  Rational to_rational() const {
    if (is_zero()) return 0;
    return Rational(unit_) * rpow(p_, val_);
  }

  // Residue in Z/p^k; requires val >= 0 and abs_prec >= k.
  Int residue(int64_t k) const {
    if (abs_prec() < k) throw Error(ErrorKind::PrecisionExhausted, "residue beyond known digits");
    if (is_zero()) return 0;
    if (val_ < 0) throw Error(ErrorKind::InvalidArgument, "not p-integral");
    if (val_ >= k) return 0;
    return mod(unit_ * ipow(p_, val_), ipow(p_, k));
  }

  Padic with_prec(int64_t prec) const {
    if (is_zero()) return *this;
    Padic r = *this;
    r.prec_ = std::min(prec_, prec);
    r.unit_ = mod(unit_, ipow(p_, r.prec_));
    return r;
  }

  friend Padic operator-(const Padic& a) {
    if (a.is_zero()) return a;
    Padic r = a;
    r.unit_ = mod(-a.unit_, ipow(a.p_, a.prec_));
    return r;
  }

  friend Padic operator+(const Padic& a, const Padic& b) {
    check_same(a, b);
    int64_t A = std::min(a.abs_prec(), b.abs_prec());
    if (a.is_zero() && b.is_zero()) return zero(a.p_, A);
    if (a.is_zero() || b.is_zero()) {
      const Padic& x = a.is_zero() ? b : a;
      if (A <= x.val_) return zero(a.p_, A);
      return x.with_prec(A - x.val_);
    }
    int64_t m = std::min(a.val_, b.val_);
    int64_t rel = A - m;
    if (rel <= 0) return zero(a.p_, A);
    Int mod_m = ipow(a.p_, rel);
    Int s = mod(a.unit_ * ipow(a.p_, a.val_ - m) + b.unit_ * ipow(a.p_, b.val_ - m), mod_m);
    if (s == 0) return zero(a.p_, A);
    int64_t v = valuation(s, a.p_);
    Padic r;
    r.p_ = a.p_;
    r.val_ = m + v;
    r.prec_ = rel - v;
    r.unit_ = mod(s / ipow(a.p_, v), ipow(a.p_, r.prec_));
    return r;
  }

  friend Padic operator-(const Padic& a, const Padic& b) { return a + (-b); }

  friend Padic operator*(const Padic& a, const Padic& b) {
    check_same(a, b);
    if (a.is_zero() && b.is_zero()) return zero(a.p_, sat_add(a.prec_, b.prec_));
    if (a.is_zero()) return zero(a.p_, sat_add(a.prec_, b.val_));
    if (b.is_zero()) return zero(a.p_, sat_add(b.prec_, a.val_));
    Padic r;
    r.p_ = a.p_;
    r.val_ = a.val_ + b.val_;
    r.prec_ = std::min(a.prec_, b.prec_);
    r.unit_ = mod(a.unit_ * b.unit_, ipow(a.p_, r.prec_));
    return r;
  }

  friend Padic operator/(const Padic& a, const Padic& b) {
    check_same(a, b);
    if (b.is_zero()) throw Error(ErrorKind::PrecisionExhausted, "division by a p-adic zero");
    if (a.is_zero()) return zero(a.p_, sat_add(a.prec_, -b.val_));
    Padic r;
    r.p_ = a.p_;
    r.val_ = a.val_ - b.val_;
    r.prec_ = std::min(a.prec_, b.prec_);
    Int m = ipow(a.p_, r.prec_);
    r.unit_ = mod(a.unit_ * inverse_mod(b.unit_, m), m);
    return r;
  }

  Padic& operator+=(const Padic& o) { return *this = *this + o; }
  Padic& operator-=(const Padic& o) { return *this = *this - o; }
  Padic& operator*=(const Padic& o) { return *this = *this * o; }

  // Agreement at the common absolute precision.
  bool congruent(const Padic& o) const {
    Padic d = *this - o;
    return d.is_zero();
  }

 private:
  static void check_same(const Padic& a, const Padic& b) {
    if (a.p_ != b.p_) throw Error(ErrorKind::InvalidArgument, "mixed primes");
  }
  static int64_t sat_add(int64_t a, int64_t b) {
    if (a >= kInfiniteValuation || b >= kInfiniteValuation) return kInfiniteValuation;
    return a + b;
  }

  int64_t p_ = 3;
  int64_t val_ = kInfiniteValuation;
  Int unit_ = 0;
  int64_t prec_ = kInfiniteValuation;
};

using PVector = std::vector<Padic>;
using PMatrix = std::vector<std::vector<Padic>>;

inline int64_t valuation(const Padic& x) { return x.val(); }

inline PMatrix to_padic(const RMatrix& m, int64_t p, int64_t prec = kDefaultPrecision) {
  PMatrix r(m.size());
  for (size_t i = 0; i < m.size(); ++i)
    for (const auto& x : m[i]) r[i].push_back(Padic::from_rational(x, p, prec));
  return r;
}

// Square root with unit digit in 1..(p-1)/2, correct mod p^N relative.
inline Padic sqrt_padic(const Padic& x, int64_t N) {
  if (x.is_zero()) throw Error(ErrorKind::InvalidArgument, "square root of zero");
  if (x.val() % 2 != 0) throw Error(ErrorKind::NotASquare, "odd valuation");
  int64_t p = x.p();
  if (legendre(x.unit(), p) != 1) throw Error(ErrorKind::NotASquare, "unit is a non-residue");
  if (x.prec() < N) throw Error(ErrorKind::PrecisionExhausted, "input known to fewer digits than requested");
  Int u0 = mod(x.unit(), Int(p));
  Int r = 0;
  for (int64_t c = 1; c <= (p - 1) / 2; ++c)
    if (mod(Int(c * c) - u0, Int(p)) == 0) {
      r = c;
      break;
    }
  int64_t k = 1;
  while (k < N) {
    k = std::min(2 * k, N);
    Int m = ipow(p, k);
    r = mod(r - (r * r - x.unit()) * inverse_mod(2 * r, m), m);
  }
  Rational root = Rational(r) * rpow(p, x.val() / 2);
  return Padic::from_rational(root, p, N);
}

inline Padic sqrt_padic(const Rational& x, int64_t p, int64_t N = kDefaultPrecision) {
  return sqrt_padic(Padic::from_rational(x, p, N), N);
}

inline bool is_square(const Padic& x) {
  if (x.is_zero()) return true;
  return x.val() % 2 == 0 && legendre(x.unit(), x.p()) == 1;
}

// (a, b)_p for odd p.
inline int hilbert_symbol(const Padic& a, const Padic& b, int64_t p) {
  if (a.is_zero() || b.is_zero()) throw Error(ErrorKind::InvalidArgument, "Hilbert symbol of zero");
  if (a.p() != p || b.p() != p) throw Error(ErrorKind::InvalidArgument, "prime mismatch");
  int64_t al = a.val(), be = b.val();
  int s = 1;
  if ((al & 1) && (be & 1) && ((p - 1) / 2) % 2 == 1) s = -s;
  if (be & 1) s *= legendre(a.unit(), p);
  if (al & 1) s *= legendre(b.unit(), p);
  return s;
}

inline int hilbert_symbol(const Rational& a, const Rational& b, int64_t p) {
  return hilbert_symbol(Padic::from_rational(a, p, 4), Padic::from_rational(b, p, 4), p);
}

namespace detail {

// Smith valuations of an m x n matrix by min-valuation pivoting; rank
// deficiency gives kInfiniteValuation entries.
template <class T, class Val, class Exact>
std::vector<int64_t> smith_valuations(std::vector<std::vector<T>> a, Val val, Exact exact_zero) {
  size_t m = a.size();
  size_t n = m ? a[0].size() : 0;
  std::vector<int64_t> out;
  std::vector<bool> row_used(m, false), col_used(n, false);
  for (size_t step = 0; step < std::min(m, n); ++step) {
    int64_t best = kInfiniteValuation;
    size_t bi = 0, bj = 0;
    for (size_t i = 0; i < m; ++i) {
      if (row_used[i]) continue;
      for (size_t j = 0; j < n; ++j) {
        if (col_used[j]) continue;
        int64_t v = val(a[i][j]);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    if (best == kInfiniteValuation) {
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j)
          if (!row_used[i] && !col_used[j] && !exact_zero(a[i][j]))
            throw Error(ErrorKind::PrecisionExhausted, "pivot not certified");
      for (size_t k = step; k < std::min(m, n); ++k) out.push_back(kInfiniteValuation);
      return out;
    }
    out.push_back(best);
    row_used[bi] = true;
    col_used[bj] = true;
    for (size_t i = 0; i < m; ++i) {
      if (row_used[i]) continue;
      if (val(a[i][bj]) == kInfiniteValuation) continue;
      T f = a[i][bj] / a[bi][bj];
      for (size_t j = 0; j < n; ++j)
        if (!col_used[j]) a[i][j] = a[i][j] - f * a[bi][j];
    }
  }
  return out;
}

}  // namespace detail

inline std::vector<int64_t> smith_valuations(const PMatrix& a) {
  return detail::smith_valuations(
      a, [](const Padic& x) { return x.val(); }, [](const Padic& x) { return x.is_exact_zero(); });
}

inline std::vector<int64_t> smith_valuations(const RMatrix& a, int64_t p) {
  return detail::smith_valuations(
      a, [p](const Rational& x) { return valuation(x, p); }, [](const Rational& x) { return x == 0; });
}

inline int64_t sum_valuations(const std::vector<int64_t>& v) {
  int64_t s = 0;
  for (auto x : v) {
    if (x >= kInfiniteValuation) return kInfiniteValuation;
    s += x;
  }
  return s;
}

// v_p of the largest Pluecker coordinate of the rows.
inline int64_t wedge_valuation(const PMatrix& rows) { return sum_valuations(smith_valuations(rows)); }
inline int64_t wedge_valuation(const RMatrix& rows, int64_t p) {
  return sum_valuations(smith_valuations(rows, p));
}

// ||v1 ^ ... ^ vi||_p, an exact power of p (0 for dependent vectors).
inline Rational wedge_norm_p(const PMatrix& rows) {
  if (rows.empty()) return 1;
  int64_t v = wedge_valuation(rows);
  if (v >= kInfiniteValuation) return 0;
  return rpow(rows[0][0].p(), -v);
}

inline Rational wedge_norm_p(const RMatrix& rows, int64_t p) {
  int64_t v = wedge_valuation(rows, p);
  if (v >= kInfiniteValuation) return 0;
  return rpow(p, -v);
}

inline std::vector<int64_t> cartan_valuations(const PMatrix& g) {
  if (g.size() == 0 || g.size() != g[0].size()) throw Error(ErrorKind::InvalidArgument, "square matrix expected");
  auto v = smith_valuations(g);
  if (sum_valuations(v) >= kInfiniteValuation) throw Error(ErrorKind::Degenerate, "singular matrix");
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<int64_t> cartan_valuations(const RMatrix& g, int64_t p) {
  if (g.size() == 0 || g.size() != g[0].size()) throw Error(ErrorKind::InvalidArgument, "square matrix expected");
  auto v = smith_valuations(g, p);
  if (sum_valuations(v) >= kInfiniteValuation) throw Error(ErrorKind::Degenerate, "singular matrix");
  std::sort(v.begin(), v.end());
  return v;
}

// Element of Q_S: one real component and one p-adic component per finite place.
struct SScalar {
  double real = 0.0;
  std::map<int64_t, Padic> padic;
  std::optional<Rational> exact;

  static SScalar from_rational(const Rational& x, const std::vector<int64_t>& primes,
                               int64_t prec = kDefaultPrecision) {
    SScalar s;
    s.real = x.get_d();
    for (int64_t p : primes) s.padic.emplace(p, Padic::from_rational(x, p, prec));
    s.exact = x;
    return s;
  }

  // prod_{p in S} |x|_p
  double norm() const {
    double r = std::fabs(real);
    for (const auto& [p, x] : padic) r *= x.norm();
    return r;
  }
};

using SVector = std::vector<SScalar>;

inline SVector make_svector(const std::vector<Rational>& v, const std::vector<int64_t>& primes,
                            int64_t prec = kDefaultPrecision) {
  SVector out;
  for (const auto& x : v) out.push_back(SScalar::from_rational(x, primes, prec));
  return out;
}

// Euclidean norm at infinity, max norm at finite places.
inline double real_norm(const SVector& v) {
  double s = 0;
  for (const auto& x : v) s += x.real * x.real;
  return std::sqrt(s);
}

inline double padic_norm(const SVector& v, int64_t p) {
  double m = 0;
  for (const auto& x : v) m = std::max(m, x.padic.at(p).norm());
  return m;
}

inline double norm(const SVector& v) {
  if (v.empty()) return 0;
  double r = real_norm(v);
  for (const auto& [p, _] : v[0].padic) r *= padic_norm(v, p);
  return r;
}

}  // namespace sqf
