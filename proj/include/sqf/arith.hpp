#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sqf {

using Int = mpz_class;
using Rational = mpq_class;
using RMatrix = std::vector<std::vector<Rational>>;

enum class ErrorKind {
  NotASquare,
  PrecisionExhausted,
  NotIsotropic,
  NotStandardForm,
  NoIsometry,
  ValueMismatch,
  NotInOrbit,
  NotSaturated,
  NotUnimodular,
  BudgetExceeded,
  NegativeSquare,
  Degenerate,
  InvalidArgument,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotASquare: return "NotASquare";
    case ErrorKind::PrecisionExhausted: return "PrecisionExhausted";
    case ErrorKind::NotIsotropic: return "NotIsotropic";
    case ErrorKind::NotStandardForm: return "NotStandardForm";
    case ErrorKind::NoIsometry: return "NoIsometry";
    case ErrorKind::ValueMismatch: return "ValueMismatch";
    case ErrorKind::NotInOrbit: return "NotInOrbit";
    case ErrorKind::NotSaturated: return "NotSaturated";
    case ErrorKind::NotUnimodular: return "NotUnimodular";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::NegativeSquare: return "NegativeSquare";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Valuation sentinel for zero.
inline constexpr int64_t kInfiniteValuation = std::numeric_limits<int64_t>::max() / 4;

inline bool is_prime(int64_t n) {
  if (n < 2) return false;
  for (int64_t d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

inline void require_odd_prime(int64_t p) {
  if (p == 2) throw Error(ErrorKind::InvalidArgument, "p = 2 is not supported");
  if (!is_prime(p)) throw Error(ErrorKind::InvalidArgument, "not a prime: " + std::to_string(p));
}

inline Int ipow(int64_t p, int64_t k) {
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "negative exponent");
  Int r;
  mpz_ui_pow_ui(r.get_mpz_t(), static_cast<unsigned long>(p), static_cast<unsigned long>(k));
  return r;
}

// p^k as a rational, any sign of k.
inline Rational rpow(int64_t p, int64_t k) {
  if (k >= 0) return Rational(ipow(p, k));
  return Rational(Int(1), ipow(p, -k));
}

inline int64_t valuation(const Int& x, int64_t p) {
  if (x == 0) return kInfiniteValuation;
  Int q = x;
  Int pp = p;
  return static_cast<int64_t>(mpz_remove(q.get_mpz_t(), q.get_mpz_t(), pp.get_mpz_t()));
}

inline int64_t valuation(const Rational& x, int64_t p) {
  if (x == 0) return kInfiniteValuation;
  return valuation(x.get_num(), p) - valuation(x.get_den(), p);
}

// Removes every factor p from x (x != 0).
inline Int strip(const Int& x, int64_t p) {
  Int q = x;
  Int pp = p;
  mpz_remove(q.get_mpz_t(), q.get_mpz_t(), pp.get_mpz_t());
  return q;
}

inline Int mod(const Int& a, const Int& m) {
  Int r;
  mpz_mod(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());
  return r;
}

inline Int inverse_mod(const Int& a, const Int& m) {
  Int r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t()) == 0)
    throw Error(ErrorKind::InvalidArgument, "not invertible");
  return r;
}

// Image of a p-integral rational in Z/p^k.
inline Int rational_mod(const Rational& x, int64_t p, int64_t k) {
  Int m = ipow(p, k);
  if (valuation(x.get_den(), p) > 0) throw Error(ErrorKind::InvalidArgument, "not p-integral");
  return mod(x.get_num() * inverse_mod(x.get_den(), m), m);
}

// Legendre symbol (a/p) in {-1, 0, 1}.
inline int legendre(const Int& a, int64_t p) {
  Int pp = p;
  Int r = mod(a, pp);
  return mpz_legendre(r.get_mpz_t(), pp.get_mpz_t());
}

inline int64_t smallest_nonresidue(int64_t p) {
  for (int64_t u = 2; u < p; ++u)
    if (legendre(Int(u), p) == -1) return u;
  throw Error(ErrorKind::InvalidArgument, "no non-residue");
}

inline Rational parse_rational(std::string_view s) {
  std::string t(s);
  auto slash = t.find('/');
  try {
    if (slash == std::string::npos) {
      if (t.find_first_of(".eE") != std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, "decimal literal is not exact: " + t);
      }
      return Rational(Int(t));
    }
    Rational r(Int(t.substr(0, slash)), Int(t.substr(slash + 1)));
    if (r.get_den() == 0) throw Error(ErrorKind::InvalidArgument, "zero denominator");
    r.canonicalize();
    return r;
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::InvalidArgument, "bad rational literal: " + t);
  }
}

inline std::string to_string(const Rational& r) {
  if (r.get_den() == 1) return r.get_num().get_str();
  return r.get_num().get_str() + "/" + r.get_den().get_str();
}

inline int64_t to_int64(const Int& x) {
  if (!x.fits_slong_p()) throw Error(ErrorKind::InvalidArgument, "integer overflow");
  return x.get_si();
}

inline RMatrix identity_rmatrix(size_t n) {
  RMatrix m(n, std::vector<Rational>(n, Rational(0)));
  for (size_t i = 0; i < n; ++i) m[i][i] = 1;
  return m;
}

inline RMatrix multiply(const RMatrix& a, const RMatrix& b) {
  size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  RMatrix c(n, std::vector<Rational>(m, Rational(0)));
  for (size_t i = 0; i < n; ++i)
    for (size_t l = 0; l < k; ++l) {
      if (a[i][l] == 0) continue;
      for (size_t j = 0; j < m; ++j) c[i][j] += a[i][l] * b[l][j];
    }
  return c;
}

inline RMatrix transpose(const RMatrix& a) {
  if (a.empty()) return {};
  RMatrix t(a[0].size(), std::vector<Rational>(a.size()));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Rational determinant(RMatrix a) {
  size_t n = a.size();
  Rational det = 1;
  for (size_t c = 0; c < n; ++c) {
    size_t piv = c;
    while (piv < n && a[piv][c] == 0) ++piv;
    if (piv == n) return 0;
    if (piv != c) {
      std::swap(a[piv], a[c]);
      det = -det;
    }
    det *= a[c][c];
    for (size_t r = c + 1; r < n; ++r) {
      if (a[r][c] == 0) continue;
      Rational f = a[r][c] / a[c][c];
      for (size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return det;
}

// Inverse of a square rational matrix; throws Degenerate when singular.
inline RMatrix inverse(RMatrix a) {
  size_t n = a.size();
  RMatrix inv = identity_rmatrix(n);
  for (size_t c = 0; c < n; ++c) {
    size_t piv = c;
    while (piv < n && a[piv][c] == 0) ++piv;
    if (piv == n) throw Error(ErrorKind::Degenerate, "singular matrix");
    std::swap(a[piv], a[c]);
    std::swap(inv[piv], inv[c]);
    Rational f = 1 / a[c][c];
    for (size_t k = 0; k < n; ++k) {
      a[c][k] *= f;
      inv[c][k] *= f;
    }
    for (size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c] == 0) continue;
      Rational g = a[r][c];
      for (size_t k = 0; k < n; ++k) {
        a[r][k] -= g * a[c][k];
        inv[r][k] -= g * inv[c][k];
      }
    }
  }
  return inv;
}

}  // namespace sqf
