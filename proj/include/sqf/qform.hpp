#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "padic.hpp"

namespace sqf {

inline constexpr int64_t kInfPlace = 0;

// Representative of x mod p^K (absolute precision K).
inline Rational truncate(const Rational& x, int64_t p, int64_t K) {
  if (x == 0) return 0;
  int64_t v = valuation(x, p);
  if (v >= K) return 0;
  Int m = ipow(p, K - v);
  Int u = mod(strip(x.get_num(), p) * inverse_mod(strip(x.get_den(), p), m), m);
  return Rational(u) * rpow(p, v);
}

inline int64_t min_valuation(const RMatrix& a, int64_t p) {
  int64_t m = kInfiniteValuation;
  for (const auto& r : a)
    for (const auto& x : r) m = std::min(m, valuation(x, p));
  return m;
}

inline Rational bilinear(const RMatrix& B, const std::vector<Rational>& x, const std::vector<Rational>& y) {
  Rational s = 0;
  for (size_t i = 0; i < B.size(); ++i) {
    if (x[i] == 0) continue;
    for (size_t j = 0; j < B.size(); ++j)
      if (y[j] != 0 && B[i][j] != 0) s += x[i] * B[i][j] * y[j];
  }
  return s;
}

inline Rational qvalue(const RMatrix& B, const std::vector<Rational>& x) { return bilinear(B, x, x); }

inline RMatrix congruence(const RMatrix& B, const RMatrix& g) { return multiply(transpose(g), multiply(B, g)); }

// One place of a quadratic form q(x) = x^T B x. p = 0 is the real place.
struct QuadraticFormP {
  int64_t p = kInfPlace;
  RMatrix gram;                                // exact Gram; at infinity the exact part of an inexact form
  std::vector<std::vector<double>> real_gram;  // real place
  std::vector<std::vector<double>> irr;        // inexact part at infinity, real_gram = gram + irr
  bool exact = true;
  int64_t prec = kInfiniteValuation;           // absolute precision of finite-place entries

  size_t n() const { return p == kInfPlace ? real_gram.size() : gram.size(); }

  static QuadraticFormP finite(const RMatrix& B, int64_t p, int64_t prec = kInfiniteValuation) {
    require_odd_prime(p);
    check_symmetric(B);
    QuadraticFormP q;
    q.p = p;
    q.gram = B;
    q.prec = prec;
    if (determinant(B) == 0) throw Error(ErrorKind::Degenerate, "degenerate Gram matrix");
    if (prec < kInfiniteValuation && valuation(determinant(B), p) >= prec)
      throw Error(ErrorKind::PrecisionExhausted, "determinant not certified");
    return q;
  }

  static QuadraticFormP real_exact(const RMatrix& B) {
    check_symmetric(B);
    if (determinant(B) == 0) throw Error(ErrorKind::Degenerate, "degenerate Gram matrix");
    QuadraticFormP q;
    q.p = kInfPlace;
    q.gram = B;
    q.real_gram.assign(B.size(), std::vector<double>(B.size()));
    for (size_t i = 0; i < B.size(); ++i)
      for (size_t j = 0; j < B.size(); ++j) q.real_gram[i][j] = B[i][j].get_d();
    return q;
  }

  static QuadraticFormP real(const std::vector<std::vector<double>>& B) {
    size_t n = B.size();
    for (size_t i = 0; i < n; ++i) {
      if (B[i].size() != n) throw Error(ErrorKind::InvalidArgument, "Gram matrix not square");
      for (size_t j = 0; j < n; ++j)
        if (B[i][j] != B[j][i]) throw Error(ErrorKind::InvalidArgument, "Gram matrix not symmetric");
    }
    QuadraticFormP q;
    q.p = kInfPlace;
    q.real_gram = B;
    q.irr = B;
    q.gram.assign(n, std::vector<Rational>(n, Rational(0)));
    q.exact = false;
    return q;
  }

  // Exact rational part plus double-precision entries such as sqrt(2).
  static QuadraticFormP real_mixed(const RMatrix& exact_part, const std::vector<std::vector<double>>& inexact_part) {
    QuadraticFormP q = real(inexact_part);
    if (exact_part.size() != q.n()) throw Error(ErrorKind::InvalidArgument, "rank mismatch");
    check_symmetric(exact_part);
    q.gram = exact_part;
    for (size_t i = 0; i < q.n(); ++i)
      for (size_t j = 0; j < q.n(); ++j) q.real_gram[i][j] += exact_part[i][j].get_d();
    return q;
  }

  double eval_real(const std::vector<double>& x) const {
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i)
      for (size_t j = 0; j < x.size(); ++j) s += real_gram[i][j] * x[i] * x[j];
    return s;
  }

 private:
  static void check_symmetric(const RMatrix& B) {
    size_t n = B.size();
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "empty Gram matrix");
    for (size_t i = 0; i < n; ++i) {
      if (B[i].size() != n) throw Error(ErrorKind::InvalidArgument, "Gram matrix not square");
      for (size_t j = 0; j < n; ++j)
        if (B[i][j] != B[j][i]) throw Error(ErrorKind::InvalidArgument, "Gram matrix not symmetric");
    }
  }
};

struct Diagonalization {
  std::vector<Rational> diag;
  RMatrix transition;  // columns are the new basis: P^T B P = diag
};

// Congruence diagonalization with minimal-valuation pivots; P lies in GL_n(Z_p).
inline Diagonalization diagonalize(const RMatrix& B0, int64_t p, int64_t prec = kInfiniteValuation) {
  size_t n = B0.size();
  RMatrix B = B0;
  RMatrix P = identity_rmatrix(n);
  std::vector<Rational> diag;
  for (size_t k = 0; k < n; ++k) {
    int64_t best = kInfiniteValuation;
    size_t bi = k;
    for (size_t i = k; i < n; ++i) {
      int64_t v = valuation(B[i][i], p);
      if (v < best) {
        best = v;
        bi = i;
      }
    }
    int64_t off = kInfiniteValuation;
    size_t oi = k, oj = k;
    for (size_t i = k; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) {
        int64_t v = valuation(B[i][j], p);
        if (v < off) {
          off = v;
          oi = i;
          oj = j;
        }
      }
    if (off < best) {
      // e_oi <- e_oi + e_oj; the new diagonal entry has valuation off
      for (size_t r = 0; r < n; ++r) P[r][oi] += P[r][oj];
      for (size_t c = 0; c < n; ++c) B[oi][c] += B[oj][c];
      for (size_t r = 0; r < n; ++r) B[r][oi] += B[r][oj];
      best = valuation(B[oi][oi], p);
      bi = oi;
    }
    if (best >= kInfiniteValuation) throw Error(ErrorKind::Degenerate, "degenerate form");
    if (best >= prec) throw Error(ErrorKind::PrecisionExhausted, "pivot not certified");
    if (bi != k) {
      std::swap(B[bi], B[k]);
      for (auto& r : B) std::swap(r[bi], r[k]);
      for (auto& r : P) std::swap(r[bi], r[k]);
    }
    for (size_t i = k + 1; i < n; ++i) {
      if (B[i][k] == 0) continue;
      Rational f = B[i][k] / B[k][k];
      for (size_t c = k; c < n; ++c) B[i][c] -= f * B[k][c];
      for (size_t r = k; r < n; ++r) B[r][i] -= f * B[r][k];
      for (size_t r = 0; r < n; ++r) P[r][i] -= f * P[r][k];
    }
    diag.push_back(B[k][k]);
  }
  return {diag, P};
}

struct Invariants {
  int rank = 0;
  int disc_parity = 0;   // v_p(det) mod 2
  int disc_residue = 1;  // Legendre symbol of the unit part of det
  int hasse = 1;
  bool operator==(const Invariants&) const = default;
  auto operator<=>(const Invariants&) const = default;
};

inline Invariants invariants_of_diagonal(const std::vector<Rational>& a, int64_t p) {
  Invariants inv;
  inv.rank = static_cast<int>(a.size());
  Rational det = 1;
  for (const auto& x : a) det *= x;
  int64_t v = valuation(det, p);
  inv.disc_parity = static_cast<int>(((v % 2) + 2) % 2);
  inv.disc_residue = legendre(rational_mod(det / rpow(p, v), p, 1), p);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = i + 1; j < a.size(); ++j) inv.hasse *= hilbert_symbol(a[i], a[j], p);
  return inv;
}

inline Invariants invariants(const QuadraticFormP& q) {
  if (q.p == kInfPlace) throw Error(ErrorKind::InvalidArgument, "invariants need a finite place");
  return invariants_of_diagonal(diagonalize(q.gram, q.p, q.prec).diag, q.p);
}

struct Signature {
  int pos = 0;
  int neg = 0;
  bool operator==(const Signature&) const = default;
};

inline Signature signature(const QuadraticFormP& q) {
  if (q.p != kInfPlace) throw Error(ErrorKind::InvalidArgument, "signature needs the real place");
  size_t n = q.n();
  Eigen::MatrixXd m(n, n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) m(i, j) = q.real_gram[i][j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const auto& ev = es.eigenvalues();
  double rho = ev.cwiseAbs().maxCoeff();
  Signature s;
  for (int i = 0; i < ev.size(); ++i) {
    if (std::fabs(ev[i]) <= 1e-9 * rho) throw Error(ErrorKind::Degenerate, "nearly singular real form");
    (ev[i] > 0 ? s.pos : s.neg)++;
  }
  return s;
}

inline bool equivalent(const QuadraticFormP& a, const QuadraticFormP& b) {
  if (a.p != b.p) throw Error(ErrorKind::InvalidArgument, "different places");
  if (a.n() != b.n()) return false;
  if (a.p == kInfPlace) return signature(a) == signature(b);
  return invariants(a) == invariants(b);
}

// Gram of x1 xn + a_2 x2^2 + ... + a_{n-1} x_{n-1}^2.
inline RMatrix standard_gram(const std::vector<Rational>& coeffs) {
  size_t n = coeffs.size() + 2;
  RMatrix B(n, std::vector<Rational>(n, Rational(0)));
  B[0][n - 1] = B[n - 1][0] = Rational(1, 2);
  for (size_t i = 0; i < coeffs.size(); ++i) B[i + 1][i + 1] = coeffs[i];
  return B;
}

inline bool is_standard(const RMatrix& B, int64_t p) {
  size_t n = B.size();
  if (n < 2) return false;
  Rational u = smallest_nonresidue(p);
  std::vector<Rational> reps = {1, u, p, u * p};
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      bool corner = (i == 0 && j == n - 1) || (i == n - 1 && j == 0);
      if (corner) {
        if (B[i][j] != Rational(1, 2)) return false;
      } else if (i == j && i > 0 && i < n - 1) {
        if (std::find(reps.begin(), reps.end(), B[i][j]) == reps.end()) return false;
      } else if (B[i][j] != 0) {
        return false;
      }
    }
  return true;
}

namespace detail {

// Newton lift of coordinate j so that q(x) = 0 mod p^K; needs (Bx)_j a unit
// relative to the scale of B.
inline void hensel_coordinate(const RMatrix& B, std::vector<Rational>& x, size_t j, int64_t p, int64_t K) {
  for (int it = 0; it < 200; ++it) {
    Rational qx = qvalue(B, x);
    if (qx == 0 || valuation(qx, p) >= K) return;
    Rational g = 0;
    for (size_t k = 0; k < x.size(); ++k) g += B[j][k] * x[k];
    x[j] = truncate(x[j] - qx / (2 * g), p, K + 4);
  }
  throw Error(ErrorKind::PrecisionExhausted, "Hensel lift did not converge");
}

// Lexicographic search for a regular zero mod p of an integral form; the
// leading 1 position runs first so the standard form yields e1.
inline std::optional<std::vector<Rational>> regular_zero_mod_p(const RMatrix& B, int64_t p, size_t* grad_index) {
  size_t n = B.size();
  std::vector<std::vector<int64_t>> b(n, std::vector<int64_t>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) b[i][j] = to_int64(rational_mod(B[i][j], p, 1));
  for (size_t lead = 0; lead < n; ++lead) {
    size_t tail = n - lead - 1;
    std::vector<int64_t> x(n, 0);
    x[lead] = 1;
    int64_t total = 1;
    for (size_t k = 0; k < tail; ++k) total *= p;
    for (int64_t idx = 0; idx < total; ++idx) {
      int64_t r = idx;
      for (size_t k = n; k-- > lead + 1;) {
        x[k] = r % p;
        r /= p;
      }
      int64_t qv = 0;
      std::vector<int64_t> g(n, 0);
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) g[i] = (g[i] + b[i][j] * x[j]) % p;
        qv = (qv + g[i] * x[i]) % p;
      }
      if (qv != 0) continue;
      for (size_t i = 0; i < n; ++i)
        if (g[i] != 0) {
          *grad_index = i;
          std::vector<Rational> out(n);
          for (size_t k = 0; k < n; ++k) out[k] = x[k];
          return out;
        }
    }
  }
  return std::nullopt;
}

inline std::vector<Rational> make_primitive(std::vector<Rational> v, int64_t p, int64_t K) {
  int64_t m = kInfiniteValuation;
  for (const auto& x : v) m = std::min(m, valuation(x, p));
  Rational s = rpow(p, -m);
  for (auto& x : v) x = truncate(x * s, p, K);
  return v;
}

}  // namespace detail

// Primitive v with q(v) = 0 mod p^N.
inline std::vector<Rational> find_isotropic_vector(const QuadraticFormP& q, int64_t N = 40) {
  if (q.p == kInfPlace) throw Error(ErrorKind::InvalidArgument, "finite place expected");
  int64_t p = q.p;
  size_t n = q.n();
  int64_t m = min_valuation(q.gram, p);
  RMatrix B = q.gram;
  for (auto& r : B)
    for (auto& x : r) x *= rpow(p, -m);
  int64_t K = N + std::max<int64_t>(0, -m) + 2;
  size_t j = 0;
  if (auto x = detail::regular_zero_mod_p(B, p, &j)) {
    detail::hensel_coordinate(B, *x, j, p, K);
    return detail::make_primitive(*x, p, K);
  }
  // No regular zero: split q = q0 + p q1 on a diagonal basis and look for a
  // zero of either unit part.
  auto d = diagonalize(B, p);
  std::vector<Rational> scale(n);
  std::vector<int> part(n);
  for (size_t i = 0; i < n; ++i) {
    int64_t v = valuation(d.diag[i], p);
    scale[i] = rpow(p, -(v - (v & 1)) / 2);
    part[i] = static_cast<int>(v & 1);
  }
  int64_t spread = 0;
  for (size_t i = 0; i < n; ++i) spread = std::max(spread, std::abs(valuation(scale[i], p)));
  for (int which = 0; which < 2; ++which) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < n; ++i)
      if (part[i] == which) idx.push_back(i);
    if (idx.size() < 2) continue;
    RMatrix sub(idx.size(), std::vector<Rational>(idx.size(), Rational(0)));
    for (size_t a = 0; a < idx.size(); ++a) {
      Rational c = d.diag[idx[a]] * scale[idx[a]] * scale[idx[a]];
      sub[a][a] = which ? c / p : c;
    }
    size_t g = 0;
    auto y = detail::regular_zero_mod_p(sub, p, &g);
    if (!y) continue;
    detail::hensel_coordinate(sub, *y, g, p, K + 2 * spread + 2);
    std::vector<Rational> x(n, Rational(0));
    for (size_t a = 0; a < idx.size(); ++a) {
      Rational c = (*y)[a] * scale[idx[a]];
      for (size_t r = 0; r < n; ++r) x[r] += d.transition[r][idx[a]] * c;
    }
    return detail::make_primitive(x, p, K);
  }
  throw Error(ErrorKind::NotIsotropic, "no isotropic vector");
}

inline bool is_isotropic(const QuadraticFormP& q) {
  if (q.p == kInfPlace) {
    Signature s = signature(q);
    return s.pos > 0 && s.neg > 0;
  }
  if (q.n() >= 5) return true;
  if (q.n() == 1) return false;
  try {
    find_isotropic_vector(q, 8);
    return true;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NotIsotropic) return false;
    throw;
  }
}

struct StandardForm {
  int64_t p = 3;
  std::vector<Rational> coeffs;  // a_2 .. a_{n-1}
  RMatrix g;                     // g^T B g = standard_gram(coeffs) mod p^N
  bool split_warning = false;
  int64_t precision = 0;
};

inline StandardForm to_standard(const QuadraticFormP& q, int64_t N = 20) {
  if (q.p == kInfPlace) throw Error(ErrorKind::InvalidArgument, "finite place expected");
  size_t n = q.n();
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "rank at least 3 required");
  int64_t p = q.p;
  const RMatrix& B = q.gram;
  Rational u = smallest_nonresidue(p);
  StandardForm out;
  out.p = p;
  out.precision = N;
  if (is_standard(B, p)) {
    for (size_t i = 1; i + 1 < n; ++i) out.coeffs.push_back(B[i][i]);
    out.g = identity_rmatrix(n);
    if (n == 4) out.split_warning = is_square(Padic::from_rational(-out.coeffs[0] / out.coeffs[1], p, 4));
    return out;
  }
  int64_t spread = 0;
  for (const auto& r : B)
    for (const auto& x : r)
      if (x != 0) spread = std::max(spread, std::abs(valuation(x, p)));
  int64_t K = N + 4 * spread + 8;
  auto v = find_isotropic_vector(q, K);
  std::vector<Rational> Bv(n, Rational(0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) Bv[i] += B[i][j] * v[j];
  size_t jmin = 0;
  for (size_t i = 1; i < n; ++i)
    if (valuation(Bv[i], p) < valuation(Bv[jmin], p)) jmin = i;
  std::vector<Rational> w(n, Rational(0));
  w[jmin] = 1 / (2 * Bv[jmin]);
  Rational c = qvalue(B, w);
  for (size_t i = 0; i < n; ++i) w[i] = truncate(w[i] - c * v[i], p, K);

  // two rows of [v w] with the best 2x2 minor are dropped from the complement
  size_t k1 = 0, k2 = 1;
  int64_t bestv = kInfiniteValuation;
  for (size_t a = 0; a < n; ++a)
    for (size_t b = a + 1; b < n; ++b) {
      int64_t val = valuation(Rational(v[a] * w[b] - v[b] * w[a]), p);
      if (val < bestv) {
        bestv = val;
        k1 = a;
        k2 = b;
      }
    }
  std::vector<std::vector<Rational>> comp;
  for (size_t k = 0; k < n; ++k) {
    if (k == k1 || k == k2) continue;
    std::vector<Rational> e(n, Rational(0));
    e[k] = 1;
    Rational bw = bilinear(B, e, w), bv = bilinear(B, e, v);
    for (size_t i = 0; i < n; ++i) e[i] = truncate(e[i] - 2 * bw * v[i] - 2 * bv * w[i], p, K);
    comp.push_back(e);
  }
  size_t m = comp.size();
  RMatrix C(m, std::vector<Rational>(m));
  for (size_t a = 0; a < m; ++a)
    for (size_t b = 0; b < m; ++b) C[a][b] = truncate(bilinear(B, comp[a], comp[b]), p, K);
  auto d = diagonalize(C, p);
  struct Item {
    int order;
    Rational coeff;
    std::vector<Rational> vec;
  };
  std::vector<Item> items;
  for (size_t a = 0; a < m; ++a) {
    Rational da = d.diag[a];
    int64_t e = valuation(da, p);
    Rational unit = da / rpow(p, e);
    bool nonres = legendre(rational_mod(unit, p, 1), p) == -1;
    Rational rep = (nonres ? u : Rational(1)) * ((e & 1) ? Rational(p) : Rational(1));
    Padic s = sqrt_padic(Padic::from_rational(rep / da, p, K), K);
    Rational sr = s.to_rational();
    std::vector<Rational> vec(n, Rational(0));
    for (size_t b = 0; b < m; ++b) {
      if (d.transition[b][a] == 0) continue;
      for (size_t i = 0; i < n; ++i) vec[i] += d.transition[b][a] * comp[b][i];
    }
    for (auto& x : vec) x = truncate(x * sr, p, K);
    int order = ((e & 1) ? 2 : 0) + (nonres ? 1 : 0);
    items.push_back({order, rep, vec});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.order < b.order; });
  out.g.assign(n, std::vector<Rational>(n, Rational(0)));
  for (size_t i = 0; i < n; ++i) {
    out.g[i][0] = v[i];
    out.g[i][n - 1] = w[i];
    for (size_t a = 0; a < m; ++a) out.g[i][a + 1] = items[a].vec[i];
  }
  for (const auto& it : items) out.coeffs.push_back(it.coeff);
  RMatrix check = congruence(B, out.g);
  RMatrix target = standard_gram(out.coeffs);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (valuation(Rational(check[i][j] - target[i][j]), p) < N)
        throw Error(ErrorKind::PrecisionExhausted, "standard form congruence not certified");
  if (n == 4) out.split_warning = is_square(Padic::from_rational(-out.coeffs[0] / out.coeffs[1], p, 4));
  return out;
}

// x1 x4 + x2^2 - x3^2
inline RMatrix split_form_gram() { return standard_gram({Rational(1), Rational(-1)}); }

struct QuadraticFormS {
  size_t n = 0;
  QuadraticFormP inf;
  std::map<int64_t, QuadraticFormP> finite;
  bool irrational = false;

  std::vector<int64_t> primes() const {
    std::vector<int64_t> out;
    for (const auto& [p, _] : finite) out.push_back(p);
    return out;
  }

  void validate() const {
    if (inf.p != kInfPlace) throw Error(ErrorKind::InvalidArgument, "real place missing");
    if (inf.n() != n) throw Error(ErrorKind::InvalidArgument, "rank mismatch at infinity");
    for (const auto& [p, q] : finite) {
      require_odd_prime(p);
      if (q.p != p || q.n() != n) throw Error(ErrorKind::InvalidArgument, "rank mismatch at a finite place");
    }
  }
};

inline bool is_exceptional(const QuadraticFormS& q) {
  q.validate();
  if (q.n <= 3) return true;
  if (q.n != 4) return false;
  Signature s = signature(q.inf);
  if (s.pos == 2 && s.neg == 2) return true;
  for (const auto& [p, qp] : q.finite) {
    auto split = QuadraticFormP::finite(split_form_gram(), p);
    if (invariants(qp) == invariants(split)) return true;
  }
  return false;
}

// Dilation parameter: T_inf and T_p = p^{n_p}.
struct STime {
  double T_inf = 1.0;
  std::optional<Rational> T_inf_exact;
  std::map<int64_t, int64_t> n;

  double norm() const {
    double r = T_inf;
    for (const auto& [p, e] : n) r *= std::pow(static_cast<double>(p), static_cast<double>(e));
    return r;
  }
  Rational finite_norm() const {
    Rational r = 1;
    for (const auto& [p, e] : n) r *= rpow(p, e);
    return r;
  }
  bool dominates(const STime& o) const {
    if (T_inf < o.T_inf) return false;
    for (const auto& [p, e] : o.n) {
      auto it = n.find(p);
      if (it == n.end() || it->second < e) return false;
    }
    return true;
  }
};

struct PInterval {
  Rational center = 0;
  int64_t scale = 0;  // I_p = center + p^scale Z_p
};

struct SInterval {
  double a_inf = 0, b_inf = 0;
  std::optional<Rational> a_exact, b_exact;
  std::map<int64_t, PInterval> finite;

  static SInterval real_only(const Rational& a, const Rational& b) {
    SInterval I;
    I.a_inf = a.get_d();
    I.b_inf = b.get_d();
    I.a_exact = a;
    I.b_exact = b;
    return I;
  }

  double measure() const {
    double r = std::max(0.0, b_inf - a_inf);
    for (const auto& [p, I] : finite) r *= std::pow(static_cast<double>(p), static_cast<double>(-I.scale));
    return r;
  }

  bool contains_p(int64_t p, const Rational& x) const {
    auto it = finite.find(p);
    if (it == finite.end()) return valuation(x, p) >= 0;
    return valuation(Rational(x - it->second.center), p) >= it->second.scale;
  }
};

enum class RealNorm { Sup, Euclid };

struct InfRegion {
  RealNorm norm = RealNorm::Sup;
  double radius = 1.0;
  std::optional<Rational> radius_exact = Rational(1);
};

// rho_p = p^exponent, optionally refined on projective classes mod p; the
// shell variant keeps only vectors with ||x||_p = rho_p.
struct PRegion {
  int64_t exponent = 0;
  bool shell = false;
  std::map<std::vector<int64_t>, int64_t> table;

  // Projective class of a primitive integral vector mod p: scaled so the
  // first nonzero entry is 1.
  static std::vector<int64_t> class_key(const std::vector<int64_t>& x, int64_t p) {
    std::vector<int64_t> k(x.size());
    int64_t inv = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      int64_t r = ((x[i] % p) + p) % p;
      if (!inv && r) inv = to_int64(inverse_mod(Int(r), Int(p)));
      k[i] = r;
    }
    for (auto& r : k) r = r * inv % p;
    return k;
  }

  int64_t exponent_for(const std::vector<int64_t>& primitive, int64_t p) const {
    if (table.empty()) return exponent;
    auto it = table.find(class_key(primitive, p));
    return it == table.end() ? exponent : it->second;
  }

  int64_t max_exponent() const {
    int64_t m = exponent;
    for (const auto& [_, e] : table) m = std::max(m, e);
    return m;
  }
};

struct Region {
  InfRegion inf;
  std::map<int64_t, PRegion> finite;

  const PRegion& at(int64_t p) const {
    static const PRegion unit;
    auto it = finite.find(p);
    return it == finite.end() ? unit : it->second;
  }
};

}  // namespace sqf
