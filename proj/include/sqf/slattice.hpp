#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "padic.hpp"

namespace sqf {

using IVector = std::vector<Int>;
using IMat = std::vector<IVector>;

// Thrown when an enumeration budget runs out; carries the best value found.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double lower_bound)
      : Error(ErrorKind::BudgetExceeded, what), lower_bound_(lower_bound) {}
  double lower_bound() const { return lower_bound_; }

 private:
  double lower_bound_;
};

// Z-basis of {x in Z^n : M x = 0} by unimodular column reduction.
inline IMat integer_kernel(const IMat& M, size_t n) {
  IMat A = M;
  IMat U(n, IVector(n, Int(0)));
  for (size_t i = 0; i < n; ++i) U[i][i] = 1;
  auto col_op = [&](size_t dst, size_t src, const Int& f) {
    // col_dst -= f * col_src
    for (auto& r : A) r[dst] -= f * r[src];
    for (auto& r : U) r[dst] -= f * r[src];
  };
  auto col_swap = [&](size_t a, size_t b) {
    for (auto& r : A) std::swap(r[a], r[b]);
    for (auto& r : U) std::swap(r[a], r[b]);
  };
  size_t k = 0;
  for (size_t row = 0; row < A.size() && k < n; ++row) {
    while (true) {
      size_t best = n;
      for (size_t c = k; c < n; ++c)
        if (A[row][c] != 0 && (best == n || abs(A[row][c]) < abs(A[row][best]))) best = c;
      if (best == n) break;
      col_swap(k, best);
      bool done = true;
      for (size_t c = k + 1; c < n; ++c) {
        if (A[row][c] == 0) continue;
        Int q;
        mpz_fdiv_q(q.get_mpz_t(), A[row][c].get_mpz_t(), A[row][k].get_mpz_t());
        col_op(c, k, q);
        if (A[row][c] != 0) done = false;
      }
      if (done) {
        ++k;
        break;
      }
    }
  }
  IMat out;
  for (size_t c = k; c < n; ++c) {
    IVector v(n);
    for (size_t r = 0; r < n; ++r) v[r] = U[r][c];
    out.push_back(v);
  }
  return out;
}

// gcd of the maximal minors of an i x n integer matrix with rank i.
inline Int gcd_maximal_minors(const IMat& C) {
  size_t n = C.empty() ? 0 : C[0].size();
  IMat A = C;
  size_t k = 0;
  Int det = 1;
  for (size_t row = 0; row < A.size(); ++row) {
    while (true) {
      size_t best = n;
      for (size_t c = k; c < n; ++c)
        if (A[row][c] != 0 && (best == n || abs(A[row][c]) < abs(A[row][best]))) best = c;
      if (best == n) return 0;
      for (auto& r : A) std::swap(r[k], r[best]);
      bool done = true;
      for (size_t c = k + 1; c < n; ++c) {
        if (A[row][c] == 0) continue;
        Int q;
        mpz_fdiv_q(q.get_mpz_t(), A[row][c].get_mpz_t(), A[row][k].get_mpz_t());
        for (auto& r : A) r[c] -= q * r[k];
        if (A[row][c] != 0) done = false;
      }
      if (done) break;
    }
    det *= abs(A[row][k]);
    ++k;
  }
  return det;
}

inline Int strip_primes(Int x, const std::vector<int64_t>& S) {
  x = abs(x);
  for (int64_t p : S) x = strip(x, p);
  return x;
}

inline bool is_s_unit(const Rational& x, const std::vector<int64_t>& S) {
  return x != 0 && strip_primes(x.get_num(), S) == 1 && strip_primes(x.get_den(), S) == 1;
}

inline Rational gram_det(const RMatrix& rows) {
  size_t k = rows.size();
  RMatrix G(k, std::vector<Rational>(k));
  for (size_t a = 0; a < k; ++a)
    for (size_t b = 0; b < k; ++b) {
      Rational s = 0;
      for (size_t j = 0; j < rows[a].size(); ++j) s += rows[a][j] * rows[b][j];
      G[a][b] = s;
    }
  return determinant(G);
}

inline size_t rank_of(RMatrix a) {
  size_t r = 0, m = a.size(), n = m ? a[0].size() : 0;
  for (size_t c = 0; c < n && r < m; ++c) {
    size_t piv = r;
    while (piv < m && a[piv][c] == 0) ++piv;
    if (piv == m) continue;
    std::swap(a[piv], a[r]);
    for (size_t i = r + 1; i < m; ++i) {
      if (a[i][c] == 0) continue;
      Rational f = a[i][c] / a[r][c];
      for (size_t j = c; j < n; ++j) a[i][j] -= f * a[r][j];
    }
    ++r;
  }
  return r;
}

// Z_S-lattice spanned by the rows of a rational basis, embedded diagonally in Q_S^n.
struct SLattice {
  std::vector<int64_t> S;  // finite places
  RMatrix basis;           // rows

  size_t n() const { return basis.size(); }
  Rational det() const { return determinant(basis); }

  // |det|_inf times prod over S of |det|_p
  Rational covolume() const {
    Rational d = det();
    if (d == 0) throw Error(ErrorKind::Degenerate, "basis is singular");
    Rational r = abs(d);
    for (int64_t p : S) r *= rpow(p, -valuation(d, p));
    return r;
  }
  bool unimodular() const { return covolume() == 1; }

  void validate() const {
    for (int64_t p : S) require_odd_prime(p);
    for (const auto& r : basis)
      if (r.size() != basis.size()) throw Error(ErrorKind::InvalidArgument, "basis not square");
    covolume();
  }

  // Coordinates of v in the basis.
  std::vector<Rational> coords(const std::vector<Rational>& v) const {
    RMatrix inv = inverse(basis);
    std::vector<Rational> c(n(), Rational(0));
    for (size_t j = 0; j < n(); ++j)
      for (size_t i = 0; i < n(); ++i) c[j] += v[i] * inv[i][j];
    return c;
  }

  std::vector<Rational> vector_of(const IVector& c) const {
    std::vector<Rational> v(n(), Rational(0));
    for (size_t i = 0; i < n(); ++i)
      if (c[i] != 0)
        for (size_t j = 0; j < n(); ++j) v[j] += Rational(c[i]) * basis[i][j];
    return v;
  }
};

// Product over S of the wedge norms, squared (the real factor is a Gram determinant).
inline Rational wedge_norm_sq_S(const RMatrix& rows, const std::vector<int64_t>& S) {
  if (rows.empty()) return 1;
  Rational d = gram_det(rows);
  for (int64_t p : S) {
    Rational w = wedge_norm_p(rows, p);
    d *= w * w;
  }
  return d;
}

namespace detail {

// Integer coordinate rows (scaled by an S-unit) of generators lying in Delta.
inline IMat integral_coords(const SLattice& L, const RMatrix& gens) {
  IMat C;
  for (const auto& g : gens) {
    auto c = L.coords(g);
    Int den = 1;
    for (const auto& x : c) den = lcm(den, Int(x.get_den()));
    if (strip_primes(den, L.S) != 1) throw Error(ErrorKind::InvalidArgument, "generator not in the lattice");
    IVector row;
    for (const auto& x : c) row.push_back(Rational(x * den).get_num());
    C.push_back(row);
  }
  return C;
}

}  // namespace detail

// Z_S-basis of span(gens) cap Delta.
inline RMatrix saturate(const SLattice& L, const RMatrix& gens) {
  size_t n = L.n();
  if (gens.empty()) return {};
  IMat C = detail::integral_coords(L, gens);
  IMat K = integer_kernel(C, n);   // orthogonal complement
  IMat Sat = integer_kernel(K, n);  // its annihilator
  RMatrix out;
  for (const auto& c : Sat) out.push_back(L.vector_of(c));
  return out;
}

// d(L)^2 for L with the given Z_S-basis of L cap Delta.
inline Rational d_squared(const SLattice& L, const RMatrix& gens) {
  if (gens.empty()) return 1;
  if (rank_of(gens) != gens.size()) throw Error(ErrorKind::InvalidArgument, "generators are dependent");
  IMat C = detail::integral_coords(L, gens);
  if (strip_primes(gcd_maximal_minors(C), L.S) != 1)
    throw Error(ErrorKind::NotSaturated, "generators do not span L cap Delta over Z_S");
  return wedge_norm_sq_S(gens, L.S);
}

inline double d_subspace(const SLattice& L, const RMatrix& gens) { return std::sqrt(d_squared(L, gens).get_d()); }

// d(span cap Delta)^2 from any independent spanning tuple.
inline Rational d_squared_of_span(const SLattice& L, const RMatrix& gens) {
  if (gens.empty()) return 1;
  IMat C = detail::integral_coords(L, gens);
  Int g = strip_primes(gcd_maximal_minors(C), L.S);
  if (g == 0) throw Error(ErrorKind::InvalidArgument, "generators are dependent");
  return wedge_norm_sq_S(gens, L.S) / Rational(g * g);
}

// Basis of span(A) cap span(B) over Q (rows).
inline RMatrix subspace_intersection(const RMatrix& A, const RMatrix& B) {
  if (A.empty() || B.empty()) return {};
  size_t n = A[0].size(), a = A.size(), b = B.size();
  // x = sum s_i A_i = sum t_j B_j: kernel of the (n x (a+b)) matrix [A^T | -B^T]
  Int den = 1;
  for (const auto& r : A)
    for (const auto& x : r) den = lcm(den, Int(x.get_den()));
  for (const auto& r : B)
    for (const auto& x : r) den = lcm(den, Int(x.get_den()));
  IMat M(n, IVector(a + b));
  for (size_t j = 0; j < n; ++j) {
    for (size_t i = 0; i < a; ++i) M[j][i] = Rational(A[i][j] * den).get_num();
    for (size_t i = 0; i < b; ++i) M[j][a + i] = Rational(-B[i][j] * den).get_num();
  }
  IMat K = integer_kernel(M, a + b);
  RMatrix out;
  for (const auto& k : K) {
    std::vector<Rational> v(n, Rational(0));
    for (size_t i = 0; i < a; ++i)
      for (size_t j = 0; j < n; ++j) v[j] += Rational(k[i]) * A[i][j];
    out.push_back(v);
  }
  // drop dependent rows (the kernel can contain relations among A's rows)
  RMatrix indep;
  for (const auto& v : out) {
    indep.push_back(v);
    if (rank_of(indep) < indep.size()) indep.pop_back();
  }
  return indep;
}

inline RMatrix subspace_sum(const RMatrix& A, const RMatrix& B) {
  RMatrix all = A;
  all.insert(all.end(), B.begin(), B.end());
  RMatrix indep;
  for (const auto& v : all) {
    indep.push_back(v);
    if (rank_of(indep) < indep.size()) indep.pop_back();
  }
  return indep;
}

// Z-basis of pi(Delta) = Delta cap (R^n x prod Z_p^n); real covolume 1.
inline RMatrix project_to_real(const SLattice& L) {
  L.validate();
  if (!L.unimodular()) throw Error(ErrorKind::NotUnimodular, "lattice is not unimodular");
  RMatrix M = L.basis;
  size_t n = L.n();
  for (int64_t p : L.S) {
    for (auto& row : M) {
      int64_t m = kInfiniteValuation;
      for (const auto& x : row) m = std::min(m, valuation(x, p));
      Rational s = rpow(p, -m);
      for (auto& x : row) x *= s;
    }
    for (int guard = 0; guard < 10000; ++guard) {
      // a relation sum c_i r_i = 0 mod p among the rows
      std::vector<std::vector<int64_t>> R(n, std::vector<int64_t>(n));
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) R[i][j] = to_int64(rational_mod(M[i][j], p, 1));
      // left kernel mod p by elimination on the transpose
      std::vector<std::vector<int64_t>> T(n, std::vector<int64_t>(2 * n, 0));
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) T[i][j] = R[i][j];
        T[i][n + i] = 1;
      }
      size_t r = 0;
      for (size_t c = 0; c < n && r < n; ++c) {
        size_t piv = r;
        while (piv < n && T[piv][c] == 0) ++piv;
        if (piv == n) continue;
        std::swap(T[piv], T[r]);
        int64_t inv = to_int64(inverse_mod(Int(T[r][c]), Int(p)));
        for (auto& x : T[r]) x = x * inv % p;
        for (size_t k = 0; k < n; ++k) {
          if (k == r || T[k][c] == 0) continue;
          int64_t f = T[k][c];
          for (size_t l = 0; l < 2 * n; ++l) T[k][l] = ((T[k][l] - f * T[r][l]) % p + p) % p;
        }
        ++r;
      }
      if (r == n) break;
      std::vector<int64_t> c(T[r].begin() + n, T[r].end());
      size_t j = 0;
      while (c[j] == 0) ++j;
      int64_t inv = to_int64(inverse_mod(Int(c[j]), Int(p)));
      for (auto& x : c) x = x * inv % p;
      std::vector<Rational> nr(n, Rational(0));
      for (size_t i = 0; i < n; ++i)
        if (c[i])
          for (size_t k = 0; k < n; ++k) nr[k] += c[i] * M[i][k];
      for (auto& x : nr) x /= p;
      M[j] = nr;
    }
  }
  Rational d = abs(determinant(M));
  if (d != 1) throw Error(ErrorKind::NotUnimodular, "projection covolume is not 1");
  return M;
}

// ---------- real lattices: LLL, enumeration, minimal sublattice covolumes ----------

struct RealLattice {
  RMatrix basis;  // rows, exact
};

inline Rational dot(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  Rational s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Exact LLL (delta = 3/4); returns the reduced basis, rows.
inline RMatrix lll_reduce(RMatrix b) {
  size_t n = b.size();
  auto gso = [&](std::vector<std::vector<Rational>>& bs, RMatrix& mu, std::vector<Rational>& B) {
    bs = b;
    mu.assign(n, std::vector<Rational>(n, Rational(0)));
    B.assign(n, Rational(0));
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < i; ++j) {
        mu[i][j] = dot(b[i], bs[j]) / B[j];
        for (size_t k = 0; k < bs[i].size(); ++k) bs[i][k] -= mu[i][j] * bs[j][k];
      }
      B[i] = dot(bs[i], bs[i]);
    }
  };
  std::vector<std::vector<Rational>> bs;
  RMatrix mu;
  std::vector<Rational> B;
  gso(bs, mu, B);
  size_t k = 1;
  int guard = 0;
  while (k < n && guard++ < 100000) {
    for (size_t j = k; j-- > 0;) {
      Rational m = mu[k][j];
      if (abs(m) > Rational(1, 2)) {
        Int q;
        Rational t = m + Rational(1, 2);
        mpz_fdiv_q(q.get_mpz_t(), t.get_num_mpz_t(), t.get_den_mpz_t());
        for (size_t c = 0; c < b[k].size(); ++c) b[k][c] -= Rational(q) * b[j][c];
        for (size_t l = 0; l <= j; ++l) mu[k][l] -= Rational(q) * (l == j ? Rational(1) : mu[j][l]);
      }
    }
    if (B[k] >= (Rational(3, 4) - mu[k][k - 1] * mu[k][k - 1]) * B[k - 1]) {
      ++k;
    } else {
      std::swap(b[k], b[k - 1]);
      gso(bs, mu, B);
      k = std::max<size_t>(k - 1, 1);
    }
  }
  return b;
}

// All nonzero integer coefficient vectors x (up to sign) with |x b|^2 <= R2.
inline std::vector<IVector> short_vectors(const RMatrix& b, const Rational& R2, size_t budget) {
  size_t n = b.size();
  std::vector<std::vector<double>> mu(n, std::vector<double>(n, 0.0));
  std::vector<double> Bs(n);
  {
    RMatrix bs = b;
    RMatrix m(n, std::vector<Rational>(n, Rational(0)));
    std::vector<Rational> B(n);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < i; ++j) {
        m[i][j] = dot(b[i], bs[j]) / B[j];
        for (size_t k = 0; k < bs[i].size(); ++k) bs[i][k] -= m[i][j] * bs[j][k];
      }
      B[i] = dot(bs[i], bs[i]);
      Bs[i] = B[i].get_d();
      for (size_t j = 0; j < i; ++j) mu[i][j] = m[i][j].get_d();
    }
  }
  double R = R2.get_d() * (1 + 1e-9) + 1e-12;
  std::vector<IVector> out;
  std::vector<int64_t> x(n, 0);
  std::function<void(int, double)> rec = [&](int i, double used) {
    double c = 0;
    for (size_t j = i + 1; j < n; ++j) c -= mu[j][i] * static_cast<double>(x[j]);
    double room = (R - used) / Bs[i];
    if (room < 0) return;
    double w = std::sqrt(room);
    int64_t lo = static_cast<int64_t>(std::ceil(c - w)), hi = static_cast<int64_t>(std::floor(c + w));
    for (int64_t v = lo; v <= hi; ++v) {
      x[i] = v;
      double t = static_cast<double>(v) - c;
      double u = used + t * t * Bs[i];
      if (i == 0) {
        bool zero = true, positive = false;
        for (size_t k = n; k-- > 0;)
          if (x[k] != 0) {
            zero = false;
            positive = x[k] > 0;
            break;
          }
        if (zero || !positive) continue;
        std::vector<Rational> vec(b[0].size(), Rational(0));
        for (size_t k = 0; k < n; ++k)
          if (x[k])
            for (size_t c2 = 0; c2 < vec.size(); ++c2) vec[c2] += Rational(x[k]) * b[k][c2];
        if (dot(vec, vec) > R2) continue;
        IVector iv(n);
        for (size_t k = 0; k < n; ++k) iv[k] = x[k];
        out.push_back(iv);
        if (out.size() > budget) throw BudgetError("short vector enumeration exceeded its budget", 0.0);
      } else {
        rec(i - 1, u);
      }
    }
    x[i] = 0;
  };
  rec(static_cast<int>(n) - 1, 0.0);
  return out;
}

inline double hermite_power(size_t i) {
  // gamma_i^{i/2}
  switch (i) {
    case 1: return 1.0;
    case 2: return 2.0 / std::sqrt(3.0);
    case 3: return std::sqrt(2.0);
    case 4: return 2.0;
    default: return std::pow(1.0 + i / 4.0, i / 2.0);
  }
}

struct MinCovolume {
  Rational d_sq;  // smallest squared covolume of an i-dim primitive sublattice
  size_t enumerated = 0;
};

// Smallest covolume^2 of i-dimensional sublattices of the real lattice.
inline MinCovolume min_sublattice_covolume_sq(const RMatrix& basis, size_t i, size_t budget = 200000) {
  size_t n = basis.size();
  if (i == 0 || i == n) return {i == 0 ? Rational(1) : gram_det(basis), 0};
  RMatrix b = lll_reduce(basis);
  // upper bound from the first i reduced vectors
  RMatrix first(b.begin(), b.begin() + i);
  Rational U2 = gram_det(first);
  Rational l1 = dot(b[0], b[0]);
  for (size_t k = 1; k < n; ++k) l1 = std::min(l1, dot(b[k], b[k]));
  // lambda_1 exactly by enumeration within the shortest basis vector
  auto cand1 = short_vectors(b, l1, budget);
  for (const auto& c : cand1) {
    std::vector<Rational> v(n, Rational(0));
    for (size_t k = 0; k < n; ++k)
      for (size_t j = 0; j < n; ++j) v[j] += Rational(c[k]) * b[k][j];
    l1 = std::min(l1, dot(v, v));
  }
  if (i == 1) return {l1, cand1.size()};
  double U = std::sqrt(U2.get_d());
  double lam1 = std::sqrt(l1.get_d());
  double radius = hermite_power(i) * U / std::pow(lam1, static_cast<double>(i - 1));
  Rational R2(radius * radius * (1 + 1e-9));
  auto vecs = short_vectors(b, R2, budget);
  std::vector<std::vector<Rational>> real(vecs.size(), std::vector<Rational>(n, Rational(0)));
  for (size_t a = 0; a < vecs.size(); ++a)
    for (size_t k = 0; k < n; ++k)
      if (vecs[a][k] != 0)
        for (size_t j = 0; j < n; ++j) real[a][j] += Rational(vecs[a][k]) * b[k][j];
  Rational best = U2;
  std::vector<size_t> idx(i);
  std::function<void(size_t, size_t)> rec = [&](size_t depth, size_t start) {
    if (depth == i) {
      RMatrix rows;
      IMat coords;
      for (auto k : idx) {
        rows.push_back(real[k]);
        coords.push_back(vecs[k]);
      }
      Int g = gcd_maximal_minors(coords);
      if (g == 0) return;
      Rational d = gram_det(rows) / Rational(g * g);
      if (d < best) best = d;
      return;
    }
    for (size_t k = start; k < vecs.size(); ++k) {
      idx[depth] = k;
      rec(depth + 1, k + 1);
    }
  };
  rec(0, 0);
  return {best, vecs.size()};
}

inline RMatrix dual_basis(const RMatrix& b) { return transpose(inverse(b)); }

struct AlphaResult {
  double value = 1.0;
  Rational alpha_sq = 1;
  size_t argmax_dim = 0;
};

// alpha_i(pi(Delta)) = 1 / min covolume of i-dim sublattices.
inline AlphaResult alpha_i(const SLattice& L, size_t i, size_t budget = 200000) {
  RMatrix M = project_to_real(L);
  size_t n = L.n();
  if (i > n) throw Error(ErrorKind::InvalidArgument, "dimension out of range");
  if (i == 0 || i == n) return {1.0, 1, i};
  MinCovolume mc = 2 * i > n ? min_sublattice_covolume_sq(dual_basis(M), n - i, budget)
                             : min_sublattice_covolume_sq(M, i, budget);
  AlphaResult r;
  r.alpha_sq = 1 / mc.d_sq;
  r.value = std::sqrt(r.alpha_sq.get_d());
  r.argmax_dim = i;
  return r;
}

inline AlphaResult alpha(const SLattice& L, size_t budget = 200000) {
  AlphaResult best;
  double lower = 1.0;
  for (size_t i = 1; i < L.n(); ++i) {
    try {
      AlphaResult r = alpha_i(L, i, budget);
      if (r.alpha_sq > best.alpha_sq) best = r;
      lower = std::max(lower, r.value);
    } catch (const BudgetError&) {
      throw BudgetError("alpha enumeration exceeded its budget", lower);
    }
  }
  return best;
}

struct SiegelRegion {
  bool euclid = false;                  // sup norm otherwise
  Rational radius = 1;                  // at infinity
  std::map<int64_t, int64_t> exponent;  // ball radius p^{m_p}
};

// Number of v in Delta (including 0) with ||v||_inf <= R and ||v||_p <= p^{m_p}.
inline Int siegel_transform(const SLattice& L, const SiegelRegion& f, size_t budget = 5000000) {
  if (f.radius < 0) return 0;
  RMatrix M = project_to_real(L);
  size_t n = L.n();
  Rational D = 1;
  for (int64_t p : L.S) {
    auto it = f.exponent.find(p);
    D *= rpow(p, it == f.exponent.end() ? 0 : it->second);
  }
  Rational R = D * f.radius;
  Rational R2 = f.euclid ? Rational(R * R) : Rational(R * R * static_cast<long>(n));
  RMatrix b = lll_reduce(M);
  auto vecs = short_vectors(b, R2, budget);
  Int count = 1;
  for (const auto& c : vecs) {
    std::vector<Rational> v(n, Rational(0));
    for (size_t k = 0; k < n; ++k)
      if (c[k] != 0)
        for (size_t j = 0; j < n; ++j) v[j] += Rational(c[k]) * b[k][j];
    bool in = true;
    if (!f.euclid)
      for (const auto& x : v)
        if (abs(x) > R) in = false;
    if (in) count += 2;
  }
  return count;
}

// Bound constant for the sup-norm ball of radius R in dimension n:
// count <= 2^{n-1} (2 R sqrt(n) + 1)^n alpha.
inline double schmidt_constant(size_t n, double R) {
  return std::pow(2.0, static_cast<double>(n) - 1) * std::pow(2 * R * std::sqrt(static_cast<double>(n)) + 1, static_cast<double>(n));
}

}  // namespace sqf
