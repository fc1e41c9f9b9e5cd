#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "qform.hpp"

namespace sqf {

using ModMatrix = std::vector<std::vector<int64_t>>;
using ModVector = std::vector<int64_t>;
using IMatrix = std::vector<std::vector<Int>>;

struct FlowElement {
  int64_t p = 3;
  int64_t t = 0;
  RMatrix matrix;
};

// a_t = diag(p^t, 1, ..., 1, p^-t) on a standard form.
inline FlowElement flow(const RMatrix& B, int64_t p, int64_t t) {
  if (!is_standard(B, p)) throw Error(ErrorKind::NotStandardForm, "flow needs a standard form");
  size_t n = B.size();
  FlowElement f{p, t, identity_rmatrix(n)};
  f.matrix[0][0] = rpow(p, t);
  f.matrix[n - 1][n - 1] = rpow(p, -t);
  return f;
}

// Real counterpart diag(e^t, 1, ..., 1, e^-t).
inline std::vector<std::vector<double>> flow_real(size_t n, double t) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  m[0][0] = std::exp(t);
  m[n - 1][n - 1] = std::exp(-t);
  return m;
}

namespace detail {

inline int64_t md(int64_t a, int64_t p) { return ((a % p) + p) % p; }

inline int64_t inv_mod(int64_t a, int64_t p) { return to_int64(inverse_mod(Int(md(a, p)), Int(p))); }

inline int64_t bil(const ModMatrix& B, const ModVector& x, const ModVector& y, int64_t p) {
  int64_t s = 0;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < y.size(); ++j) s = (s + B[i][j] * x[i] % p * y[j]) % p;
  return md(s, p);
}

// I - 2 w w^T B / Q(w)
inline ModMatrix reflection(const ModMatrix& B, const ModVector& w, int64_t p) {
  size_t n = w.size();
  int64_t c = md(2 * inv_mod(bil(B, w, w, p), p), p);
  ModVector Bw(n, 0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) Bw[i] = (Bw[i] + B[i][j] * w[j]) % p;
  ModMatrix R(n, ModVector(n, 0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) R[i][j] = md((i == j) - c * w[i] % p * Bw[j], p);
  return R;
}

inline ModVector apply(const ModMatrix& A, const ModVector& x, int64_t p) {
  ModVector y(x.size(), 0);
  for (size_t i = 0; i < A.size(); ++i)
    for (size_t j = 0; j < x.size(); ++j) y[i] = (y[i] + A[i][j] * x[j]) % p;
  for (auto& v : y) v = md(v, p);
  return y;
}

inline ModMatrix mul(const ModMatrix& A, const ModMatrix& B, int64_t p) {
  size_t n = A.size(), m = B[0].size(), k = B.size();
  ModMatrix C(n, ModVector(m, 0));
  for (size_t i = 0; i < n; ++i)
    for (size_t l = 0; l < k; ++l)
      for (size_t j = 0; j < m; ++j) C[i][j] = (C[i][j] + A[i][l] * B[l][j]) % p;
  return C;
}

inline ModVector sub(const ModVector& a, const ModVector& b, int64_t p) {
  ModVector c(a.size());
  for (size_t i = 0; i < a.size(); ++i) c[i] = md(a[i] - b[i], p);
  return c;
}

}  // namespace detail

// X with X^T B X = B and X v1 = v2 over F_p, a product of at most two reflections.
inline ModMatrix witt_finite(const ModMatrix& B0, const ModVector& v1_, const ModVector& v2_, int64_t p) {
  using namespace detail;
  size_t n = B0.size();
  ModMatrix B = B0;
  for (auto& r : B)
    for (auto& x : r) x = md(x, p);
  ModVector v1 = v1_, v2 = v2_;
  for (auto& x : v1) x = md(x, p);
  for (auto& x : v2) x = md(x, p);
  if (bil(B, v1, v1, p) != bil(B, v2, v2, p)) throw Error(ErrorKind::NoIsometry, "Q(v1) != Q(v2)");
  ModMatrix I(n, ModVector(n, 0));
  for (size_t i = 0; i < n; ++i) I[i][i] = 1;
  if (v1 == v2) return I;
  ModVector d = sub(v1, v2, p);
  if (bil(B, d, d, p) != 0) return reflection(B, d, p);
  int64_t total = 1;
  for (size_t i = 0; i < n; ++i) total *= p;
  ModVector w(n);
  for (int64_t idx = 1; idx < total; ++idx) {
    int64_t r = idx;
    for (size_t i = n; i-- > 0;) {
      w[i] = r % p;
      r /= p;
    }
    if (bil(B, w, w, p) == 0 || bil(B, w, v1, p) == 0 || bil(B, w, v2, p) == 0) continue;
    ModMatrix Rw = reflection(B, w, p);
    ModVector u = apply(Rw, v1, p);
    if (u == v2) return Rw;
    ModVector e = sub(u, v2, p);
    if (bil(B, e, e, p) == 0) continue;
    return mul(reflection(B, e, p), Rw, p);
  }
  throw Error(ErrorKind::NoIsometry, "no auxiliary reflection");
}

// X with X^T A + A X = C mod p; free variables are zero. With first_col_zero
// the first column of X is forced to vanish and the (0,0) equation must hold.
inline ModMatrix solve_symmetric_sylvester(const ModMatrix& A, const ModMatrix& C, int64_t p,
                                           bool first_col_zero = false) {
  using detail::md;
  size_t n = A.size();
  auto var = [n](size_t r, size_t c) { return r * n + c; };
  size_t nv = n * n;
  std::vector<ModVector> rows;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i; j < n; ++j) {
      ModVector eq(nv + 1, 0);
      // (X^T A)_{ij} = sum_k X_{ki} A_{kj};  (A X)_{ij} = sum_k A_{ik} X_{kj}
      for (size_t k = 0; k < n; ++k) {
        eq[var(k, i)] = md(eq[var(k, i)] + A[k][j], p);
        eq[var(k, j)] = md(eq[var(k, j)] + A[i][k], p);
      }
      eq[nv] = md(C[i][j], p);
      if (first_col_zero)
        for (size_t k = 0; k < n; ++k) eq[var(k, 0)] = 0;
      rows.push_back(eq);
    }
  std::vector<size_t> pivot_col;
  size_t r = 0;
  for (size_t c = 0; c < nv && r < rows.size(); ++c) {
    size_t piv = r;
    while (piv < rows.size() && rows[piv][c] == 0) ++piv;
    if (piv == rows.size()) continue;
    std::swap(rows[piv], rows[r]);
    int64_t inv = detail::inv_mod(rows[r][c], p);
    for (auto& x : rows[r]) x = x * inv % p;
    for (size_t k = 0; k < rows.size(); ++k) {
      if (k == r || rows[k][c] == 0) continue;
      int64_t f = rows[k][c];
      for (size_t l = 0; l <= nv; ++l) rows[k][l] = md(rows[k][l] - f * rows[r][l], p);
    }
    pivot_col.push_back(c);
    ++r;
  }
  for (size_t k = r; k < rows.size(); ++k)
    if (rows[k][nv] != 0) throw Error(ErrorKind::ValueMismatch, "Sylvester system inconsistent");
  ModMatrix X(n, ModVector(n, 0));
  for (size_t k = 0; k < r; ++k) X[pivot_col[k] / n][pivot_col[k] % n] = rows[k][nv];
  return X;
}

struct OrthoCheck {
  bool first_column = false;
  bool gram = false;
  bool det = false;
  bool integral = false;
  bool ok() const { return first_column && gram && det && integral; }
};

// Element of K_p = SL_n(Z_p) cap SO(q) known mod p^precision.
struct OrthoElement {
  int64_t p = 3;
  int64_t precision = 0;
  IMatrix matrix;  // residues mod p^precision
  RMatrix form;

  OrthoCheck verify(const std::vector<Rational>& v) const { return verify_at(v, precision); }

  OrthoCheck verify_at(const std::vector<Rational>& v, int64_t N) const {
    OrthoCheck c;
    size_t n = matrix.size();
    Int M = ipow(p, N);
    c.integral = true;
    c.first_column = true;
    for (size_t i = 0; i < n; ++i)
      if (mod(matrix[i][0] - rational_mod(v[i], p, N), M) != 0) c.first_column = false;
    IMatrix Bm(n, std::vector<Int>(n));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) Bm[i][j] = rational_mod(form[i][j], p, N);
    c.gram = true;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        Int s = 0;
        for (size_t a = 0; a < n; ++a)
          for (size_t b = 0; b < n; ++b) s += matrix[a][i] * Bm[a][b] * matrix[b][j];
        if (mod(s - Bm[i][j], M) != 0) c.gram = false;
      }
    RMatrix k(n, std::vector<Rational>(n));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) k[i][j] = Rational(matrix[i][j]);
    c.det = mod(determinant(k).get_num() - 1, M) == 0;
    return c;
  }

  // max norm of k x, read mod p^precision, for an integral x
  int64_t min_valuation_of_image(const std::vector<Int>& x) const {
    int64_t m = kInfiniteValuation;
    Int M = ipow(p, precision);
    for (size_t i = 0; i < matrix.size(); ++i) {
      Int s = 0;
      for (size_t j = 0; j < x.size(); ++j) s += matrix[i][j] * x[j];
      s = mod(s, M);
      if (s != 0) m = std::min(m, valuation(s, p));
    }
    return m;
  }
};

namespace detail {

inline int64_t val_mod(const Int& x, int64_t p, int64_t cap) {
  if (x == 0) return cap;
  return std::min(cap, valuation(x, p));
}

}  // namespace detail

// k in K_p with k e1 = v, k^T B k = B, det k = 1 mod p^N, for a standard B.
inline OrthoElement lift_isometry(const RMatrix& B, int64_t p, const std::vector<Rational>& v, int64_t N = 20) {
  using detail::md;
  if (!is_standard(B, p)) throw Error(ErrorKind::NotStandardForm, "lift_isometry needs a standard form");
  size_t n = B.size();
  if (v.size() != n) throw Error(ErrorKind::InvalidArgument, "dimension mismatch");
  int64_t minv = kInfiniteValuation;
  for (const auto& x : v) minv = std::min(minv, valuation(x, p));
  if (minv != 0) throw Error(ErrorKind::ValueMismatch, "target is not a unit vector");
  if (valuation(qvalue(B, v), p) < N) throw Error(ErrorKind::ValueMismatch, "q(v) != q(e1)");

  // unit block first: 0, n-1, unit middles; then the p-middles
  std::vector<size_t> perm = {0, n - 1};
  std::vector<size_t> pmid;
  for (size_t i = 1; i + 1 < n; ++i) (valuation(B[i][i], p) == 0 ? perm : pmid).push_back(i);
  size_t r = perm.size(), s = pmid.size();
  perm.insert(perm.end(), pmid.begin(), pmid.end());

  int64_t Nw = N + static_cast<int64_t>(s) + 1;
  Int M = ipow(p, Nw);
  IMatrix Bm(n, std::vector<Int>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) Bm[i][j] = rational_mod(B[perm[i]][perm[j]], p, Nw);
  std::vector<Int> vp(n);
  for (size_t i = 0; i < n; ++i) vp[i] = rational_mod(v[perm[i]], p, Nw);

  bool unit_part = false;
  for (size_t i = 0; i < r; ++i)
    if (mod(vp[i], Int(p)) != 0) unit_part = true;
  if (!unit_part) throw Error(ErrorKind::NotInOrbit, "target's unimodular part vanishes mod p");

  ModMatrix B1(r, ModVector(r)), B2(s, ModVector(s));
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < r; ++j) B1[i][j] = to_int64(mod(Bm[i][j], Int(p)));
  for (size_t i = 0; i < s; ++i)
    for (size_t j = 0; j < s; ++j) B2[i][j] = to_int64(mod(Bm[r + i][r + j] / p, Int(p)));
  ModVector e1(r, 0), v1(r);
  e1[0] = 1;
  for (size_t i = 0; i < r; ++i) v1[i] = to_int64(mod(vp[i], Int(p)));
  ModMatrix X0 = witt_finite(B1, e1, v1, p);

  IMatrix k(n, std::vector<Int>(n, Int(0)));
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < r; ++j) k[i][j] = X0[i][j];
  for (size_t i = r; i < n; ++i) k[i][i] = 1;
  for (size_t i = 0; i < n; ++i) k[i][0] = vp[i];

  // B'^{-1} mod p
  RMatrix B1r(r, std::vector<Rational>(r));
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < r; ++j) B1r[i][j] = B1[i][j];
  RMatrix B1inv_r = inverse(B1r);
  ModMatrix B1inv(r, ModVector(r));
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < r; ++j) B1inv[i][j] = to_int64(rational_mod(B1inv_r[i][j], p, 1));

  auto error = [&]() {
    IMatrix E(n, std::vector<Int>(n));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        Int acc = 0;
        for (size_t a = 0; a < n; ++a) {
          if (k[a][i] == 0) continue;
          for (size_t b = 0; b < n; ++b) acc += k[a][i] * Bm[a][b] * k[b][j];
        }
        E[i][j] = mod(acc - Bm[i][j], M);
      }
    return E;
  };
  auto update = [&](const ModMatrix& X, int64_t mu) {
    // k <- k (I + p^mu X)
    Int pm = ipow(p, mu);
    IMatrix nk = k;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        Int acc = 0;
        for (size_t l = 0; l < n; ++l)
          if (X[l][j]) acc += k[i][l] * X[l][j];
        nk[i][j] = mod(k[i][j] + pm * acc, M);
      }
    k = nk;
  };

  for (int iter = 0; iter < 4 * Nw + 8; ++iter) {
    IMatrix E = error();
    int64_t v11 = Nw, v22 = Nw + 1;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        if (i >= r && j >= r)
          v22 = std::min(v22, detail::val_mod(E[i][j], p, Nw) + (E[i][j] == 0 ? 1 : 0));
        else
          v11 = std::min(v11, detail::val_mod(E[i][j], p, Nw));
      }
    int64_t mu = std::min(v11, v22 - 1);
    if (mu >= Nw - 1 || (v11 >= Nw && v22 >= Nw)) break;
    if (mu < 1) throw Error(ErrorKind::PrecisionExhausted, "lifting lost its invariant");
    Int pm = ipow(p, mu);
    ModMatrix X(n, ModVector(n, 0));
    ModMatrix C11(r, ModVector(r));
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < r; ++j) C11[i][j] = to_int64(mod(-E[i][j] / pm, Int(p)));
    ModMatrix X11 = solve_symmetric_sylvester(B1, C11, p, true);
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < r; ++j) X[i][j] = X11[i][j];
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < s; ++j) {
        int64_t acc = 0;
        for (size_t l = 0; l < r; ++l) acc = (acc + B1inv[i][l] * to_int64(mod(-E[l][r + j] / pm, Int(p)))) % p;
        X[i][r + j] = md(acc, p);
      }
    update(X, mu);
    if (s == 0) continue;
    E = error();
    Int pm1 = pm * p;
    ModMatrix C22(s, ModVector(s));
    for (size_t i = 0; i < s; ++i)
      for (size_t j = 0; j < s; ++j) {
        if (mod(E[r + i][r + j], pm1) != 0) throw Error(ErrorKind::PrecisionExhausted, "lower block error too large");
        C22[i][j] = to_int64(mod(-E[r + i][r + j] / pm1, Int(p)));
      }
    ModMatrix X22 = solve_symmetric_sylvester(B2, C22, p);
    ModMatrix Y(n, ModVector(n, 0));
    for (size_t i = 0; i < s; ++i)
      for (size_t j = 0; j < s; ++j) Y[r + i][r + j] = X22[i][j];
    update(Y, mu);
  }

  // undo the permutation
  OrthoElement out;
  out.p = p;
  out.precision = N;
  out.form = B;
  out.matrix.assign(n, std::vector<Int>(n));
  Int MN = ipow(p, N);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) out.matrix[perm[i]][perm[j]] = mod(k[i][j], MN);
  RMatrix kr(n, std::vector<Rational>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) kr[i][j] = Rational(out.matrix[i][j]);
  if (mod(determinant(kr).get_num() + 1, Int(p)) == 0) {
    // right multiplication by the reflection x2 -> -x2 fixes e1
    for (size_t i = 0; i < n; ++i) out.matrix[i][1] = mod(-out.matrix[i][1], MN);
  }
  OrthoCheck c = out.verify(v);
  if (!c.ok()) throw Error(ErrorKind::PrecisionExhausted, "lifted isometry failed verification");
  return out;
}

}  // namespace sqf
