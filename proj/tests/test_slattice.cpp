#include <gtest/gtest.h>

#include <random>

#include "sqf/slattice.hpp"

using namespace sqf;

namespace {

RMatrix diag(std::vector<Rational> a) {
  RMatrix B(a.size(), std::vector<Rational>(a.size(), Rational(0)));
  for (size_t i = 0; i < a.size(); ++i) B[i][i] = a[i];
  return B;
}

RMatrix random_sl(size_t n, std::mt19937_64& rng, int steps = 6) {
  RMatrix g = identity_rmatrix(n);
  std::uniform_int_distribution<size_t> idx(0, n - 1);
  std::uniform_int_distribution<int> c(-2, 2);
  for (int s = 0; s < steps; ++s) {
    size_t i = idx(rng), j = idx(rng);
    if (i == j) continue;
    int f = c(rng);
    for (size_t k = 0; k < n; ++k) g[i][k] += f * g[j][k];
  }
  return g;
}

SLattice random_lattice(size_t n, std::mt19937_64& rng, bool unit_rows = true) {
  SLattice L;
  L.S = {3, 5};
  std::uniform_int_distribution<int> e(-1, 1);
  std::vector<Rational> d(n, Rational(1));
  // S-unit row scalings keep the lattice unimodular
  int a = unit_rows ? e(rng) : 0;
  d[0] = rpow(3, a);
  d[n - 1] = rpow(3, -a);
  std::uniform_int_distribution<int> k(0, 2);
  Rational skew = Rational(std::vector<int>{1, 2, 7}[k(rng)]);
  d[0] *= 1 / skew;
  d[1] *= skew;
  L.basis = multiply(diag(d), random_sl(n, rng));
  return L;
}

// Direct search: min over tuples of Delta-vectors with bounded coefficients.
Rational direct_min_d_sq(const SLattice& L, size_t i, int K, size_t keep) {
  size_t n = L.n();
  std::vector<IVector> cs;
  IVector c(n, Int(0));
  std::vector<int> x(n, -K);
  while (true) {
    bool zero = true, pos = false;
    for (size_t k = n; k-- > 0;)
      if (x[k]) {
        zero = false;
        pos = x[k] > 0;
        break;
      }
    if (!zero && pos) {
      IVector v(n);
      for (size_t k = 0; k < n; ++k) v[k] = x[k];
      cs.push_back(v);
    }
    size_t k = 0;
    while (k < n && x[k] == K) x[k++] = -K;
    if (k == n) break;
    ++x[k];
  }
  std::vector<std::pair<Rational, RMatrix>> one;
  for (auto& v : cs) {
    RMatrix g = {L.vector_of(v)};
    one.push_back({d_squared_of_span(L, g), g});
  }
  std::sort(one.begin(), one.end(), [](auto& a, auto& b) { return a.first < b.first; });
  if (i == 1) return one[0].first;
  Rational best = -1;
  size_t m = std::min(keep, one.size());
  for (size_t a = 0; a < m; ++a)
    for (size_t b = a + 1; b < m; ++b) {
      RMatrix g = {one[a].second[0], one[b].second[0]};
      if (rank_of(g) < 2) continue;
      Rational d = d_squared_of_span(L, g);
      if (best < 0 || d < best) best = d;
    }
  return best;
}

}  // namespace

TEST(SLattice, DExamples) {
  SLattice Z{{3}, identity_rmatrix(2)};
  EXPECT_EQ(d_squared(Z, {{1, 0}}), 1);
  SLattice D{{3}, {{2, 0}, {0, 1}}};
  EXPECT_EQ(d_squared(D, {{2, 0}}), 4);
  SLattice T{{3}, {{3, 0}, {0, 1}}};
  EXPECT_EQ(d_squared(T, {{3, 0}}), 1);
  EXPECT_EQ(d_squared(Z, {}), 1);
  try {
    d_squared(Z, {{2, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSaturated);
  }
  // 3 e1 is fine over Z_S with 3 in S
  EXPECT_EQ(d_squared(Z, {{3, 0}}), 1);
}

TEST(SLattice, DBasisIndependent) {
  std::mt19937_64 rng(2);
  for (int it = 0; it < 100; ++it) {
    SLattice L = random_lattice(3, rng);
    RMatrix gens = saturate(L, {L.vector_of({1, 2, 0}), L.vector_of({0, 1, 1})});
    Rational d = d_squared(L, gens);
    RMatrix h = {gens[0], gens[1]};
    std::uniform_int_distribution<int> c(-3, 3);
    int f = c(rng);
    for (size_t k = 0; k < 3; ++k) h[0][k] += f * gens[1][k];
    for (auto& x : h[1]) x *= Rational(5, 3);  // S-unit
    EXPECT_EQ(d_squared(L, h), d);
  }
}

TEST(SLattice, SaturationFindsIntersection) {
  SLattice Z{{3}, identity_rmatrix(3)};
  auto s = saturate(Z, {{2, 4, 0}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(d_squared(Z, s), 5);
  EXPECT_EQ(d_squared_of_span(Z, {{2, 4, 0}}), 5);
}

TEST(SLattice, Submodularity) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> c(-3, 3);
  int checked = 0;
  for (int it = 0; it < 200; ++it) {
    size_t n = 3 + it % 2;
    SLattice L = random_lattice(n, rng);
    auto rnd = [&](size_t dim) {
      RMatrix g;
      while (g.size() < dim) {
        IVector v(n);
        for (auto& x : v) x = c(rng);
        g.push_back(L.vector_of(v));
        if (rank_of(g) < g.size()) g.pop_back();
      }
      return g;
    };
    RMatrix A = rnd(1 + it % (n - 1)), B = rnd(1 + (it / 2) % (n - 1));
    Rational dA = d_squared_of_span(L, A), dB = d_squared_of_span(L, B);
    RMatrix I = subspace_intersection(A, B), S = subspace_sum(A, B);
    Rational dI = I.empty() ? Rational(1) : d_squared(L, saturate(L, I));
    Rational dS = d_squared(L, saturate(L, S));
    EXPECT_GE(dA * dB, dI * dS);
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}

TEST(SLattice, ProjectExamples) {
  SLattice Z{{3, 5}, identity_rmatrix(3)};
  EXPECT_EQ(project_to_real(Z), identity_rmatrix(3));
  SLattice A{{3}, {{1, 0}, {Rational(1, 2), 1}}};
  auto M = project_to_real(A);
  EXPECT_EQ(abs(determinant(M)), 1);
  EXPECT_EQ(M, A.basis);
  SLattice B{{5}, {{5, 0}, {0, Rational(1, 5)}}};
  auto N = project_to_real(B);
  EXPECT_EQ(abs(determinant(N)), 1);
  for (auto& r : N)
    for (auto& x : r) EXPECT_GE(valuation(x, 5), 0);
  SLattice C{{3}, {{2, 0}, {0, 1}}};
  EXPECT_THROW(project_to_real(C), Error);
  // det 9 is an S-unit, so the lattice is unimodular; pi rescales by 1/9
  SLattice E{{3}, {{1, Rational(1, 3), 0}, {0, 1, 0}, {0, 0, 9}}};
  EXPECT_TRUE(E.unimodular());
  auto P = project_to_real(E);
  EXPECT_EQ(abs(determinant(P)), 1);
  for (auto& r : P)
    for (auto& x : r) EXPECT_GE(valuation(x, 3), 0);
}

TEST(SLattice, ProjectCovolumeOne) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 50; ++it) {
    SLattice L = random_lattice(3 + it % 2, rng);
    auto M = project_to_real(L);
    EXPECT_EQ(abs(determinant(M)), 1);
    for (int64_t p : L.S)
      for (auto& r : M)
        for (auto& x : r) EXPECT_GE(valuation(x, p), 0);
  }
}

TEST(SLattice, AlphaExamples) {
  SLattice Z{{3}, identity_rmatrix(3)};
  for (size_t i = 0; i <= 3; ++i) EXPECT_EQ(alpha_i(Z, i).alpha_sq, 1);
  // short projected vector of length 1/2
  SLattice K{{3}, diag({Rational(1, 2), 2, 1})};
  EXPECT_EQ(alpha_i(K, 1).alpha_sq, 4);
  EXPECT_EQ(direct_min_d_sq(K, 1, 10, 0), Rational(1, 4));
  EXPECT_EQ(alpha_i(K, 3).alpha_sq, 1);
}

TEST(SLattice, AlphaMatchesDirectSearch) {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 10; ++it) {
    // S-unit row scalings push the short vectors to large coefficients
    SLattice L = random_lattice(3, rng, false);
    for (size_t i = 1; i <= 2; ++i) {
      Rational a = alpha_i(L, i).alpha_sq;
      Rational direct = direct_min_d_sq(L, i, 6, 120);
      EXPECT_EQ(a, 1 / direct) << it << " " << i;
    }
  }
}

TEST(SLattice, SiegelTransform) {
  SLattice Z{{3}, identity_rmatrix(3)};
  SiegelRegion f;
  EXPECT_EQ(siegel_transform(Z, f), 27);
  f.radius = -1;
  EXPECT_EQ(siegel_transform(Z, f), 0);
  SiegelRegion g;
  g.exponent[3] = 1;  // ||v||_3 <= 3 allows v in (1/3) Z^3 with sup <= 1
  EXPECT_EQ(siegel_transform(Z, g), 343);
  g.radius = 1;
  g.exponent[3] = 0;
  g.euclid = true;
  EXPECT_EQ(siegel_transform(Z, g), 7);
}

TEST(SLattice, SchmidtBound) {
  std::mt19937_64 rng(77);
  SiegelRegion f;
  f.radius = 2;
  double c = schmidt_constant(3, 2.0);
  for (int it = 0; it < 30; ++it) {
    SLattice L = random_lattice(3, rng);
    double a = alpha(L).value;
    double t = siegel_transform(L, f).get_d();
    EXPECT_LE(t, c * a);
  }
}
