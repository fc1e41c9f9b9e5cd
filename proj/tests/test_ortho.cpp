#include <gtest/gtest.h>

#include <random>

#include "sqf/ortho.hpp"

using namespace sqf;

namespace {

// Product of random integral reflections with unit Q(w), applied to e1.
std::vector<Rational> random_orbit_target(const RMatrix& B, int64_t p, std::mt19937_64& rng, int count = 3) {
  size_t n = B.size();
  std::uniform_int_distribution<int> d(-4, 4);
  std::vector<Rational> v(n, Rational(0));
  v[0] = 1;
  for (int c = 0; c < count;) {
    std::vector<Rational> w(n);
    for (auto& x : w) x = d(rng);
    Rational Qw = qvalue(B, w);
    if (Qw == 0 || valuation(Qw, p) != 0) continue;
    Rational f = 2 * bilinear(B, v, w) / Qw;
    for (size_t i = 0; i < n; ++i) v[i] -= f * w[i];
    ++c;
  }
  return v;
}

RMatrix random_standard(size_t n, int64_t p, std::mt19937_64& rng) {
  int64_t u = smallest_nonresidue(p);
  std::vector<Rational> reps = {1, u, p, p * u};
  std::uniform_int_distribution<size_t> pick(0, 3);
  std::vector<Rational> c;
  for (size_t i = 0; i + 2 < n; ++i) c.push_back(reps[pick(rng)]);
  return standard_gram(c);
}

bool congruent_gram(const ModMatrix& B, const ModMatrix& X, int64_t p) {
  size_t n = B.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      int64_t s = 0;
      for (size_t a = 0; a < n; ++a)
        for (size_t b = 0; b < n; ++b) s = (s + X[a][i] * B[a][b] % p * X[b][j]) % p;
      if (((s - B[i][j]) % p + p) % p) return false;
    }
  return true;
}

}  // namespace

TEST(Ortho, Flow) {
  RMatrix B = standard_gram({1});
  EXPECT_EQ(flow(B, 5, 0).matrix, identity_rmatrix(3));
  auto a = flow(B, 5, 1);
  EXPECT_EQ(a.matrix[0][0], 5);
  EXPECT_EQ(a.matrix[2][2], Rational(1, 5));
  EXPECT_EQ(congruence(B, a.matrix), B);
  EXPECT_EQ(multiply(flow(B, 5, 2).matrix, flow(B, 5, -3).matrix), flow(B, 5, -1).matrix);
  EXPECT_THROW(flow(identity_rmatrix(3), 5, 1), Error);
  auto r = flow_real(4, 0.5);
  EXPECT_NEAR(r[0][0] * r[3][3], 1.0, 1e-15);
}

TEST(Ortho, FlowScalesOrbitCoordinates) {
  std::mt19937_64 rng(1);
  RMatrix B = standard_gram({1, 2});
  for (int it = 0; it < 20; ++it) {
    auto v = random_orbit_target(B, 5, rng);
    for (int64_t t : {-2, 1, 3}) {
      auto a = flow(B, 5, t).matrix;
      std::vector<Rational> w(4, Rational(0));
      for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j) w[i] += a[i][j] * v[j];
      EXPECT_EQ(w[0], rpow(5, t) * v[0]);
      EXPECT_EQ(w[3], rpow(5, -t) * v[3]);
      EXPECT_EQ(qvalue(B, w), qvalue(B, v));
    }
  }
}

TEST(Ortho, WittFiniteExamples) {
  int64_t p = 5;
  // x1x3 + x2^2 with 1/2 = 3 mod 5
  ModMatrix B = {{0, 0, 3}, {0, 1, 0}, {3, 0, 0}};
  ModVector e1 = {1, 0, 0};
  EXPECT_EQ(witt_finite(B, e1, e1, p), (ModMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  int found = 0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      for (int c = 0; c < 5; ++c) {
        ModVector v = {a, b, c};
        if (v == ModVector{0, 0, 0}) continue;
        if ((a * c + b * b) % 5) continue;
        auto X = witt_finite(B, e1, v, p);
        EXPECT_TRUE(congruent_gram(B, X, p));
        EXPECT_EQ(detail::apply(X, e1, p), v);
        ++found;
      }
  EXPECT_EQ(found, 24);
  EXPECT_THROW(witt_finite(B, e1, ModVector{0, 1, 0}, p), Error);
}

TEST(Ortho, WittFiniteRandomF7) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int64_t> d(0, 6);
  int64_t p = 7;
  int ok = 0;
  while (ok < 200) {
    ModMatrix B(4, ModVector(4));
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) B[i][j] = B[j][i] = d(rng);
    RMatrix Br(4, std::vector<Rational>(4));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) Br[i][j] = B[i][j];
    if (valuation(determinant(Br), p) != 0) continue;
    ModVector v1(4), v2(4);
    for (auto& x : v1) x = d(rng);
    if (v1 == ModVector(4, 0)) continue;
    int64_t target = detail::bil(B, v1, v1, p);
    bool got = false;
    for (int tries = 0; tries < 10000 && !got; ++tries) {
      for (auto& x : v2) x = d(rng);
      got = v2 != ModVector(4, 0) && detail::bil(B, v2, v2, p) == target;
    }
    if (!got) continue;
    auto X = witt_finite(B, v1, v2, p);
    EXPECT_TRUE(congruent_gram(B, X, p));
    EXPECT_EQ(detail::apply(X, v1, p), v2);
    ++ok;
  }
}

TEST(Ortho, Sylvester) {
  int64_t p = 5;
  ModMatrix I = {{1, 0}, {0, 1}};
  ModMatrix Z = {{0, 0}, {0, 0}};
  EXPECT_EQ(solve_symmetric_sylvester(I, Z, p), Z);
  ModMatrix C = {{2, 4}, {4, 1}};
  auto X = solve_symmetric_sylvester(I, C, p);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_EQ((X[j][i] + X[i][j]) % p, C[i][j]);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int64_t> d(0, 4);
  int done = 0;
  while (done < 100) {
    ModMatrix A(4, ModVector(4)), Cm(4, ModVector(4));
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        A[i][j] = A[j][i] = d(rng);
        Cm[i][j] = Cm[j][i] = d(rng);
      }
    RMatrix Ar(4, std::vector<Rational>(4));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) Ar[i][j] = A[i][j];
    if (valuation(determinant(Ar), p) != 0) continue;
    auto Xs = solve_symmetric_sylvester(A, Cm, p);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        int64_t s = 0;
        for (int k = 0; k < 4; ++k) s += Xs[k][i] * A[k][j] + A[i][k] * Xs[k][j];
        EXPECT_EQ(((s - Cm[i][j]) % p + p) % p, 0);
      }
    ++done;
  }
}

TEST(Ortho, LiftIdentity) {
  RMatrix B = standard_gram({1, 2});
  auto k = lift_isometry(B, 5, {1, 0, 0, 0}, 20);
  EXPECT_TRUE(k.verify({1, 0, 0, 0}).ok());
}

TEST(Ortho, LiftRandomTargets) {
  std::mt19937_64 rng(17);
  for (int64_t p : {3, 5, 7})
    for (size_t n : {3, 4, 5})
      for (int it = 0; it < 10; ++it) {
        RMatrix B = random_standard(n, p, rng);
        auto v = random_orbit_target(B, p, rng);
        auto k = lift_isometry(B, p, v, 20);
        auto c = k.verify(v);
        EXPECT_TRUE(c.first_column && c.gram && c.det) << p << " " << n;
      }
}

TEST(Ortho, LiftSplitForm) {
  // x1x4 + x2^2 + x3^2 is split over Q_5 since -1 = 2^2 mod 5
  RMatrix S = standard_gram({1, 1});
  std::vector<Rational> v = {1, 2, 0, -4};
  ASSERT_EQ(qvalue(S, v), 0);
  auto k = lift_isometry(S, 5, v, 20);
  EXPECT_TRUE(k.verify(v).ok());
}

TEST(Ortho, LiftErrors) {
  RMatrix B = standard_gram({1});
  try {
    lift_isometry(B, 5, {1, 1, 0}, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ValueMismatch);
  }
  // x1x4 + 3x2^2 + 6x3^2 has the unit zero (0, sqrt(-2), 1, 0) whose
  // unimodular part vanishes, so it is not in the orbit of e1
  RMatrix P = standard_gram({3, 6});
  std::vector<Rational> v = {0, sqrt_padic(Rational(-2), 3, 30).to_rational(), 1, 0};
  ASSERT_GE(valuation(qvalue(P, v), 3), 30);
  try {
    lift_isometry(P, 3, v, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotInOrbit);
  }
}

TEST(Ortho, PreservesMaxNorm) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> d(-200, 200);
  for (int64_t p : {3, 5}) {
    RMatrix B = random_standard(4, p, rng);
    auto v = random_orbit_target(B, p, rng);
    auto k = lift_isometry(B, p, v, 20);
    for (int it = 0; it < 50; ++it) {
      std::vector<Int> x(4);
      int64_t m = kInfiniteValuation;
      for (auto& c : x) {
        c = d(rng);
        if (c != 0) m = std::min(m, valuation(c, p));
      }
      if (m >= kInfiniteValuation || m > 5) continue;
      EXPECT_EQ(k.min_valuation_of_image(x), m);
    }
  }
}
