#include <gtest/gtest.h>

#include <random>

#include "sqf/volume.hpp"

using namespace sqf;

namespace {

// Residues w mod p^L (optionally units, optionally in one class) with
// Q(w) = target mod p^L, Q integral.
int64_t brute_congruence(const RMatrix& B, int64_t p, int64_t L, const Rational& target, bool units,
                         const Residue* cls = nullptr) {
  size_t n = B.size();
  int64_t M = to_int64(ipow(p, L));
  std::vector<int64_t> w(n, 0);
  int64_t count = 0;
  while (true) {
    bool unit = false;
    for (auto x : w)
      if (x % p) unit = true;
    bool ok = !units || unit;
    if (ok && cls) ok = unit && PRegion::class_key(w, p) == *cls;
    if (ok) {
      std::vector<Rational> v(w.begin(), w.end());
      Rational d = qvalue(B, v) - target;
      if (d == 0 || valuation(d, p) >= L) ++count;
    }
    size_t k = 0;
    while (k < n && w[k] == M - 1) w[k++] = 0;
    if (k == n) break;
    ++w[k];
  }
  return count;
}

QuadraticFormP real_form(std::vector<std::vector<double>> g) { return QuadraticFormP::real(g); }

}  // namespace

TEST(Volume, VarietyExamples) {
  VarietySpec all{3, std::nullopt, false, {}};
  for (int64_t l = 1; l <= 3; ++l) EXPECT_EQ(variety_volume(all, 5, 3, l).normalized, 1);
  VarietySpec units{1, std::nullopt, true, {}};
  for (int64_t l = 1; l <= 4; ++l) EXPECT_EQ(variety_volume(units, 3, 1, l).normalized, Rational(2, 3));
  VarietySpec cone{3, QuadPoly::form(standard_gram({1})), true, {}};
  for (int64_t l = 1; l <= 3; ++l) {
    auto rc = variety_volume(cone, 3, 2, l);
    EXPECT_EQ(rc.normalized, Rational(8, 9));
    // unimodular cone: every congruence solution is Hensel-regular
    EXPECT_EQ(rc.raw, brute_congruence(standard_gram({1}), 3, l, 0, true));
  }
}

TEST(Volume, VarietyCountsTrueZerosOnly) {
  // x1x3 + 3x2^2 over Z_3: units with x1 = x3 = 0 mod 3 satisfy the
  // congruence mod 3 but carry no zero (3x2^2 has valuation 1)
  RMatrix B = standard_gram({3});
  VarietySpec cone{3, QuadPoly::form(B), true, {}};
  auto rc = variety_volume(cone, 3, 2, 1);
  int64_t cong = brute_congruence(B, 3, 1, 0, true);
  EXPECT_EQ(cong, 14);
  // zeros need x1 or x3 a unit: 2 * 3 residues each way
  EXPECT_EQ(rc.raw, 12);
  for (int64_t l = 2; l <= 4; ++l) EXPECT_EQ(variety_volume(cone, 3, 2, l).normalized, Rational(4, 3));
}

TEST(Volume, ParallelepipedMatchesWedgeNorm) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> e(-6, 6);
  std::uniform_int_distribution<int> den(0, 1);
  for (int it = 0; it < 40; ++it) {
    int64_t p = it % 2 ? 3 : 5;
    size_t d = 1 + it % 2, n = 3;
    RMatrix v(d, std::vector<Rational>(n));
    for (auto& r : v)
      for (auto& x : r) {
        x = Rational(e(rng), den(rng) ? p : 1);
        x.canonicalize();
      }
    if (wedge_norm_p(v, p) == 0) continue;
    auto rc = parallelepiped_volume(v, p, std::max<int64_t>(2, parallelepiped_stable_level(v, p)));
    EXPECT_EQ(rc.normalized, wedge_norm_p(v, p));
  }
}

TEST(Volume, ParallelepipedBelowStableLevel) {
  // Smith valuations (-1, -1, 3) at 3: level 2 overcounts, level 3 is exact
  RMatrix v = {{Rational(5, 3), -4, Rational(4, 3)}, {Rational(-2, 3), 4, Rational(1, 3)}, {Rational(-4, 3), 2, 0}};
  EXPECT_EQ(wedge_norm_p(v, 3), Rational(1, 3));
  EXPECT_EQ(parallelepiped_stable_level(v, 3), 3);
  EXPECT_EQ(parallelepiped_volume(v, 3, 2).normalized, 1);
  EXPECT_EQ(parallelepiped_volume(v, 3, 3).normalized, Rational(1, 3));
}

TEST(Volume, OrbitVolume) {
  auto q3 = QuadraticFormP::finite(standard_gram({1}), 3);
  auto o = orbit_volume(q3);
  EXPECT_EQ(o.value, Rational(8, 9));
  EXPECT_TRUE(o.stabilized);
  EXPECT_EQ(o.stable_from, 1);
  EXPECT_EQ(o.c_K, Rational(8, 9) / Rational(2, 3));
  // x1x4 + x2^2 + x3^2 at 5 (split, -1 is a square): brute-force cone count mod 5
  auto q5 = QuadraticFormP::finite(standard_gram({1, 1}), 5);
  auto o5 = orbit_volume(q5);
  EXPECT_EQ(o5.value, Rational(brute_congruence(standard_gram({1, 1}), 5, 1, 0, true), 125));
  EXPECT_EQ(o5.value, Rational(36 * 4, 125));
  EXPECT_GE(o5.value, Rational(4, 5) / 125);
  for (const auto& v : o5.levels) EXPECT_EQ(v, o5.value);
  EXPECT_THROW(orbit_volume(QuadraticFormP::finite(identity_rmatrix(3), 5)), Error);
}

TEST(Volume, OrbitVolumeStabilizesOnStandardForms) {
  for (int64_t p : {3, 5}) {
    int64_t u = smallest_nonresidue(p);
    for (std::vector<Rational> c : {std::vector<Rational>{1}, {u}, {1, u}, {1, p}, {u, p * u}}) {
      auto o = orbit_volume(QuadraticFormP::finite(standard_gram(c), p));
      EXPECT_TRUE(o.stabilized) << p;
      for (const auto& v : o.levels) EXPECT_EQ(v, o.value);
    }
  }
}

TEST(Volume, JKernel) {
  auto q = QuadraticFormP::finite(standard_gram({1, 2}), 3);
  PBox unit{{0, 0, 0, 0}, {0, 0, 0, 0}};
  EXPECT_EQ(j_kernel(q, unit, 0, 0), 1);
  EXPECT_EQ(j_kernel(q, unit, 0, 5), 1);
  // first coordinate p^{-1} is outside Z_3
  EXPECT_EQ(j_kernel(q, unit, 1, 0), 0);
  // against a direct count of middle residues
  PBox box{{0, 0, 0, 0}, {-2, 0, 0, 1}};
  for (int64_t r : {-2, -1, 0, 1, 2})
    for (int zeta : {0, 1, 3, 4}) {
      Rational J = j_kernel(q, box, r, zeta);
      if (r < -2) continue;
      int64_t L = 1 - r;
      int64_t l = std::max<int64_t>(L, 1);
      int64_t M = to_int64(ipow(3, l)), cnt = 0;
      for (int64_t a = 0; a < M; ++a)
        for (int64_t b = 0; b < M; ++b) {
          Rational d = Rational(a * a) + 2 * Rational(b * b) - zeta;
          if (L <= 0 || d == 0 || valuation(d, 3) >= L) ++cnt;
        }
      Rational direct = rpow(3, -2 * r) * Rational(cnt) / Rational(M * M);
      if (r > 2) direct = 0;
      EXPECT_EQ(J, direct) << r << " " << zeta;
    }
}

TEST(Volume, LambdaPUnitBall) {
  for (int64_t p : {3, 5}) {
    auto q = QuadraticFormP::finite(standard_gram({1, smallest_nonresidue(p)}), p);
    PRegion ball;
    auto L = lambda_p(q, ball);
    EXPECT_EQ(L.shell, orbit_volume(q).value);
    EXPECT_EQ(L.z_set, std::vector<int64_t>{0});
    EXPECT_EQ(L.ball, L.shell / (1 - Rational(1, p * p)));
    PRegion big;
    big.exponent = 1;
    EXPECT_EQ(lambda_p(q, big).shell, L.shell * p * p);
    EXPECT_EQ(lambda_p(q, big).z_set, std::vector<int64_t>{-1});
  }
}

TEST(Volume, LambdaPClassTable) {
  int64_t p = 3;
  auto q = QuadraticFormP::finite(standard_gram({1, 2}), p);
  PRegion R;
  R.table[{1, 0, 0, 0}] = 1;  // the class of e1 gets radius 3
  auto L = lambda_p(q, R);
  Rational base = lambda_p(q, PRegion{}).shell;
  Residue e1 = {1, 0, 0, 0};
  EXPECT_EQ(L.shell, base + L.density.at(e1) * (p * p - 1));
  EXPECT_EQ(L.density.at(e1), Rational(p * brute_congruence(q.gram, p, 1, 0, true, &e1)) / 81);
}

TEST(Volume, VolumePAgainstBruteForce) {
  int64_t p = 3;
  for (auto c : {std::vector<Rational>{1}, std::vector<Rational>{1, 2}}) {
    RMatrix B = standard_gram(c);
    auto q = QuadraticFormP::finite(B, p);
    size_t n = B.size();
    for (int64_t t : {0, 1})
      for (auto [a, b] : std::vector<std::pair<int, int64_t>>{{0, 0}, {1, 1}, {0, 1}, {2, 0}}) {
        // v = p^{-t} w: vol = p^{nt} #{w mod p^{2t+b}} / p^{n(2t+b)}
        int64_t L = 2 * t + b;
        Rational expect;
        if (L <= 0) {
          expect = rpow(p, n * t);
        } else {
          Rational target = rpow(p, 2 * t) * a;
          expect = rpow(p, n * t) * Rational(brute_congruence(B, p, L, target, false)) / Rational(ipow(p, n * L));
        }
        EXPECT_EQ(volume_p(q, {a, b}, PRegion{}, t), expect) << n << " " << t << " " << a << " " << b;
      }
    // the shell keeps only unit w
    PRegion shell;
    shell.shell = true;
    Rational expect = rpow(p, n) * Rational(brute_congruence(B, p, 2, 0, true)) / Rational(ipow(p, 2 * n));
    EXPECT_EQ(volume_p(q, {0, 0}, shell, 1), expect);
  }
}

TEST(Volume, VolumePApproachesLambda) {
  for (int64_t p : {3, 5}) {
    auto q = QuadraticFormP::finite(standard_gram({1, smallest_nonresidue(p)}), p);
    auto L = lambda_p(q, PRegion{});
    for (int64_t b : {0, 1}) {
      int64_t t = 4;
      Rational V = volume_p(q, {1, b}, PRegion{}, t);
      Rational pred = L.ball * rpow(p, -b) * rpow(p, 2 * t);
      EXPECT_NEAR(Rational(V / pred).get_d(), 1.0, 0.02) << p << " " << b;
    }
  }
}

TEST(Volume, LambdaInfAnalytic) {
  InfRegion eu{RealNorm::Euclid, 1.0, Rational(1)};
  auto L3 = lambda_inf(real_form({{1, 0, 0}, {0, 1, 0}, {0, 0, -1}}), eu, 4000, 1);
  EXPECT_NEAR(L3.value, std::sqrt(2.0) * M_PI, 1e-9);
  auto L4 = lambda_inf(real_form({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, -1}}), eu, 4000, 1);
  EXPECT_NEAR(L4.value, M_PI, 1e-9);
  // scaling the form by 4 halves every direction length
  auto L4s = lambda_inf(real_form({{4, 0, 0, 0}, {0, 4, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, -4}}), eu, 4000, 1);
  EXPECT_NEAR(L4s.value, M_PI / 4, 1e-9);
}

TEST(Volume, LambdaInfSupNormReproducible) {
  InfRegion sup;
  auto q = real_form({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, -std::sqrt(2.0)}});
  auto a = lambda_inf(q, sup, 20000, 7), b = lambda_inf(q, sup, 20000, 7);
  EXPECT_EQ(a.value, b.value);
  auto c = lambda_inf(q, sup, 20000, 8);
  EXPECT_NEAR(a.value, c.value, 4 * std::hypot(a.stderr_, c.stderr_));
  EXPECT_THROW(lambda_inf(real_form({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), sup, 100, 1), Error);
}

TEST(Volume, VolumeInfAgainstQuadrature) {
  // x1^2 + x2^2 - x3^2 in the Euclidean ball of radius T, cylindrical coordinates
  auto direct = [](double a, double b, double T) {
    using GL = boost::math::quadrature::gauss<double, 30>;
    auto f = [&](double z) {
      double lo = std::max(a + z * z, 0.0), hi = std::min(b + z * z, T * T - z * z);
      return hi > lo ? M_PI * (hi - lo) : 0.0;
    };
    // kinks where the bounds switch
    std::vector<double> cuts = {-T, T};
    for (double c : {a, b}) {
      double z2 = (T * T - c) / 2;
      if (z2 > 0) {
        cuts.push_back(std::sqrt(z2));
        cuts.push_back(-std::sqrt(z2));
      }
      if (c < 0) {
        cuts.push_back(std::sqrt(-c));
        cuts.push_back(-std::sqrt(-c));
      }
    }
    std::sort(cuts.begin(), cuts.end());
    double s = 0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i)
      if (cuts[i + 1] > cuts[i]) s += GL::integrate(f, cuts[i], cuts[i + 1]);
    return s;
  };
  auto q = real_form({{1, 0, 0}, {0, 1, 0}, {0, 0, -1}});
  InfRegion eu{RealNorm::Euclid, 1.0, Rational(1)};
  for (auto [a, b, T] : std::vector<std::tuple<double, double, double>>{{-1, 1, 10}, {0.5, 2, 20}, {-3, -1, 8}}) {
    auto V = volume_inf(q, a, b, eu, T, 200, 3);
    EXPECT_NEAR(V.value / direct(a, b, T), 1.0, 2e-3) << a << " " << b << " " << T;
  }
  // large-T limit against lambda
  auto V = volume_inf(q, 0, 1, eu, 400, 200, 3);
  EXPECT_NEAR(V.value / (std::sqrt(2.0) * M_PI * 400), 1.0, 0.02);
}

TEST(Volume, VolumeInfScalingAndAdditivity) {
  auto q = real_form({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, -std::sqrt(2.0)}});
  InfRegion sup;
  auto v1 = volume_inf(q, 0, 1, sup, 30, 3000, 11);
  auto v2 = volume_inf(q, 0, 1, sup, 60, 3000, 11);
  EXPECT_NEAR(v1.value / 900, v2.value / 3600, 3 * (v1.stderr_ / 900 + v2.stderr_ / 3600));
  auto a = volume_inf(q, 0, 1, sup, 30, 3000, 11), b = volume_inf(q, 1, 2, sup, 30, 3000, 11),
       c = volume_inf(q, 0, 2, sup, 30, 3000, 11);
  EXPECT_NEAR(a.value + b.value, c.value, 3 * c.stderr_ + 1e-9 * c.value);
  EXPECT_EQ(volume_inf(q, 1, 1, sup, 30, 100, 11).value, 0);
}

TEST(Volume, VolumeVRatio) {
  QuadraticFormS q;
  q.n = 4;
  q.inf = real_form({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, -1}});
  q.finite[3] = QuadraticFormP::finite(RMatrix{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, -1}}, 3);
  SInterval I = SInterval::real_only(-1, 1);
  Region omega;
  STime T;
  T.T_inf = 100;
  T.n[3] = 3;
  auto V = volume_V(q, I, omega, T, 2000, 5);
  EXPECT_NEAR(V.ratio, 1.0, 0.02 + 3 * V.ratio_stderr);
  SInterval I2 = SInterval::real_only(-2, 2);
  auto V2 = volume_V(q, I2, omega, T, 2000, 5);
  EXPECT_NEAR(V2.value / V.value, 2.0, 0.02);
  SInterval E = SInterval::real_only(1, 1);
  EXPECT_EQ(volume_V(q, E, omega, T, 100, 5).value, 0);
}
