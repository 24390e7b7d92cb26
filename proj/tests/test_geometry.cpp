#include <gtest/gtest.h>

#include <random>

#include "homwarp/geometry.hpp"
#include "support.hpp"

using namespace homwarp;

namespace {

Homography3 random_pixel_homography(std::mt19937_64& rng, double side = 128.0, double rho = 32.0) {
  const auto off = oracle::random_offsets(rng, rho);
  return Homography3(oracle::square_offsets_homography(side, off), Frame::Pixel);
}

void expect_entries_near(const Homography3& a, const oracle::M3& b, double tol) {
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

}  // namespace

TEST(Canonicalize, ScaledIdentityBecomesIdentity) {
  EXPECT_EQ(canonicalize(Homography3({2, 0, 0, 0, 2, 0, 0, 0, 2}, Frame::Pixel)), Homography3::identity());
  EXPECT_EQ(canonicalize(Homography3({-3, 0, 0, 0, -3, 0, 0, 0, -3}, Frame::Pixel)), Homography3::identity());
}

TEST(Canonicalize, VanishingCornerIsDegenerate) {
  try {
    canonicalize(Homography3({1, 0, 0, 0, 1, 0, 0, 0, 0}, Frame::Pixel));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateHomography);
  }
  EXPECT_THROW(canonicalize(Homography3({1, 0, 0, 0, 1, 0, 0, 0, 1e-13}, Frame::Pixel)), Error);
}

TEST(Normalizer, MapsCornersOfTheRaster) {
  const PixelNormalizer n(128, 96);
  const Point2 a = n.to_normalized({0, 0}), b = n.to_normalized({128, 96});
  EXPECT_DOUBLE_EQ(a.x, -1.0);
  EXPECT_DOUBLE_EQ(a.y, -1.0);
  EXPECT_DOUBLE_EQ(b.x, 1.0);
  EXPECT_DOUBLE_EQ(b.y, 1.0);
  const Mat3 p = matmul(n.matrix(), n.inverse());
  const Mat3 id{1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(p[i], id[i], 1e-12);
}

TEST(Normalize, IdentityIsFixed) {
  const PixelNormalizer n(128, 128);
  EXPECT_LT(max_abs_diff(normalize_homography(Homography3::identity(), n), Homography3::identity(Frame::Normalized)),
            1e-15);
}

TEST(Normalize, TranslationMatchesExplicitConjugation) {
  const PixelNormalizer n(128, 128);
  const Homography3 h = normalize_homography(Homography3::translation(32, 0), n);
  EXPECT_EQ(h.frame(), Frame::Normalized);
  const oracle::M3 t{1, 0, 32, 0, 1, 0, 0, 0, 1};
  const auto m = oracle::normalizer(128, 128);
  expect_entries_near(h, oracle::scaled_to_unit_corner(oracle::mul(oracle::mul(m, t), oracle::inverse(m))), 1e-14);
  expect_entries_near(h, {1, 0, 0.5, 0, 1, 0, 0, 0, 1}, 1e-14);
}

TEST(Normalize, ScalingHasClosedForm) {
  const PixelNormalizer n(128, 128);
  for (double s : {0.5, 0.9, 1.25, 2.0}) {
    const Homography3 h = normalize_homography(Homography3::scaling(s, s), n);
    expect_entries_near(h, {s, 0, s - 1, 0, s, s - 1, 0, 0, 1}, 1e-14);
  }
}

TEST(Normalize, RejectsWrongFrame) {
  const PixelNormalizer n(16, 16);
  EXPECT_THROW(normalize_homography(Homography3::identity(Frame::Normalized), n), Error);
  EXPECT_THROW(denormalize_homography(Homography3::identity(Frame::Pixel), n), Error);
}

TEST(Denormalize, HalfWidthTranslation) {
  const PixelNormalizer n(128, 128);
  const Homography3 h = denormalize_homography(Homography3::translation(0.5, 0, Frame::Normalized), n);
  EXPECT_EQ(h.frame(), Frame::Pixel);
  expect_entries_near(h, {1, 0, 32, 0, 1, 0, 0, 0, 1}, 1e-12);
}

TEST(Normalize, RoundTripOnRandomHomographies) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    const Homography3 h = random_pixel_homography(rng);
    const PixelNormalizer n(128, 128);
    const Homography3 back = denormalize_homography(normalize_homography(h, n), n);
    EXPECT_LT(max_abs_diff(back, h), 1e-10);
    const Homography3 hn(oracle::normalized_target(128, oracle::random_offsets(rng, 32)), Frame::Normalized);
    EXPECT_LT(max_abs_diff(normalize_homography(denormalize_homography(hn, n), n), hn), 1e-10);
  }
}

TEST(Normalize, ConjugationIsPointConsistent) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double w = 64 + 64 * u(rng), hgt = 48 + 64 * u(rng);
    const PixelNormalizer n(w, hgt);
    const Homography3 h = random_pixel_homography(rng, std::min(w, hgt), 8.0);
    const Homography3 hn = normalize_homography(h, n);
    const Point2 p{u(rng) * w, u(rng) * hgt};
    const Point2 direct = n.to_normalized(apply_point(h, p));
    const Point2 via = apply_point(hn, n.to_normalized(p));
    EXPECT_NEAR(direct.x, via.x, 1e-9);
    EXPECT_NEAR(direct.y, via.y, 1e-9);
  }
}

TEST(Compose, InverseGivesIdentity) {
  std::mt19937_64 rng(3);
  const Homography3 h = random_pixel_homography(rng);
  EXPECT_LT(max_abs_diff(compose(h, invert(h)), Homography3::identity()), 1e-12);
}

TEST(Compose, TranslationsAdd) {
  const Homography3 c = compose(Homography3::translation(3, -1), Homography3::translation(-7, 5));
  const oracle::M3 p = oracle::mul({1, 0, 3, 0, 1, -1, 0, 0, 1}, {1, 0, -7, 0, 1, 5, 0, 0, 1});
  expect_entries_near(c, p, 1e-15);
  expect_entries_near(c, {1, 0, -4, 0, 1, 4, 0, 0, 1}, 1e-15);
}

TEST(Compose, AppliesRightFactorFirst) {
  std::mt19937_64 rng(4);
  const Homography3 a = random_pixel_homography(rng), b = random_pixel_homography(rng);
  const Point2 p{40, 70};
  const Point2 seq = apply_point(a, apply_point(b, p));
  const Point2 c = apply_point(compose(a, b), p);
  EXPECT_NEAR(seq.x, c.x, 1e-9);
  EXPECT_NEAR(seq.y, c.y, 1e-9);
}

TEST(Compose, IsAssociative) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const Homography3 a = random_pixel_homography(rng), b = random_pixel_homography(rng),
                      c = random_pixel_homography(rng);
    EXPECT_LT(max_abs_diff(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-9);
  }
}

TEST(Compose, FrameMismatchIsRejected) {
  EXPECT_THROW(compose(Homography3::identity(Frame::Pixel), Homography3::identity(Frame::Normalized)), Error);
}

TEST(Compose, ChainFoldsFromTheLeft) {
  std::mt19937_64 rng(6);
  std::vector<Homography3> hs;
  for (int i = 0; i < 3; ++i)
    hs.emplace_back(oracle::normalized_target(128, oracle::random_offsets(rng, 16)), Frame::Normalized);
  const Homography3 chain = compose_chain(hs, Frame::Normalized);
  // H2 * (H1 * H0)
  oracle::M3 expect = oracle::mul(hs[2].m(), oracle::mul(hs[1].m(), hs[0].m()));
  expect_entries_near(chain, oracle::scaled_to_unit_corner(expect), 1e-12);
  EXPECT_EQ(compose_chain({}, Frame::Normalized), Homography3::identity(Frame::Normalized));
}

TEST(Invert, MatchesAdjugate) {
  EXPECT_EQ(invert(Homography3::identity()), Homography3::identity());
  expect_entries_near(invert(Homography3::translation(3, 4)), {1, 0, -3, 0, 1, -4, 0, 0, 1}, 1e-15);
  std::mt19937_64 rng(7);
  for (int k = 0; k < 50; ++k) {
    const Homography3 h = random_pixel_homography(rng);
    expect_entries_near(invert(h), oracle::scaled_to_unit_corner(oracle::inverse(h.m())), 1e-10);
  }
}

TEST(Invert, RankDeficientIsSingular) {
  try {
    invert(Homography3({1, 2, 3, 2, 4, 6, 0, 0, 1}, Frame::Pixel));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularMatrix);
  }
}

TEST(Invert, PreservesFrame) {
  EXPECT_EQ(invert(Homography3::translation(0.1, 0.2, Frame::Normalized)).frame(), Frame::Normalized);
}

TEST(ApplyPoint, Basics) {
  const Point2 p = apply_point(Homography3::identity(), {5, 7});
  EXPECT_EQ(p.x, 5);
  EXPECT_EQ(p.y, 7);
  const Point2 q = apply_point(Homography3::translation(3, 4), {0, 0});
  EXPECT_EQ(q.x, 3);
  EXPECT_EQ(q.y, 4);
  const Point2 r = apply_point(Homography3({1, 0, 0, 0, 1, 0, 0.001, 0, 1}, Frame::Pixel), {100, 0});
  EXPECT_NEAR(r.x, 100.0 / 1.1, 1e-12);
  EXPECT_NEAR(r.y, 0.0, 1e-15);
}

TEST(ApplyPoint, PointAtInfinity) {
  try {
    apply_point(Homography3({1, 0, 0, 0, 1, 0, 0.01, 0, 1}, Frame::Pixel), {-100, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PointAtInfinity);
  }
}

TEST(Dlt, IdenticalCornersGiveIdentity) {
  const CornerQuad q = square_corners(10, 20, 64);
  EXPECT_LT(max_abs_diff(dlt_solve(q, q), Homography3::identity()), 1e-12);
}

TEST(Dlt, RecoversKnownHomography) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 200; ++k) {
    const auto off = oracle::random_offsets(rng, 32);
    const oracle::M3 truth = oracle::square_offsets_homography(128, off);
    const CornerQuad src = square_corners(0, 0, 128);
    CornerQuad dst{};
    for (int i = 0; i < 4; ++i) {
      const auto p = oracle::project(truth, src[i].x, src[i].y);
      dst[i] = {p[0], p[1]};
    }
    expect_entries_near(dlt_solve(src, dst), truth, 1e-6);
  }
}

TEST(Dlt, OverdeterminedExactData) {
  std::mt19937_64 rng(9);
  const oracle::M3 truth = oracle::square_offsets_homography(100, oracle::random_offsets(rng, 20));
  std::vector<Point2> src, dst;
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 30; ++i) {
    src.push_back({u(rng), u(rng)});
    const auto p = oracle::project(truth, src.back().x, src.back().y);
    dst.push_back({p[0], p[1]});
  }
  expect_entries_near(dlt_solve(src, dst), truth, 1e-8);
}

TEST(Dlt, CollinearSourceIsDegenerate) {
  const CornerQuad src{{{0, 0}, {1, 1}, {2, 2}, {0, 5}}};
  const CornerQuad dst{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  try {
    dlt_solve(src, dst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateConfiguration);
  }
}

TEST(Dlt, TooFewPoints) {
  const std::vector<Point2> p{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(dlt_solve(p, p), Error);
}

TEST(Offsets, ZeroOffsetsGiveIdentity) {
  const std::array<double, 8> z{};
  EXPECT_LT(max_abs_diff(offsets_to_homography(square_corners(0, 0, 128), z), Homography3::identity()), 1e-12);
}

TEST(Offsets, UniformShiftIsTranslation) {
  const std::array<double, 8> o{5, -2, 5, -2, 5, -2, 5, -2};
  expect_entries_near(offsets_to_homography(square_corners(0, 0, 128), o), {1, 0, 5, 0, 1, -2, 0, 0, 1}, 1e-10);
}

TEST(Offsets, CollapsedCornersAreDegenerate) {
  // TR moved onto TL
  const std::array<double, 8> o{0, 0, -128, 0, 0, 0, 0, 0};
  try {
    offsets_to_homography(square_corners(0, 0, 128), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateConfiguration);
  }
}

TEST(Offsets, MatchesClosedFormSquareToQuad) {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 100; ++k) {
    const auto off = oracle::random_offsets(rng, 32);
    expect_entries_near(offsets_to_homography(square_corners(0, 0, 128), off),
                        oracle::square_offsets_homography(128, off), 1e-8);
  }
}

TEST(PointConvention, TargetMapsPatchBCornersIntoPatchA) {
  // x_a ~ H_ba x_b: the corner of patch_b lands on the displaced corner in patch_a.
  const std::array<double, 8> o{3, -4, 6, 2, -5, 1, 2, 7};
  const Homography3 h = offsets_to_homography(square_corners(0, 0, 32), o);
  const CornerQuad c = square_corners(0, 0, 32);
  for (int i = 0; i < 4; ++i) {
    const Point2 p = apply_point(h, c[i]);
    EXPECT_NEAR(p.x, c[i].x + o[2 * i], 1e-9);
    EXPECT_NEAR(p.y, c[i].y + o[2 * i + 1], 1e-9);
  }
}

TEST(CornerError, ZeroWhenEqual) {
  std::mt19937_64 rng(11);
  const Homography3 h = random_pixel_homography(rng);
  EXPECT_EQ(mean_corner_error(h, h, square_corners(0, 0, 128)), 0.0);
}

TEST(CornerError, TranslationByThreeFour) {
  std::mt19937_64 rng(12);
  const Homography3 h = random_pixel_homography(rng);
  const Homography3 est = compose(Homography3::translation(3, 4), h);
  EXPECT_NEAR(mean_corner_error(est, h, square_corners(0, 0, 128)), 5.0, 1e-12);
}

TEST(CornerError, InvariantToCornerOrder) {
  std::mt19937_64 rng(13);
  const Homography3 a = random_pixel_homography(rng), b = random_pixel_homography(rng);
  CornerQuad q = square_corners(0, 0, 128);
  const double e = mean_corner_error(a, b, q);
  std::sort(q.begin(), q.end(), [](const Point2& l, const Point2& r) { return l.x + 3 * l.y > r.x + 3 * r.y; });
  EXPECT_NEAR(mean_corner_error(a, b, q), e, 1e-12);
}

TEST(Convexity, RejectsBowtieAndSliver) {
  EXPECT_TRUE(is_convex_quad(square_corners(0, 0, 10), 1.0));
  EXPECT_FALSE(is_convex_quad({{{0, 0}, {10, 10}, {10, 0}, {0, 10}}}, 1.0));
  EXPECT_FALSE(is_convex_quad(square_corners(0, 0, 10), 1000.0));
}

TEST(TextForm, RoundTrip) {
  std::mt19937_64 rng(14);
  const Homography3 h = random_pixel_homography(rng);
  const Homography3 back = parse_homography(to_text(h), Frame::Pixel);
  EXPECT_EQ(back, h);
  EXPECT_THROW(parse_homography("1 2 3", Frame::Pixel), Error);
}
