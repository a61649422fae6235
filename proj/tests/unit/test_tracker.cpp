#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "dynscene/hungarian.hpp"
#include "dynscene/plane_tracker.hpp"
#include "support.hpp"

using namespace dynscene;
using namespace dynscene::testing;

namespace
{

struct Brute
{
  double cost = std::numeric_limits<double>::infinity();
  Assignment pairs;
};

// Every injective map from the smaller side into the larger one; ties keep
// the lexicographically smallest sorted pair list.
Brute brute_force(const Eigen::MatrixXd & c)
{
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  const bool wide = n <= m;
  const int small = wide ? n : m;
  const int large = wide ? m : n;
  Brute best;
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    Assignment pairs;
    double total = 0.0;
    for (int i = 0; i < small; ++i) {
      const int r = wide ? i : perm[i];
      const int col = wide ? perm[i] : i;
      pairs.emplace_back(r, col);
      total += c(r, col);
    }
    std::sort(pairs.begin(), pairs.end());
    if (total < best.cost || (total == best.cost && pairs < best.pairs)) {
      best.cost = total;
      best.pairs = pairs;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Box2D box_at(double cx, double cy, double w, double h)
{
  return Box2D::from_corners(Vec2(cx - w / 2, cy - h / 2), Vec2(cx + w / 2, cy + h / 2));
}

bool boxes_close(const Box2D & a, const Box2D & b, double tol)
{
  return (a.min_corner - b.min_corner).cwiseAbs().maxCoeff() <= tol &&
         (a.max_corner - b.max_corner).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

TEST_CASE("hungarian examples")
{
  Eigen::MatrixXd diag = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  CHECK(hungarian_assign(diag) == Assignment{{0, 0}, {1, 1}, {2, 2}});
  CHECK(hungarian_assign(Eigen::MatrixXd::Constant(1, 1, 4.2)) == Assignment{{0, 0}});
  CHECK(hungarian_assign(Eigen::MatrixXd(0, 0)).empty());
  CHECK(hungarian_assign(Eigen::MatrixXd(0, 3)).empty());
  CHECK(hungarian_assign(Eigen::MatrixXd(2, 0)).empty());

  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian_assign(bad), std::invalid_argument);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(hungarian_assign(bad), std::invalid_argument);
}

TEST_CASE("hungarian tie-break prefers low rows, then low columns")
{
  CHECK(hungarian_assign(Eigen::MatrixXd::Zero(2, 2)) == Assignment{{0, 0}, {1, 1}});
  CHECK(hungarian_assign(Eigen::MatrixXd::Zero(2, 4)) == Assignment{{0, 0}, {1, 1}});
  CHECK(hungarian_assign(Eigen::MatrixXd::Zero(4, 2)) == Assignment{{0, 0}, {1, 1}});
  Eigen::MatrixXd c(2, 2);
  c << 1, 1, 1, 1;
  CHECK(hungarian_assign(c) == Assignment{{0, 0}, {1, 1}});
}

TEST_CASE("hungarian matches brute force on random real matrices")
{
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 1, 7);
    const int m = uniform_int(rng, 1, 7);
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = uniform(rng, -5, 5);
    const Assignment got = hungarian_assign(c);
    const Brute want = brute_force(c);
    REQUIRE(got.size() == std::size_t(std::min(n, m)));
    CHECK(assignment_cost(c, got) == doctest::Approx(want.cost).epsilon(1e-12));
  }
}

TEST_CASE("hungarian matches brute force exactly on integer matrices with ties")
{
  std::mt19937 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 1, 6);
    const int m = uniform_int(rng, 1, 6);
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = uniform_int(rng, 0, 3);
    const Assignment got = hungarian_assign(c);
    const Brute want = brute_force(c);
    CHECK(assignment_cost(c, got) == want.cost);
    CHECK(got == want.pairs);
  }
}

TEST_CASE("hungarian output is a valid matching")
{
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 40);
    const int m = uniform_int(rng, 1, 40);
    const Eigen::MatrixXd c = Eigen::MatrixXd::Random(n, m);
    const Assignment got = hungarian_assign(c);
    CHECK(got.size() == std::size_t(std::min(n, m)));
    std::set<int> rows, cols;
    for (auto [r, col] : got) {
      rows.insert(r);
      cols.insert(col);
    }
    CHECK(rows.size() == got.size());
    CHECK(cols.size() == got.size());
    CHECK(std::is_sorted(got.begin(), got.end()));
  }
}

TEST_CASE("kalman_predict examples")
{
  const KalmanBoxState st = kalman_init(box_at(1, 2, 2, 1));

  const KalmanBoxState p = kalman_predict(st, 3.0);
  CHECK(p.mean == st.mean);
  CHECK(p.covariance.trace() > st.covariance.trace());

  KalmanBoxState moving = st;
  moving.mean[4] = 1.0;
  const KalmanBoxState q = kalman_predict(moving, 0.5);
  CHECK(q.mean[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(q.mean[3] == st.mean[3]);

  CHECK_THROWS_AS(kalman_predict(st, -0.1), std::invalid_argument);

  KalmanBoxState shrinking = st;
  shrinking.mean[6] = -100.0;
  CHECK(kalman_predict(shrinking, 1.0).mean[2] > 0.0);
}

TEST_CASE("kalman_update examples")
{
  KalmanNoise tiny;
  tiny.measurement = 1e-12;
  const KalmanBoxState st = kalman_predict(kalman_init(box_at(0, 0, 1, 2), tiny), 0.2, tiny);
  const KalmanBoxState same = kalman_update(st, st.box(), tiny);
  CHECK(max_abs_diff(same.mean, st.mean) < 1e-9);

  // Huge prior covariance: the posterior takes the observation.
  KalmanBoxState vague = st;
  vague.covariance *= 1e12;
  const Box2D obs = box_at(3, -1, 2, 0.5);
  const KalmanBoxState post = kalman_update(vague, obs);
  CHECK(boxes_close(post.box(), obs, 1e-6));

  CHECK_THROWS_AS(kalman_update(st, Box2D::from_corners(Vec2(0, 0), Vec2(0, 1))), RejectedUpdate);
  CHECK_THROWS_AS(kalman_init(Box2D::from_corners(Vec2(0, 0), Vec2(1, 0))), RejectedUpdate);
}

TEST_CASE("aspect ratio follows a hand-rolled scalar Kalman filter")
{
  // With diagonal initial covariance the 7-state filter decouples; r is a
  // scalar random walk observed with variance 10 * measurement.
  std::mt19937 rng(4);
  const KalmanNoise noise{0.05, 0.02};
  const Box2D first = box_at(0, 0, 2, 1);
  KalmanBoxState st = kalman_init(first, noise);
  double x = 2.0;
  double p = 10.0 * noise.measurement;
  for (int k = 0; k < 40; ++k) {
    const double dt = uniform(rng, 0.05, 0.5);
    const double w = uniform(rng, 0.5, 3.0);
    const double h = uniform(rng, 0.5, 3.0);
    st = kalman_update(kalman_predict(st, dt, noise), box_at(uniform(rng, -1, 1), uniform(rng, -1, 1), w, h), noise);

    p += noise.process * dt * 1.0;
    const double r_var = 10.0 * noise.measurement;
    const double gain = p / (p + r_var);
    x += gain * (w / h - x);
    p *= 1.0 - gain;

    CHECK(st.mean[3] == doctest::Approx(x).epsilon(1e-10));
    CHECK(st.covariance(3, 3) == doctest::Approx(p).epsilon(1e-10));
  }
}

TEST_CASE("center follows a hand-rolled two-state Kalman filter")
{
  std::mt19937 rng(6);
  const KalmanNoise noise{0.03, 0.01};
  KalmanBoxState st = kalman_init(box_at(0.3, 0, 1, 1), noise);
  // state (c, v), covariance [[a, b], [b, d]]
  double c = 0.3, v = 0.0;
  double a = 10 * noise.measurement, b = 0.0, d = 1e4 * noise.measurement;
  for (int k = 0; k < 30; ++k) {
    const double dt = uniform(rng, 0.1, 0.4);
    const double z = uniform(rng, -2, 2);
    st = kalman_update(kalman_predict(st, dt, noise), box_at(z, 0, 1, 1), noise);

    c += v * dt;
    a = a + 2 * dt * b + dt * dt * d + noise.process * dt;
    b = b + dt * d;
    d = d + noise.process * dt * 1e-2;
    const double s = a + noise.measurement;
    const double k1 = a / s, k2 = b / s;
    const double innov = z - c;
    c += k1 * innov;
    v += k2 * innov;
    const double a2 = (1 - k1) * a;
    const double b2 = (1 - k1) * b;
    const double d2 = d - k2 * b;
    a = a2, b = b2, d = d2;

    CHECK(st.mean[0] == doctest::Approx(c).epsilon(1e-9));
    CHECK(st.mean[4] == doctest::Approx(v).epsilon(1e-9));
    CHECK(st.covariance(0, 0) == doctest::Approx(a).epsilon(1e-9));
    CHECK(st.covariance(0, 4) == doctest::Approx(b).epsilon(1e-9));
  }
}

TEST_CASE("noiseless constant velocity: closed-form next position")
{
  // Three observations 1 s apart moving +0.1 m per step; predict the fourth.
  // A noiseless model with an uninformative velocity prior reproduces the
  // straight-line fit; the default prior leaves a small bias toward rest.
  auto run = [](TrackerConfig cfg) {
    PlaneTracker tracker(cfg);
    for (int k = 0; k < 3; ++k) {
      const PlaneDetection det{box_at(0.1 * k, 1.0, 0.5, 0.8), ObjectClass::kPerson};
      tracker.step(std::span<const PlaneDetection>(&det, 1), k == 0 ? 0.0 : 1.0);
    }
    const auto next = tracker.extrapolate(1.0);
    REQUIRE(next.size() == 1);
    return next[0].box.center();
  };
  TrackerConfig noiseless;
  noiseless.noise.process = 0.0;
  noiseless.noise.initial_velocity = 1e8;
  const Vec2 exact = run(noiseless);
  CHECK(std::abs(exact.x() - 0.3) < 1e-6);
  CHECK(std::abs(exact.y() - 1.0) < 1e-6);

  const Vec2 approx = run(TrackerConfig{});
  CHECK(std::abs(approx.x() - 0.3) < 1e-4);
  CHECK(std::abs(approx.y() - 1.0) < 1e-9);
}

TEST_CASE("kalman state invariants over random sequences")
{
  std::mt19937 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    KalmanBoxState st = kalman_init(box_at(0, 0, uniform(rng, 0.1, 2), uniform(rng, 0.1, 2)));
    for (int k = 0; k < 20; ++k) {
      st = kalman_predict(st, uniform(rng, 0, 1));
      if (uniform(rng, 0, 1) < 0.7) {
        const KalmanBoxState prior = st;
        st = kalman_update(st, box_at(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0.1, 2), uniform(rng, 0.1, 2)));
        CHECK(st.mean[2] > 0.0);
        CHECK(st.mean[3] > 0.0);
        CHECK(st.covariance.topLeftCorner<4, 4>().trace() <= prior.covariance.topLeftCorner<4, 4>().trace() + 1e-12);
      }
      CHECK(max_abs_diff(st.covariance, st.covariance.transpose()) <= 1e-9);
      CHECK((st.covariance.diagonal().array() >= 0.0).all());
    }
  }
}

TEST_CASE("noiseless tracking converges")
{
  // Predicted-position error before each update shrinks as evidence accrues.
  PlaneTracker tracker;
  std::vector<double> errors;
  for (int k = 0; k < 8; ++k) {
    const double truth = 0.25 * k;
    if (k > 0) {
      const auto pred = tracker.extrapolate(0.5);
      errors.push_back(std::abs(pred.at(0).box.center().x() - truth));
    }
    const PlaneDetection det{box_at(truth, 0, 1, 1), ObjectClass::kCar};
    tracker.step(std::span<const PlaneDetection>(&det, 1), k == 0 ? 0.0 : 0.5);
  }
  // errors[i] is the error after i + 1 updates
  CHECK(errors[4] < errors[1]);
  CHECK(errors.back() < errors[1]);
}

TEST_CASE("tracker cold start and coasting")
{
  PlaneTracker tracker;
  const std::vector<PlaneDetection> dets{
    {box_at(0, 0, 1, 1), ObjectClass::kPerson}, {box_at(5, 5, 2, 1), ObjectClass::kCar}};
  const auto out = tracker.step(std::span<const PlaneDetection>(dets), 0.0);
  REQUIRE(out.size() == 2);
  CHECK(boxes_close(out[0].box, dets[0].box, 1e-12));
  CHECK(boxes_close(out[1].box, dets[1].box, 1e-12));
  CHECK(out[0].track_id != out[1].track_id);
  CHECK(out[1].label == ObjectClass::kCar);

  // Give the first object a velocity, then coast with no observation.
  PlaneTracker single;
  for (int k = 0; k < 4; ++k) {
    const PlaneDetection det{box_at(0.2 * k, 0, 1, 1), ObjectClass::kPerson};
    single.step(std::span<const PlaneDetection>(&det, 1), k == 0 ? 0.0 : 1.0);
  }
  std::vector<double> xs;
  for (int k = 0; k < 5; ++k) {
    const auto coast = single.step(std::nullopt, 1.0);
    REQUIRE(coast.size() == 1);
    xs.push_back(coast[0].box.center().x());
  }
  for (std::size_t k = 2; k < xs.size(); ++k) {
    CHECK((xs[k] - xs[k - 1]) == doctest::Approx(xs[1] - xs[0]).epsilon(1e-9));
  }
  CHECK(xs[0] > 0.6);  // moved on past the last observation at 0.6
}

TEST_CASE("tracks die after max_age unmatched keyframes")
{
  TrackerConfig cfg;
  cfg.max_age = 2;
  PlaneTracker tracker(cfg);
  const PlaneDetection det{box_at(0, 0, 1, 1), ObjectClass::kPerson};
  tracker.step(std::span<const PlaneDetection>(&det, 1), 0.0);
  const std::span<const PlaneDetection> none;
  CHECK(tracker.step(none, 0.1).size() == 1);  // age 1
  CHECK(tracker.step(none, 0.1).size() == 1);  // age 2
  CHECK(tracker.step(none, 0.1).empty());      // age 3 > max_age
  CHECK(tracker.tracks().empty());
}

TEST_CASE("min_hits holds back young tracks")
{
  TrackerConfig cfg;
  cfg.min_hits = 2;
  PlaneTracker tracker(cfg);
  const PlaneDetection det{box_at(0, 0, 1, 1), ObjectClass::kPerson};
  CHECK(tracker.step(std::span<const PlaneDetection>(&det, 1), 0.0).empty());
  CHECK(tracker.step(std::span<const PlaneDetection>(&det, 1), 0.1).size() == 1);
}

TEST_CASE("degenerate detections are rejected without faulting")
{
  PlaneTracker tracker;
  const PlaneDetection det{Box2D::from_corners(Vec2(1, 1), Vec2(1, 3)), ObjectClass::kPerson};
  CHECK(tracker.step(std::span<const PlaneDetection>(&det, 1), 0.0).empty());
  CHECK(tracker.rejected_detections() == 1);
}

TEST_CASE("crossing objects of distinct sizes keep their identities")
{
  PlaneTracker tracker;
  std::optional<int> id_small, id_large;
  for (int k = 0; k < 10; ++k) {
    const double t = k;
    // small box moves right, large box moves left; they cross near k = 5
    const std::vector<PlaneDetection> dets{
      {box_at(-0.5 + 0.1 * t, 0.0, 0.4, 0.4), ObjectClass::kPerson},
      {box_at(0.5 - 0.1 * t, 0.1, 1.6, 1.6), ObjectClass::kCar}};
    const auto out = tracker.step(std::span<const PlaneDetection>(dets), k == 0 ? 0.0 : 1.0);
    REQUIRE(out.size() == 2);
    for (const PlaneBox & b : out) {
      REQUIRE(b.detection.has_value());
      if (*b.detection == 0) {
        if (!id_small) id_small = b.track_id;
        CHECK(b.track_id == *id_small);
      } else {
        if (!id_large) id_large = b.track_id;
        CHECK(b.track_id == *id_large);
      }
    }
  }
}

TEST_CASE("tracker step invariants on random scenes")
{
  std::mt19937 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    PlaneTracker tracker;
    for (int k = 0; k < 15; ++k) {
      const std::size_t before = tracker.tracks().size();
      std::vector<PlaneDetection> dets;
      const int n = uniform_int(rng, 0, 5);
      for (int i = 0; i < n; ++i) {
        dets.push_back({box_at(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0.2, 1.5), uniform(rng, 0.2, 1.5)),
                        ObjectClass::kPerson});
      }
      const bool observe = uniform(rng, 0, 1) < 0.8;
      const auto out = observe ? tracker.step(std::span<const PlaneDetection>(dets), uniform(rng, 0, 0.5))
                               : tracker.step(std::nullopt, uniform(rng, 0, 0.5));
      std::set<int> ids;
      for (const PlaneBox & b : out) {
        CHECK(ids.insert(b.track_id).second);
      }
      CHECK(tracker.tracks().size() <= before + (observe ? dets.size() : 0));
      for (const PlaneTrack & t : tracker.tracks()) {
        CHECK(t.age_since_update <= tracker.config().max_age);
      }
    }
  }
}

TEST_CASE("tracker config validation")
{
  TrackerConfig cfg;
  cfg.iou_gate = 1.5;
  CHECK_THROWS_AS(PlaneTracker{cfg}, std::invalid_argument);
  cfg = {};
  cfg.max_age = 0;
  CHECK_THROWS_AS(PlaneTracker{cfg}, std::invalid_argument);
  cfg = {};
  cfg.min_hits = 0;
  CHECK_THROWS_AS(PlaneTracker{cfg}, std::invalid_argument);
  PlaneTracker ok;
  CHECK_THROWS_AS(ok.step(std::nullopt, -1.0), std::invalid_argument);
}
