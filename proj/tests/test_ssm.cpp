#include "checks.hpp"

#include "trackdiff/ssm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace trackdiff;

namespace {

Vec v3(double a, double b, double c)
{
    Vec v(3);
    v << a, b, c;
    return v;
}

} // namespace

TEST(LorenzTransition, FirstOrderAtOrigin)
{
    const Mat f = lorenz_transition_matrix(Vec::Zero(3), 0.02, 1);
    Mat expected(3, 3);
    expected << 0.8, 0.2, 0.0, 0.56, 0.98, 0.0, 0.0, 0.0, 1.0 - 8.0 / 3.0 * 0.02;
    EXPECT_LT((f - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LorenzTransition, TinyStepIsIdentity)
{
    const Vec x = v3(3.0, -2.0, 17.0);
    for (std::optional<int> j : {std::optional<int>{1}, std::optional<int>{5}, std::optional<int>{}})
        EXPECT_LT((lorenz_transition_matrix(x, 1e-12, j) - Mat::Identity(3, 3)).norm(), 1e-9);
}

TEST(LorenzTransition, ExactMatchesScalingAndSquaring)
{
    const Vec x = v3(5.0, -5.0, 20.0);
    const Mat oracle = checks::expm_oracle(lorenz_system_matrix(x) * 0.02);
    EXPECT_LT((lorenz_transition_matrix(x, 0.02, std::nullopt) - oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LorenzTransition, TruncationErrorShrinksWithOrder)
{
    Rng rng = make_rng(3, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec x = lorenz_initial_state(rng);
        const Mat exact = lorenz_transition_matrix(x, 0.02, std::nullopt);
        double prev = std::numeric_limits<double>::infinity();
        for (int j = 1; j <= 6; ++j) {
            const double err = (lorenz_transition_matrix(x, 0.02, j) - exact).norm();
            EXPECT_LT(err, prev);
            prev = err;
        }
        EXPECT_LT((lorenz_transition_matrix(x, 0.02, 5) - exact).norm(),
                  (lorenz_transition_matrix(x, 0.02, 2) - exact).norm());
    }
}

TEST(LorenzTransition, RejectsNonFiniteState)
{
    EXPECT_THROW(lorenz_transition_matrix(v3(NAN, 0, 0), 0.02, 5), Error);
    EXPECT_THROW(lorenz_transition_matrix(Vec::Zero(3), 0.0, 5), Error);
}

TEST(WienerVelocity, MotionMatrix)
{
    const auto m = wiener_velocity_model(0.2, 0.7);
    Mat f = Mat::Identity(4, 4);
    f(0, 2) = 0.2;
    f(1, 3) = 0.2;
    EXPECT_EQ(m.motion, f);
    EXPECT_TRUE(wiener_velocity_model(0.2, 0.0).process_cov.isZero(0.0));
}

TEST(WienerVelocity, UnitCovariance)
{
    const Mat q = wiener_velocity_model(1.0, 1.0).process_cov;
    EXPECT_DOUBLE_EQ(q(0, 0), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(q(0, 2), 0.5);
    EXPECT_DOUBLE_EQ(q(2, 0), 0.5);
    EXPECT_DOUBLE_EQ(q(2, 2), 1.0);
    EXPECT_DOUBLE_EQ(q(1, 1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(q(1, 3), 0.5);
    EXPECT_DOUBLE_EQ(q(0, 1), 0.0);
}

TEST(Measure, Identity)
{
    MeasurementSpec m;
    EXPECT_EQ(measure(m, v3(1, 2, 3)), v3(1, 2, 3));
}

TEST(Measure, SphericalUnitAxis)
{
    MeasurementSpec m;
    m.kind = MeasurementKind::cartesian_to_spherical;
    const Vec s = measure(m, v3(1, 0, 0));
    EXPECT_NEAR(s[0], 1.0, 1e-15);
    EXPECT_NEAR(s[1], 0.0, 1e-15);
    EXPECT_NEAR(s[2], std::numbers::pi / 2, 1e-15);
    EXPECT_THROW(measure(m, Vec::Zero(3)), Error);
}

TEST(Measure, SphericalRoundTrip)
{
    MeasurementSpec m;
    m.kind = MeasurementKind::cartesian_to_spherical;
    Rng rng = make_rng(5, 0);
    for (int i = 0; i < 200; ++i) {
        const Vec x = standard_normal_vec(3, rng) * std::pow(10.0, 4.0 * uniform01(rng) - 2.0);
        const Vec back = spherical_to_cartesian(measure(m, x));
        EXPECT_LT((back - x).norm() / x.norm(), 1e-12);
    }
}

TEST(Measure, OneDegreeRotation)
{
    MeasurementSpec m;
    m.kind = MeasurementKind::rotated_identity;
    m.euler_deg = {0.0, 0.0, 1.0};
    const double t = std::numbers::pi / 180.0;
    const Vec z = measure(m, v3(1, 0, 0));
    EXPECT_NEAR(z[0], std::cos(t), 1e-15);
    EXPECT_NEAR(z[1], std::sin(t), 1e-15);
    EXPECT_NEAR(z[2], 0.0, 1e-15);
    EXPECT_NEAR((z - v3(1, 0, 0)).norm(), 0.017452, 1e-5);

    Rng rng = make_rng(6, 0);
    m.euler_deg = {12.0, -40.0, 7.5};
    for (int i = 0; i < 50; ++i) {
        const Vec x = standard_normal_vec(3, rng);
        EXPECT_NEAR(measure(m, x).norm(), x.norm(), 1e-12);
    }
}

TEST(Noise, MixtureCovariance)
{
    const auto spec = NoiseSpec::mixture(Mat::Identity(3, 3), 10.0 * Mat::Identity(3, 3), 0.8);
    Rng rng = make_rng(7, 0);
    const int n = 1000000;
    Vec mean = Vec::Zero(3);
    Mat cov = Mat::Zero(3, 3);
    for (int i = 0; i < n; ++i) {
        const Vec w = sample_noise(spec, rng);
        mean += w;
        cov += w * w.transpose();
    }
    mean /= n;
    cov /= n;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.01);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(cov(i, i), 2.8, 0.02 * 2.8);
    EXPECT_LT((cov - Mat(cov.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.02 * 2.8);
    EXPECT_LT((spec.moment_matched_cov() - 2.8 * Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(Noise, DegenerateCases)
{
    const auto zero = NoiseSpec::mixture(Mat::Zero(2, 2), Mat::Zero(2, 2), 0.8);
    Rng rng = make_rng(8, 0);
    for (int i = 0; i < 10; ++i) EXPECT_TRUE(sample_noise(zero, rng).isZero(0.0));

    // A unit mixture weight never draws from cov2.
    const Mat c = 2.0 * Mat::Identity(2, 2);
    Rng a = make_rng(9, 0), b = make_rng(9, 0);
    const auto g = NoiseSpec::gaussian(c);
    const auto m = NoiseSpec::mixture(c, 5.0 * c, 1.0);
    double sg = 0.0, sm = 0.0;
    for (int i = 0; i < 20000; ++i) {
        sg += sample_noise(g, a).squaredNorm();
        sm += sample_noise(m, b).squaredNorm();
    }
    EXPECT_NEAR(sg / 20000, 4.0, 0.1);
    EXPECT_NEAR(sm / 20000, 4.0, 0.1);
}

TEST(Noise, RejectsIndefiniteCovariance)
{
    Mat bad = Mat::Identity(2, 2);
    bad(1, 1) = -1.0;
    EXPECT_THROW(NoiseSpec::gaussian(bad), Error);
}

TEST(Simulate, NoiselessIdentityMeasurementsEqualStates)
{
    LorenzScenario sc;
    SsmSpec ssm = make_lorenz_ssm(sc, noise_levels(0.0, -20.0));
    ssm.process_noise = NoiseSpec::zero(3);
    ssm.meas_noise = NoiseSpec::zero(3);
    Rng rng = make_rng(1, 0);
    const Trajectory tr = simulate_trajectory(ssm, v3(1, 1, 1), 50, rng);
    ASSERT_EQ(tr.states.size(), 51u);
    ASSERT_EQ(tr.measurements.size(), 50u);
    for (std::size_t t = 1; t <= 50; ++t) EXPECT_EQ(tr.measurements[t - 1], tr.states[t]);
    Rng other = make_rng(99, 0);
    const Trajectory again = simulate_trajectory(ssm, v3(1, 1, 1), 50, other);
    EXPECT_EQ(again.states.back(), tr.states.back());
}

TEST(Simulate, SeedReproducible)
{
    const SsmSpec ssm = make_lorenz_ssm({}, noise_levels(10.0, -20.0));
    Rng a = make_rng(42, 3), b = make_rng(42, 3);
    const Trajectory ta = simulate_trajectory(ssm, v3(1, 2, 3), 100, a);
    const Trajectory tb = simulate_trajectory(ssm, v3(1, 2, 3), 100, b);
    for (std::size_t t = 0; t < ta.states.size(); ++t) EXPECT_EQ(ta.states[t], tb.states[t]);
    for (std::size_t t = 0; t < ta.measurements.size(); ++t) EXPECT_EQ(ta.measurements[t], tb.measurements[t]);
}

TEST(Simulate, UnitMeasurementNoiseIsZeroDb)
{
    const auto lv = noise_levels(0.0, -20.0);
    EXPECT_NEAR(lv.r2, 1.0, 1e-15);
    EXPECT_NEAR(lv.q2, 0.01, 1e-15);
    const SsmSpec ssm = make_lorenz_ssm({}, lv);
    Rng rng = make_rng(11, 0);
    double se = 0.0;
    int count = 0;
    for (int i = 0; i < 50; ++i) {
        const Trajectory tr = simulate_trajectory(ssm, lorenz_initial_state(rng), 100, rng);
        for (std::size_t t = 1; t < tr.states.size(); ++t) {
            se += (tr.measurements[t - 1] - tr.states[t]).squaredNorm();
            count += 3;
        }
    }
    EXPECT_NEAR(10.0 * std::log10(se / count), 0.0, 0.2);
}

TEST(Simulate, DivergenceGuard)
{
    SsmSpec ssm;
    ssm.transition.kind = TransitionKind::explicit_matrix;
    ssm.transition.matrix = 10.0 * Mat::Identity(3, 3);
    ssm.process_noise = NoiseSpec::zero(3);
    ssm.meas_noise = NoiseSpec::zero(3);
    Rng rng = make_rng(1, 0);
    EXPECT_THROW(simulate_trajectory(ssm, v3(1, 1, 1), 20, rng), Error);
}
