import math

import numpy as np
import pytest

from zeno import ConfigError, ContractError, split_rng
from zeno.toybench import (
    DEFAULT_BASIN_MASSES,
    DEFAULT_LAM,
    DEFAULT_TARGET,
    GmmWorld,
    ModeDistribution,
    default_world,
    discrete_kl,
    empirical_mode_distribution,
    flow_generate,
    flow_generator,
    gmm_log_density,
    gmm_score,
    make_circle_world,
    mode_reward,
    mode_reward_fn,
    nearest_mode_index,
    tilted_target_distribution,
    uncontrolled_mode_distribution,
    voronoi_mass_distribution,
)


def single_mode_world(mean=(0.0, 0.0), sigma=0.5) -> GmmWorld:
    return GmmWorld(means=np.array([mean]), weights=np.array([1.0]),
                    sigma=sigma, mode_rewards=np.array([0.0]))


def two_mode_world(separation=6.0, sigma=1.0, rewards=(0.0, 0.0)) -> GmmWorld:
    half = separation / 2.0
    return GmmWorld(
        means=np.array([[-half, 0.0], [half, 0.0]]),
        weights=np.array([0.5, 0.5]),
        sigma=sigma,
        mode_rewards=np.asarray(rewards, dtype=np.float64),
    )


def naive_log_density(world: GmmWorld, x: np.ndarray) -> float:
    # Independent direct-sum oracle, no log-sum-exp tricks.
    total = 0.0
    for w, mu in zip(world.weights, world.means):
        sq = float(((x - mu) ** 2).sum())
        total += w * math.exp(-sq / (2 * world.sigma**2)) / (2 * math.pi * world.sigma**2)
    return math.log(total)


class TestModeDistribution:
    def test_valid_simplex(self):
        d = ModeDistribution(np.array([0.2, 0.3, 0.5]))
        assert d.size == 3
        assert d.to_list() == [0.2, 0.3, 0.5]

    @pytest.mark.parametrize(
        "probs",
        [[0.5, 0.6], [-0.1, 1.1], [math.nan, 1.0], [0.2, 0.2]],
    )
    def test_invalid_rejected(self, probs):
        with pytest.raises(ContractError):
            ModeDistribution(np.asarray(probs))


class TestGmmWorld:
    def test_single_mode_allowed(self):
        world = single_mode_world()
        assert world.n_modes == 1

    def test_separation_enforced(self):
        with pytest.raises(ContractError, match="6 sigma"):
            two_mode_world(separation=5.9)
        two_mode_world(separation=6.0)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ContractError):
            GmmWorld(means=np.array([[0.0, 0.0]]), weights=np.array([0.9]),
                     sigma=0.5, mode_rewards=np.array([0.0]))

    def test_arrays_frozen(self):
        world = default_world()
        with pytest.raises(ValueError):
            world.means[0, 0] = 99.0


class TestMakeCircleWorld:
    def test_default_layout(self):
        world = default_world()
        assert world.n_modes == 3
        np.testing.assert_allclose(np.linalg.norm(world.means, axis=1), 4.0, rtol=1e-12)
        np.testing.assert_allclose(world.weights, 1.0 / 3.0, rtol=1e-15)
        assert world.lam == DEFAULT_LAM
        expected_rewards = DEFAULT_LAM * np.log(
            np.asarray(DEFAULT_TARGET) / np.asarray(DEFAULT_BASIN_MASSES)
        )
        np.testing.assert_allclose(world.mode_rewards, expected_rewards, rtol=1e-12)

    def test_sector_widths_match_basin_masses(self):
        # The angular width of mode k's nearest-mean sector, divided by
        # 2*pi, is its isotropic-Gaussian basin mass.
        world = default_world()
        angles = np.arctan2(world.means[:, 1], world.means[:, 0])
        bisectors = []
        for k in range(3):
            a, b = angles[k], angles[(k + 1) % 3]
            gap = (b - a) % (2 * math.pi)
            bisectors.append((a + gap / 2.0) % (2 * math.pi))
        widths = []
        for k in range(3):
            lo, hi = bisectors[(k - 1) % 3], bisectors[k]
            widths.append(((hi - lo) % (2 * math.pi)) / (2 * math.pi))
        np.testing.assert_allclose(
            sorted(widths), sorted(DEFAULT_BASIN_MASSES), rtol=1e-10
        )

    def test_masses_above_half_rejected(self):
        with pytest.raises(ConfigError):
            make_circle_world(basin_masses=(0.55, 0.25, 0.2))

    def test_target_must_be_simplex(self):
        with pytest.raises(ConfigError):
            make_circle_world(target=(0.5, 0.5, 0.5))


class TestDensityAndScore:
    def test_single_mode_peak_value(self):
        world = single_mode_world(sigma=0.5)
        got = gmm_log_density(world, np.zeros(2))
        assert got == pytest.approx(-math.log(2 * math.pi * 0.25), rel=1e-12)

    def test_two_mode_midpoint(self):
        # At the midpoint both components contribute equally: the density
        # is exp(-d^2/(2 sigma^2)) / (2 pi sigma^2) with d the half-gap.
        world = two_mode_world(separation=6.0, sigma=1.0)
        got = gmm_log_density(world, np.zeros(2))
        expected = math.log(math.exp(-4.5) / (2 * math.pi))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_matches_naive_oracle(self):
        world = default_world()
        pts = split_rng(0, 100).standard_normal((50, 2)) * 3.0
        for p in pts:
            assert gmm_log_density(world, p) == pytest.approx(
                naive_log_density(world, p), rel=1e-10
            )

    def test_batched_density(self):
        world = default_world()
        pts = split_rng(0, 101).standard_normal((7, 2))
        batched = gmm_log_density(world, pts)
        assert batched.shape == (7,)
        for i, p in enumerate(pts):
            assert batched[i] == pytest.approx(gmm_log_density(world, p), rel=1e-14)

    def test_score_matches_finite_differences(self):
        world = default_world()
        h = 1e-6
        pts = split_rng(0, 102).standard_normal((20, 2)) * 2.5
        for p in pts:
            grad = gmm_score(world, p)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (gmm_log_density(world, p + e) - gmm_log_density(world, p - e)) / (2 * h)
                assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_score_at_far_point_is_finite(self):
        world = default_world()
        grad = gmm_score(world, np.array([50.0, -50.0]))
        assert np.all(np.isfinite(grad))


class TestFlow:
    def test_mode_mean_is_fixed_point(self):
        world = default_world()
        for mu in world.means:
            out = flow_generate(world, mu.copy())
            np.testing.assert_allclose(out, mu, atol=1e-8)

    def test_deterministic(self):
        world = default_world()
        z = split_rng(0, 103).standard_normal((10, 2))
        np.testing.assert_array_equal(flow_generate(world, z), flow_generate(world, z))

    def test_converges_to_nearest_mode_region(self):
        world = default_world()
        z = split_rng(0, 104).standard_normal((200, 2))
        out = flow_generate(world, z)
        dists = np.linalg.norm(out[:, None, :] - world.means[None, :, :], axis=-1)
        assert np.all(dists.min(axis=1) < 3 * world.sigma)

    def test_reflection_symmetry(self):
        # An equal-weight two-mode world is symmetric across the y-axis;
        # the flow must commute with the reflection.
        world = two_mode_world(separation=8.0, sigma=1.0)
        z = split_rng(0, 105).standard_normal((50, 2)) * 2.0
        mirrored = z * np.array([-1.0, 1.0])
        out = flow_generate(world, z)
        out_mirrored = flow_generate(world, mirrored)
        np.testing.assert_allclose(out_mirrored, out * np.array([-1.0, 1.0]), atol=1e-10)

    def test_basin_assignment_stable_under_tiny_perturbation(self):
        world = default_world()
        z = split_rng(0, 106).standard_normal((10_000, 2))
        base = nearest_mode_index(world, flow_generate(world, z))
        bumped = nearest_mode_index(world, flow_generate(world, z + 1e-9))
        assert (base != bumped).mean() <= 0.001

    def test_nonfinite_input_rejected(self):
        world = default_world()
        from zeno import NumericsError
        with pytest.raises((ContractError, NumericsError)):
            flow_generate(world, np.array([np.inf, 0.0]))


class TestModeClassification:
    def test_nearest_mode(self):
        world = default_world()
        for k, mu in enumerate(world.means):
            assert nearest_mode_index(world, mu) == k

    def test_tie_goes_to_lowest_index(self):
        world = two_mode_world(separation=6.0, sigma=1.0)
        assert nearest_mode_index(world, np.zeros(2)) == 0

    def test_mode_reward_lookup(self):
        world = make_circle_world()
        for k, mu in enumerate(world.means):
            assert mode_reward(world, mu) == world.mode_rewards[k]

    def test_batched(self):
        world = default_world()
        idx = nearest_mode_index(world, world.means)
        np.testing.assert_array_equal(idx, [0, 1, 2])
        np.testing.assert_array_equal(mode_reward(world, world.means), world.mode_rewards)


class TestTiltedTarget:
    def test_equal_rewards_equal_uncontrolled(self):
        # Zero tilt: the target is the uncontrolled mode distribution, and
        # with the same seed the two estimators see the same draws.
        world = make_circle_world()
        flat = GmmWorld(means=world.means, weights=world.weights, sigma=world.sigma,
                        mode_rewards=np.zeros(3), lam=world.lam)
        target = tilted_target_distribution(flat, 50_000, seed=9)
        uncontrolled = uncontrolled_mode_distribution(flat, 50_000, seed=9)
        np.testing.assert_allclose(target.probabilities, uncontrolled.probabilities,
                                   atol=1e-12)

    def test_huge_lam_approaches_uncontrolled(self):
        world = default_world()
        washed = GmmWorld(means=world.means, weights=world.weights, sigma=world.sigma,
                          mode_rewards=world.mode_rewards, lam=1e9)
        target = tilted_target_distribution(washed, 50_000, seed=9)
        uncontrolled = uncontrolled_mode_distribution(world, 50_000, seed=9)
        np.testing.assert_allclose(target.probabilities, uncontrolled.probabilities,
                                   atol=1e-6)

    def test_default_world_hits_target_row(self):
        target = tilted_target_distribution(default_world(), 200_000, seed=17)
        np.testing.assert_allclose(target.probabilities, DEFAULT_TARGET, atol=0.01)

    def test_doubling_samples_is_stable(self):
        world = default_world()
        a = tilted_target_distribution(world, 100_000, seed=23)
        b = tilted_target_distribution(world, 200_000, seed=29)
        assert np.abs(a.probabilities - b.probabilities).max() < 0.01

    def test_sample_floor(self):
        with pytest.raises(ConfigError):
            tilted_target_distribution(default_world(), 9_999, seed=0)


class TestEmpiricalDistributions:
    def test_point_mass(self):
        world = default_world()
        samples = np.tile(world.means[1], (150, 1))
        dist = empirical_mode_distribution(samples, world)
        np.testing.assert_array_equal(dist.probabilities, [0.0, 1.0, 0.0])

    def test_even_split(self):
        world = default_world()
        samples = np.concatenate([np.tile(mu, (50, 1)) for mu in world.means])
        dist = empirical_mode_distribution(samples, world)
        np.testing.assert_allclose(dist.probabilities, 1.0 / 3.0, rtol=1e-12)

    def test_minimum_sample_count(self):
        world = default_world()
        with pytest.raises(ContractError):
            empirical_mode_distribution(np.zeros((99, 2)), world)

    def test_uncontrolled_matches_voronoi_oracle(self):
        # In the well-separated regime the flow basins are the nearest-mean
        # cells, so the two estimates agree in total variation.
        world = default_world()
        flow_dist = uncontrolled_mode_distribution(world, 100_000, seed=31)
        cell_dist = voronoi_mass_distribution(world, 100_000, seed=37)
        tv = 0.5 * float(np.abs(flow_dist.probabilities - cell_dist.probabilities).sum())
        assert tv < 0.02

    def test_voronoi_masses_near_constructed_basin_masses(self):
        world = default_world()
        cell_dist = voronoi_mass_distribution(world, 200_000, seed=41)
        np.testing.assert_allclose(cell_dist.probabilities, DEFAULT_BASIN_MASSES,
                                   atol=0.01)


class TestDiscreteKl:
    def test_identity_is_zero(self):
        p = ModeDistribution(np.array([0.3, 0.7]))
        assert discrete_kl(p, p) == 0.0

    def test_log2_example(self):
        p = ModeDistribution(np.array([1.0, 0.0]))
        q = ModeDistribution(np.array([0.5, 0.5]))
        assert discrete_kl(p, q) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_absolute_continuity_violation_flagged(self):
        p = ModeDistribution(np.array([0.5, 0.5]))
        q = ModeDistribution(np.array([1.0, 0.0]))
        assert discrete_kl(p, q) == math.inf

    def test_zero_log_zero_is_zero(self):
        p = ModeDistribution(np.array([0.0, 1.0]))
        q = ModeDistribution(np.array([0.5, 0.5]))
        assert discrete_kl(p, q) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_nonnegative(self):
        rng = split_rng(0, 107)
        for _ in range(20):
            p = rng.random(4)
            q = rng.random(4)
            kl = discrete_kl(ModeDistribution(p / p.sum()), ModeDistribution(q / q.sum()))
            assert kl >= 0.0


class TestContractWrappers:
    def test_flow_generator_contract(self):
        gen = flow_generator(default_world())
        assert gen.input_dim == 2
        assert gen.output_dim == 2
        out = gen(np.zeros((5, 2)))
        assert out.shape == (5, 2)

    def test_mode_reward_fn_contract(self):
        world = default_world()
        rew = mode_reward_fn(world)
        vals = rew(world.means)
        np.testing.assert_array_equal(vals, world.mode_rewards)
