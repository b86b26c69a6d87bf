"""Tuning task tests: objective arithmetic, trial generation, environment."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamtune.optics import BeamParameters
from beamtune.task import (
    MagnetSettings,
    Trial,
    TrialGeneratorConfig,
    TuningEnvironment,
    make_trial,
    mae,
    objective,
    trial_from_dict,
    trial_to_dict,
)

finite_mm = st.floats(min_value=-5000, max_value=5000, allow_nan=False)
positive_mm = st.floats(min_value=1e-3, max_value=5000, allow_nan=False)


def beam(mu_x, sigma_x, mu_y, sigma_y) -> BeamParameters:
    return BeamParameters(mu_x, sigma_x, mu_y, sigma_y)


class TestObjective:
    def test_equal_is_zero(self):
        b = beam(1.0, 0.2, -0.5, 0.3)
        assert objective(b, b) == 0.0
        assert mae(b, b) == 0.0

    def test_paper_example_arithmetic(self):
        observed = beam(-1038.63, 1893.75, -2353.77, 2226.94)
        target = beam(1.20, 0.11, 1.25, 0.06)
        assert objective(observed, target) == pytest.approx(7515.37, abs=1e-9)
        assert mae(observed, target) == pytest.approx(1878.8425, abs=1e-9)

    def test_unit_differences(self):
        assert objective(beam(1, 1, 1, 1), beam(0, 0, 0, 0)) == pytest.approx(4.0)

    @given(a=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm),
           b=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm))
    def test_symmetry(self, a, b):
        assert objective(beam(*a), beam(*b)) == objective(beam(*b), beam(*a))

    @given(a=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm),
           b=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm),
           c=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm))
    def test_triangle_inequality(self, a, b, c):
        ab = objective(beam(*a), beam(*b))
        bc = objective(beam(*b), beam(*c))
        ac = objective(beam(*a), beam(*c))
        assert ac <= ab + bc + 1e-9

    @given(a=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm),
           b=st.tuples(finite_mm, positive_mm, finite_mm, positive_mm),
           shift=st.floats(min_value=-100, max_value=100, allow_nan=False))
    def test_translation_invariance_in_mu(self, a, b, shift):
        base = objective(beam(*a), beam(*b))
        shifted = objective(
            beam(a[0] + shift, a[1], a[2], a[3]),
            beam(b[0] + shift, b[1], b[2], b[3]),
        )
        assert shifted == pytest.approx(base, rel=1e-12, abs=1e-9)


class TestMagnetSettings:
    def test_clamping(self):
        raw = MagnetSettings(q1=45.0, q2=-31.0, cv=0.0, q3=10.0, ch=7e-3)
        clamped, names = raw.clamped()
        assert clamped.q1 == 30.0 and clamped.q2 == -30.0 and clamped.ch == 6e-3
        assert names == ("q1", "q2", "ch")
        assert clamped.in_range()

    def test_in_range_bounds_inclusive(self):
        assert MagnetSettings(30.0, -30.0, 6e-3, 30.0, -6e-3).in_range()


class TestMakeTrial:
    def test_same_seed_identical(self):
        assert make_trial(7) == make_trial(7)

    def test_different_seeds_differ(self):
        assert make_trial(1) != make_trial(2)

    def test_fields_within_generator_ranges(self):
        for seed in range(20):
            trial = make_trial(seed)
            assert -2.0 <= trial.target.mu_x <= 2.0
            assert 0.05 <= trial.target.sigma_x <= 0.5
            assert trial.initial_settings.in_range()
            for dx, dy in trial.quad_misalignments:
                assert abs(dx) <= 0.5e-3 and abs(dy) <= 0.5e-3

    def test_zero_target_representable(self):
        # "focus to zero" style task: all four target parameters at 0 mm
        trial = make_trial(1)
        zeroed = Trial(
            trial_id="zero",
            seed=0,
            target=BeamParameters(0.0, 0.0, 0.0, 0.0),
            incoming=trial.incoming,
            quad_misalignments=trial.quad_misalignments,
            screen_misalignment=trial.screen_misalignment,
            initial_settings=trial.initial_settings,
        )
        env = TuningEnvironment(zeroed)
        sample = env.reset()
        assert sample.objective > 0

    def test_malformed_ranges_rejected(self):
        with pytest.raises(ValueError):
            TrialGeneratorConfig(target_position_mm=(2.0, -2.0))
        with pytest.raises(ValueError):
            TrialGeneratorConfig(target_sigma_mm=(0.0, 0.5))

    def test_fixture_round_trip(self):
        trial = make_trial(11)
        restored = trial_from_dict(trial_to_dict(trial))
        assert restored.trial_id == trial.trial_id
        assert restored.initial_settings == trial.initial_settings
        assert np.allclose(restored.incoming.mean, trial.incoming.mean)
        assert np.allclose(restored.incoming.covariance, trial.incoming.covariance)
        assert restored.target.mu_x == pytest.approx(trial.target.mu_x, rel=1e-15)


class TestEnvironment:
    def test_reset_records_initial_measurement(self):
        env = TuningEnvironment(make_trial(1))
        sample = env.reset()
        assert len(env.history) == 1
        assert sample.step_index == 0
        assert sample.settings == env.trial.initial_settings
        assert sample.mae == pytest.approx(
            mae(sample.parameters, env.trial.target), abs=0
        )
        assert sample.objective == 4.0 * sample.mae

    def test_reset_is_deterministic(self):
        env = TuningEnvironment(make_trial(2))
        first = env.reset()
        second = env.reset()
        assert first == second
        assert len(env.history) == 1

    def test_step_repeating_settings_is_deterministic(self):
        env = TuningEnvironment(make_trial(3))
        initial = env.reset()
        repeat = env.step(env.trial.initial_settings)
        assert repeat.parameters == initial.parameters

    def test_step_clamps_and_flags(self):
        env = TuningEnvironment(make_trial(1))
        env.reset()
        sample = env.step(MagnetSettings(q1=45.0, q2=0.0, cv=0.0, q3=0.0, ch=0.0))
        assert sample.settings.q1 == 30.0
        assert sample.clamped == ("q1",)

    def test_step_rejects_non_finite(self):
        env = TuningEnvironment(make_trial(1))
        env.reset()
        with pytest.raises(ValueError):
            env.step(MagnetSettings(float("nan"), 0.0, 0.0, 0.0, 0.0))
        assert len(env.history) == 1  # rejected proposal was not applied

    def test_step_before_reset_fails(self):
        env = TuningEnvironment(make_trial(1))
        with pytest.raises(RuntimeError):
            env.step(MagnetSettings(0, 0, 0, 0, 0))

    def test_history_grows_by_one_per_step(self):
        env = TuningEnvironment(make_trial(4))
        env.reset()
        rng = np.random.default_rng(0)
        for expected in range(2, 12):
            env.step(MagnetSettings(*(rng.uniform(-1, 1, size=5))))
            assert len(env.history) == expected
        indices = [s.step_index for s in env.history]
        assert indices == list(range(len(env.history)))

    def test_applied_settings_always_in_box(self):
        env = TuningEnvironment(make_trial(5))
        env.reset()
        rng = np.random.default_rng(1)
        for _ in range(30):
            env.step(MagnetSettings(*(rng.uniform(-100, 100, size=5))))
        assert all(s.settings.in_range() for s in env.history)

    def test_mae_quarter_objective_exact(self):
        env = TuningEnvironment(make_trial(6))
        env.reset()
        rng = np.random.default_rng(2)
        for _ in range(10):
            env.step(MagnetSettings(*(rng.uniform(-20, 20, size=5))))
        assert all(s.mae * 4.0 == s.objective for s in env.history)

    def test_noise_mode_perturbs_positions_only(self):
        trial = make_trial(1)
        quiet = TuningEnvironment(trial)
        noisy = TuningEnvironment(trial, noise_sigma=2e-5, seed=123)
        a = quiet.reset()
        b = noisy.reset()
        assert a.parameters.sigma_x == b.parameters.sigma_x
        assert a.parameters.mu_x != b.parameters.mu_x

    def test_noisy_reset_reproducible_for_fixed_seed(self):
        trial = make_trial(1)
        env1 = TuningEnvironment(trial, noise_sigma=2e-5, seed=9)
        env2 = TuningEnvironment(trial, noise_sigma=2e-5, seed=9)
        assert env1.reset() == env2.reset()
