import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenefit import rewards as rw
from scenefit.character import CharacterState


def make_state(root=(0.0, 0.9, 0.0), vel=(0.0, 0.0, 0.0), q=None, qd=None,
               keypos=None, n_joints=11, n_key=6):
    return CharacterState(
        root[0], root[1], root[2], vel[0], vel[1], vel[2],
        np.zeros(n_joints) if q is None else np.asarray(q, dtype=float),
        np.zeros(n_joints) if qd is None else np.asarray(qd, dtype=float),
        np.zeros((n_key, 2)) if keypos is None else np.asarray(keypos, dtype=float))


class TestTrackingReward:
    def test_identical_states(self):
        s = make_state()
        b = rw.tracking_reward(s, s)
        for term in (b.root_pos, b.root_orient, b.root_vel, b.joint_pos,
                     b.joint_vel, b.key_body):
            assert term == 1.0
        assert b.total == pytest.approx(0.95, abs=1e-12)

    def test_root_error_tenth_meter(self):
        a = make_state(root=(0.1, 0.9, 0.0))
        b = make_state()
        r = rw.tracking_reward(a, b)
        assert r.root_pos == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_two_joints_off(self):
        q = np.zeros(11)
        q[2] = 0.1
        q[5] = 0.1
        r = rw.tracking_reward(make_state(q=q), make_state())
        assert r.joint_pos == pytest.approx(math.exp(-0.04), abs=1e-12)

    def test_orientation_wrapped(self):
        a = make_state(root=(0.0, 0.9, math.pi - 0.05))
        b = make_state(root=(0.0, 0.9, -math.pi + 0.05))
        r = rw.tracking_reward(a, b)
        assert r.root_orient == pytest.approx(math.exp(-5.0 * 0.1), rel=1e-9)

    def test_weights_default_values(self):
        w = rw.RewardWeights()
        assert (w.root_pos, w.root_orient, w.root_vel, w.joint_pos,
                w.joint_vel, w.key_body) == (0.2, 0.05, 0.05, 0.45, 0.05, 0.15)
        assert w.total == pytest.approx(0.95)

    @given(st.floats(0.001, 2.0), st.floats(0.001, 2.0))
    def test_strictly_decreasing_in_root_error(self, e1, e2):
        lo, hi = sorted((e1, e2))
        ra = rw.tracking_reward(make_state(root=(lo, 0.9, 0.0)), make_state())
        rb = rw.tracking_reward(make_state(root=(hi, 0.9, 0.0)), make_state())
        if hi > lo:
            assert rb.root_pos < ra.root_pos
        assert ra.root_pos < 1.0

    def test_terms_in_unit_interval(self):
        a = make_state(root=(3.0, 2.0, 2.0), vel=(4.0, 1.0, 3.0),
                       q=np.full(11, 1.0), qd=np.full(11, 5.0),
                       keypos=np.full((6, 2), 2.0))
        r = rw.tracking_reward(a, make_state())
        for term in (r.root_pos, r.root_orient, r.root_vel, r.joint_pos,
                     r.joint_vel, r.key_body):
            assert 0.0 < term <= 1.0


class TestGatedReturn:
    def test_gate_closed(self):
        assert rw.gated_return([1.0, 1.0, 1.0], [0, 0, 0], 0.99) == 0.0

    def test_discount_starts_at_one(self):
        got = rw.gated_return([1.0, 1.0, 1.0], [0, 1, 0], 0.99)
        assert got == pytest.approx(0.99 + 0.9801 + 0.970299, abs=1e-12)

    def test_single_step_gamma_one(self):
        assert rw.gated_return([1.0], [1], 1.0) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rw.gated_return([1.0, 1.0], [1], 0.99)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
    def test_all_zero_contacts_always_zero(self, rewards):
        assert rw.gated_return(rewards, [0] * len(rewards), 0.99) == 0.0


class TestGeneratorReward:
    def test_alpha_zero(self):
        prior = rw.PriorConfig(alpha=0.0, centers=[(0.0, 0.0)])
        assert rw.generator_reward(2.0, [(5.0, 0.0)], prior) == 2.0

    def test_hand_value(self):
        prior = rw.PriorConfig(alpha=0.5, centers=[(0.0, 0.0)])
        assert rw.generator_reward(2.0, [(1.0, 0.0)], prior) == pytest.approx(1.5)

    def test_at_center_no_penalty(self):
        prior = rw.PriorConfig(alpha=7.0, centers=[(1.3, 0.0)])
        assert rw.generator_reward(2.0, [(1.3, 0.0)], prior) == 2.0

    def test_slot_without_center_unpenalized(self):
        prior = rw.PriorConfig(alpha=1.0, centers=[(0.0, 0.0)])
        r = rw.generator_reward(1.0, [(0.0, 0.0), (9.0, 0.0)], prior)
        assert r == 1.0

    @given(st.floats(-2.0, 2.0), st.floats(0.01, 1.0))
    def test_maximized_at_center(self, q, alpha):
        prior = rw.PriorConfig(alpha=alpha, centers=[(0.3, 0.0)])
        at_center = rw.generator_reward(1.0, [(0.3, 0.0)], prior)
        away = rw.generator_reward(1.0, [(q, 0.0)], prior)
        assert away <= at_center + 1e-12


class TestEpisodeMetrics:
    def test_perfect(self):
        states = [make_state() for _ in range(5)]
        score, success = rw.episode_metrics(states, states)
        assert score == pytest.approx(0.95)
        assert success

    def test_single_violation_fails(self):
        ref = [make_state() for _ in range(4)]
        sim = [make_state() for _ in range(4)]
        bad = np.zeros((6, 2))
        bad[2, 0] = 0.31  # one hand 0.31 m off at one step
        sim[2] = make_state(keypos=bad)
        _, success = rw.episode_metrics(sim, ref)
        assert not success

    def test_constant_small_error_succeeds(self):
        ref = [make_state() for _ in range(4)]
        sim = [make_state(keypos=np.full((6, 2), 0.05 / math.sqrt(2)))
               for _ in range(4)]
        _, success = rw.episode_metrics(sim, ref)
        assert success

    def test_score_bounded(self):
        states = [make_state() for _ in range(3)]
        score, _ = rw.episode_metrics(states, states)
        assert 0.0 < score <= rw.RewardWeights().total + 1e-12
