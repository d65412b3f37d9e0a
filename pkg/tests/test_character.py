import math

import numpy as np
import pytest

from scenefit import character as ch
from scenefit import motion as mo


class TestModel:
    def test_counts(self, model):
        assert model.n_links == 12
        assert model.n_joints == 11
        assert model.n_key == 6

    def test_key_body_names(self, model):
        names = {k.name for k in model.key_bodies}
        assert names == {"pelvis", "head", "l_hand", "r_hand", "l_foot", "r_foot"}

    def test_total_mass(self, model):
        assert sum(l.mass for l in model.links) == pytest.approx(45.0)

    def test_json_roundtrip(self, model, tmp_path):
        path = tmp_path / "char.json"
        model.save(path)
        loaded = ch.CharacterModel.load(path)
        assert loaded.n_links == model.n_links
        for a, b in zip(loaded.joints, model.joints):
            assert a.name == b.name
            assert a.kp == b.kp
            assert a.limits == b.limits

    def test_anchor_consistency_standing(self, model):
        world = ch.build_world(model)
        for jt in world.joints:
            pp = world.links[jt.parent].world_point(*jt.anchor_parent)
            cc = world.links[jt.child].world_point(*jt.anchor_child)
            assert pp == pytest.approx(cc, abs=1e-12)

    def test_feature_dims_published(self, model):
        dims = model.feature_dims(n_slots=1)
        assert dims["s_h"] == 1 + 2 + 2 + 1 + 2 * 11 + 11 + 2 * 6
        assert dims["s_r"] == dims["s_h"] + 1
        assert dims["s_e"] == 128
        assert dims["obs"] == dims["s_h"] + dims["s_e"] + dims["s_r"]


def tiny_fk_head_height(model, root_z, joint_q):
    """Independent FK: walk parent chain for the torso only."""
    waist = model.joints[0]
    th_torso = joint_q[0]
    # pelvis at (0, root_z, 0); torso pose from the waist joint
    px, pz = 0.0 + waist.anchor_parent[0], root_z + waist.anchor_parent[1]
    c, s = math.cos(th_torso), math.sin(th_torso)
    ax, az = waist.anchor_child
    tx = px - (c * ax - s * az)
    tz = pz - (s * ax + c * az)
    head = model.key_bodies[1]
    ox, oz = head.offset
    return tz + s * ox + c * oz


class TestFeatures:
    def test_standing_velocities_zero(self, model):
        world = ch.build_world(model)
        s_h = ch.featurize_proprio(world, model)
        # velocity block: root linear (2) + angular (1) + joint velocities (11)
        assert np.allclose(s_h[3:6], 0.0)
        assert np.allclose(s_h[6 + 22:6 + 22 + 11], 0.0)

    def test_translation_invariance(self, model):
        world = ch.build_world(model)
        a = ch.featurize_proprio(world, model)
        for link in world.links:
            link.x += 5.0
        b = ch.featurize_proprio(world, model)
        assert np.allclose(a, b, atol=1e-12)

    def test_head_entry_matches_independent_fk(self, model):
        world = ch.build_world(model)
        q = np.zeros(model.n_joints)
        q[0] = 0.3
        ch.set_world_state(world, model, (0.0, 0.95, 0.0), q)
        s_h = ch.featurize_proprio(world, model)
        # key-body block: entries (x, z) per key body, head is index 1
        base = 1 + 2 + 2 + 1 + 22 + 11
        head_z_rel = s_h[base + 3]
        expected = tiny_fk_head_height(model, 0.95, q) - 0.95
        assert head_z_rel == pytest.approx(expected, abs=1e-12)

    def test_reference_relative_offset(self, model, sit_track):
        world = ch.build_world(model)
        ref = sit_track.state(0)
        ch.set_world_state(world, model,
                           (ref.root_x - 1.0, ref.root_z, 0.0), ref.q)
        s_r, s_e = ch.featurize_reference(world, model, ref, np.zeros(128))
        assert s_r[0] == pytest.approx(1.0, abs=1e-9)
        assert s_e.shape == (128,)

    def test_reference_self_consistency(self, model, sit_track):
        world = ch.build_world(model)
        st = sit_track.state(10)
        ch.set_world_state(world, model, (st.root_x, st.root_z, st.root_th), st.q,
                           (st.root_vx, st.root_vz, st.root_w), st.qd)
        s_r, _ = ch.featurize_reference(world, model, st, np.zeros(128))
        assert abs(s_r[0]) < 1e-9
        assert abs(s_r[1]) < 1e-9

    def test_rigid_transform_invariance(self, model, sit_track):
        world = ch.build_world(model)
        st = sit_track.state(5)
        ch.set_world_state(world, model, (st.root_x, st.root_z, st.root_th), st.q,
                           (st.root_vx, st.root_vz, st.root_w), st.qd)
        a, _ = ch.featurize_reference(world, model, st, np.zeros(128))
        # translate both character and reference by the same offset
        dx = 2.5
        shifted = ch.CharacterState(st.root_x + dx, st.root_z, st.root_th,
                                    st.root_vx, st.root_vz, st.root_w,
                                    st.q, st.qd, st.keypos + np.array([dx, 0.0]))
        for link in world.links:
            link.x += dx
        b, _ = ch.featurize_reference(world, model, shifted, np.zeros(128))
        assert np.allclose(a, b, atol=1e-9)

    def test_observation_finite(self, model, sit_track):
        world = ch.build_world(model)
        obs = ch.observe(world, model, sit_track.state(0), np.zeros(128))
        assert np.all(np.isfinite(obs))
        assert obs.shape[0] == model.feature_dims()["obs"]


class TestReset:
    def test_single_frame_clip(self, model):
        fr = [mo.MotionFrame(np.array([0.0, 0.93, 0.0]), np.zeros(11)),
              mo.MotionFrame(np.array([0.0, 0.93, 0.0]), np.zeros(11))]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, 30.0, fr))
        track = mo.ReferenceTrack(model, clip)
        world = ch.build_world(model)
        rng = np.random.default_rng(0)
        for _ in range(5):
            t = ch.reset_from_reference(world, model, track, rng)
            assert t == 0

    def test_all_frames_sampled(self, model, sit_track):
        world = ch.build_world(model)
        rng = np.random.default_rng(7)
        n = sit_track.n_frames
        seen = set()
        for _ in range(60 * n):
            seen.add(ch.reset_from_reference(world, model, sit_track, rng))
        assert seen == set(range(n - 1))

    def test_reset_matches_reference(self, model, sit_track):
        world = ch.build_world(model)
        rng = np.random.default_rng(3)
        t = ch.reset_from_reference(world, model, sit_track, rng, frame=40)
        st = sit_track.state(t)
        s_r, _ = ch.featurize_reference(world, model, st, np.zeros(128))
        assert abs(s_r[0]) < 1e-6
        assert abs(s_r[1]) < 1e-6

    def test_reset_never_penetrates(self, model, sit_track):
        world = ch.build_world(model)
        rng = np.random.default_rng(1)
        for frame in (0, 30, 60):
            ch.reset_from_reference(world, model, sit_track, rng, frame=frame)
            low = min(ch._lowest_point(l) for l in world.links)
            assert low >= -1e-6

    def test_penetrating_pose_lifted_to_clearance(self, model):
        world = ch.build_world(model)
        ch.set_world_state(world, model, (0.0, 0.80, 0.0), np.zeros(model.n_joints))
        ch.ground_clearance_fix(world)
        low = min(ch._lowest_point(l) for l in world.links)
        assert low >= 1e-3 - 1e-9


class TestTermination:
    def test_perfect_tracking_no_terminate(self, model, sit_track):
        world = ch.build_world(model)
        st = sit_track.state(0)
        ch.set_world_state(world, model, (st.root_x, st.root_z, st.root_th), st.q)
        ch.ground_clearance_fix(world)
        assert not ch.early_terminate(world, model, st)

    def test_root_error_rule(self, model, sit_track):
        world = ch.build_world(model)
        st = sit_track.state(0)
        ch.set_world_state(world, model, (st.root_x + 0.6, st.root_z, st.root_th), st.q)
        assert ch.early_terminate(world, model, st)

    def test_fall_rule_head_on_ground(self, model, sit_track):
        world = ch.build_world(model)
        st = sit_track.state(0)
        # lay the whole character down so the torso touches the ground
        ch.set_world_state(world, model, (st.root_x, 0.12, -math.pi / 2), st.q)
        assert ch.early_terminate(world, model, st)

    def test_pd_hold_keeps_key_bodies(self, model):
        world = ch.build_world(model)
        before = ch.key_body_positions(model, world)
        targets = [0.0] * model.n_joints
        for _ in range(30):
            world.step_pd(targets, substeps=4)
        after = ch.key_body_positions(model, world)
        assert np.abs(after - before).max() < 0.05
