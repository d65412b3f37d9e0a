import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenefit import motion as mo


class TestSynthSit:
    def test_hold_labels_exact(self, model):
        clip = mo.synth_sit(0.45, 0.5, (2.4, 0.8, 2.0, 0.8), model=model)
        assert sum(clip.contacts_gt) == 60
        # labels form one contiguous block
        ones = [i for i, v in enumerate(clip.contacts_gt) if v]
        assert ones == list(range(ones[0], ones[0] + 60))

    def test_hold_pelvis_height(self, model, sit_clip):
        half = model.links[0].shape.b
        hold = [fr for fr, c in zip(sit_clip.frames, sit_clip.contacts_gt) if c]
        for fr in hold:
            assert fr.root[1] == pytest.approx(0.45 + half, abs=1e-12)

    def test_approach_zero_first_frame(self, model):
        clip = mo.synth_sit(0.45, 0.0, model=model)
        hold = [fr for fr, c in zip(clip.frames, clip.contacts_gt) if c]
        assert clip.frames[0].root[0] == pytest.approx(hold[0].root[0])

    def test_deterministic(self, model):
        a = mo.synth_sit(0.35, 0.4, model=model)
        b = mo.synth_sit(0.35, 0.4, model=model)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.root, fb.root)
            assert np.array_equal(fa.joints, fb.joints)

    def test_out_of_range_height(self, model):
        with pytest.raises(ValueError):
            mo.synth_sit(0.05, 0.5, model=model)
        with pytest.raises(ValueError):
            mo.synth_sit(1.2, 0.5, model=model)

    def test_physically_trackable_speeds(self, model):
        for approach in (0.0, 0.5):
            clip = mo.synth_sit(0.45, approach, model=model)
            for fr in clip.frames:
                assert math.hypot(fr.root_vel[0], fr.root_vel[1]) < 2.0
                assert np.abs(fr.joint_vel).max() < 10.0

    def test_joint_angles_within_limits(self, model, sit_clip):
        lo = np.array([j.limits[0] for j in model.joints])
        hi = np.array([j.limits[1] for j in model.joints])
        for fr in sit_clip.frames:
            assert np.all(fr.joints >= lo - 1e-9)
            assert np.all(fr.joints <= hi + 1e-9)


class TestSynthPlatform:
    def test_max_pelvis_height(self, model):
        clip = mo.synth_platform(0.5, model=model)
        top = max(fr.root[1] for fr in clip.frames)
        assert top == pytest.approx(0.5 + 0.93, abs=0.02)

    def test_labels_start_after_first_frame(self, model):
        clip = mo.synth_platform(0.5, model=model)
        assert clip.contacts_gt[0] == 0
        assert sum(clip.contacts_gt) > 0

    def test_out_of_range(self, model):
        with pytest.raises(ValueError):
            mo.synth_platform(0.1, model=model)

    def test_resample_consistency(self, model):
        a = mo.synth_platform(0.5, fps=30.0, model=model)
        b = mo.synth_platform(0.5, fps=60.0, model=model)
        # 30 fps frames are the even 60 fps frames
        worst = 0.0
        for i, fa in enumerate(a.frames):
            fb = b.frames[min(2 * i, b.n_frames - 1)]
            worst = max(worst, np.abs(fa.root - fb.root).max(),
                        np.abs(fa.joints - fb.joints).max())
        assert worst < 1e-3

    def test_speeds(self, model):
        clip = mo.synth_platform(0.5, model=model)
        for fr in clip.frames:
            assert math.hypot(fr.root_vel[0], fr.root_vel[1]) < 2.0
            assert np.abs(fr.joint_vel).max() < 10.0


class TestVelocities:
    def test_constant_pose_zero_velocity(self):
        fr = [mo.MotionFrame(np.array([1.0, 0.9, 0.1]), np.full(3, 0.2))
              for _ in range(5)]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, 30.0, fr))
        for f in clip.frames:
            assert np.allclose(f.root_vel, 0.0)
            assert np.allclose(f.joint_vel, 0.0)

    def test_linear_ramp(self):
        fps = 30.0
        fr = [mo.MotionFrame(np.array([t / fps, 0.9, 0.0]), np.zeros(2))
              for t in range(6)]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, fps, fr))
        for f in clip.frames:
            assert f.root_vel[0] == pytest.approx(1.0)

    def test_wrap_crossing(self):
        fps = 30.0
        # angle ramps through +pi -> continuous rate despite the wrap
        angles = [math.pi - 0.2 + 0.1 * k for k in range(6)]
        fr = [mo.MotionFrame(np.array([0.0, 0.9, mo.wrap_angle(a)]), np.zeros(1))
              for a in angles]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, fps, fr))
        for f in clip.frames:
            assert f.root_vel[2] == pytest.approx(0.1 * fps, rel=1e-9)

    @given(st.floats(-3.0, 3.0), st.floats(0.01, 0.3))
    def test_wrap_property(self, start, step):
        fps = 30.0
        angles = [start + step * k for k in range(5)]
        fr = [mo.MotionFrame(np.array([0.0, 0.9, mo.wrap_angle(a)]), np.zeros(1))
              for a in angles]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, fps, fr))
        for f in clip.frames:
            assert f.root_vel[2] == pytest.approx(step * fps, rel=1e-6)


class TestClipIO:
    def test_roundtrip(self, model, sit_clip, tmp_path):
        path = tmp_path / "clip.json"
        mo.save_clip(sit_clip, path)
        loaded = mo.load_clip(path)
        assert loaded.clip_id == sit_clip.clip_id
        assert loaded.fps == sit_clip.fps
        assert loaded.contacts_gt == sit_clip.contacts_gt
        for a, b in zip(loaded.frames, sit_clip.frames):
            assert np.abs(a.root - b.root).max() <= 1e-12
            assert np.abs(a.joints - b.joints).max() <= 1e-12

    def test_missing_fps_names_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"id": 0, "frames": []}')
        with pytest.raises(mo.ClipParseError) as err:
            mo.load_clip(path)
        assert "fps" in str(err.value)
        assert err.value.fieldname == "fps"

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"id": 0, ')
        with pytest.raises(mo.ClipParseError):
            mo.load_clip(path)

    def test_labels_preserved(self, model, tmp_path):
        clip = mo.synth_sit(0.3, 0.2, model=model)
        path = tmp_path / "clip.json"
        mo.save_clip(clip, path)
        assert mo.load_clip(path).contacts_gt == clip.contacts_gt


class TestEditing:
    def test_translate(self, sit_clip):
        shifted = mo.translate_clip(sit_clip, 1.2)
        assert shifted.frames[0].root[0] == pytest.approx(
            sit_clip.frames[0].root[0] + 1.2)
        assert shifted.contacts_gt == sit_clip.contacts_gt

    def test_two_sit_segments(self, model):
        clip = mo.make_two_sit(0.45, 2.5, model=model)
        labels = np.array(clip.contacts_gt)
        # exactly two contiguous contact segments
        changes = np.diff(np.concatenate([[0], labels, [0]]))
        assert (changes == 1).sum() == 2
        # the two segments sit ~2.5 m apart
        seg_starts = np.nonzero(changes == 1)[0]
        xa = clip.frames[seg_starts[0] + 2].root[0]
        xb = clip.frames[seg_starts[1] + 2].root[0]
        assert xb - xa == pytest.approx(2.5, abs=0.05)

    def test_concat_requires_same_fps(self, model):
        a = mo.synth_sit(0.45, 0.0, model=model)
        b = mo.synth_sit(0.45, 0.0, fps=60.0, model=model)
        with pytest.raises(ValueError):
            mo.concat_clips(a, b)


class TestTrack:
    def test_track_dims(self, model, sit_track):
        st0 = sit_track.state(0)
        assert st0.q.shape == (model.n_joints,)
        assert st0.keypos.shape == (model.n_key, 2)

    def test_out_of_range(self, sit_track):
        with pytest.raises(ValueError):
            sit_track.state(sit_track.n_frames)

    def test_joint_count_mismatch(self, model):
        fr = [mo.MotionFrame(np.array([0.0, 0.9, 0.0]), np.zeros(4))
              for _ in range(3)]
        clip = mo.finite_difference_velocities(mo.MotionClip(0, 30.0, fr))
        with pytest.raises(ValueError):
            mo.ReferenceTrack(model, clip)
