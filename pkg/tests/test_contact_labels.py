import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenefit import contact_labels as cl
from scenefit import motion as mo


@pytest.fixture(scope="module")
def fvn(model):
    return cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(0))


class TestPoseQuery:
    def test_translation_zeroed(self, model, sit_clip):
        track_a = mo.ReferenceTrack(model, sit_clip)
        track_b = mo.ReferenceTrack(model, mo.translate_clip(sit_clip, 3.0))
        for t in (0, 40, 80):
            assert np.allclose(cl.pose_query(track_a, t), cl.pose_query(track_b, t))

    def test_height_kept(self, model, sit_track):
        q_stand = cl.pose_query(sit_track, 0)
        q_sit = cl.pose_query(sit_track, 60)
        assert q_stand[0] != pytest.approx(q_sit[0])

    def test_dim(self, model, sit_track):
        assert cl.pose_query(sit_track, 0).shape == (cl.pose_query_dim(model),)


class TestTrainFrameValue:
    def test_gamma_zero_targets_reward(self, model, sit_track):
        net = cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(1))
        qs = np.stack([cl.pose_query(sit_track, t) for t in range(8)])
        rs = np.linspace(0.1, 0.8, 8)
        nv = np.full(8, 100.0)
        for _ in range(600):
            loss = cl.train_frame_value(net, qs, np.zeros(8), rs, nv, gamma=0.0)
        pred = net.predict(qs, np.zeros(8))
        assert np.abs(pred - rs).max() < 0.1
        assert loss < 0.01

    def test_empty_batch_noop(self, fvn):
        before = [w.copy() for w in fvn.mlp.weights]
        loss = cl.train_frame_value(fvn, np.zeros((0, fvn.query_dim)), [], [], [], 0.99)
        assert loss == 0.0
        for w0, w1 in zip(before, fvn.mlp.weights):
            assert np.array_equal(w0, w1)

    def test_constant_target_converges(self, model, sit_track):
        net = cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(2))
        qs = np.stack([cl.pose_query(sit_track, t) for t in range(16)])
        losses = []
        for _ in range(500):
            losses.append(cl.train_frame_value(
                net, qs, np.zeros(16), np.full(16, 0.5), np.zeros(16), 0.99))
        head = np.mean(losses[:50])
        tail = np.mean(losses[-50:])
        assert tail < head
        assert tail < 1e-3


class TestPseudoLabels:
    def test_threshold_rule(self, model, sit_track):
        net = cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(3))
        # force the contact input weight positive so V(p,1) > V(p,0)
        labels = cl.pseudo_labels(net, sit_track)
        v1 = net.predict(cl.pose_query_matrix(sit_track), np.ones(sit_track.n_frames))
        v0 = net.predict(cl.pose_query_matrix(sit_track), np.zeros(sit_track.n_frames))
        assert np.array_equal(labels, (v1 - v0 > 0).astype(int))

    def test_equal_values_give_zero(self, model, sit_track):
        net = cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(4))
        # zero the contact-bit input row: V(p,1) == V(p,0) exactly
        net.mlp.weights[0][-1, :] = 0.0
        labels = cl.pseudo_labels(net, sit_track)
        assert np.all(labels == 0)

    def test_invariant_to_shared_offset(self, model, sit_track):
        net = cl.FrameValueNet(cl.pose_query_dim(model), np.random.default_rng(5))
        labels_a = cl.pseudo_labels(net, sit_track)
        net.mlp.biases[-1][...] += 123.0  # shifts both branches equally
        labels_b = cl.pseudo_labels(net, sit_track)
        assert np.array_equal(labels_a, labels_b)


class TestIou:
    def test_identical(self):
        assert cl.labels_iou([0, 1, 1], [0, 1, 1]) == 1.0

    def test_disjoint(self):
        assert cl.labels_iou([1, 0], [0, 1]) == 0.0

    def test_partial(self):
        assert cl.labels_iou([1, 1, 0, 0], [0, 1, 1, 0]) == pytest.approx(1 / 3)

    def test_both_empty(self):
        assert cl.labels_iou([0, 0], [0, 0]) == 1.0


class TestClustering:
    def test_no_contacts(self, model, sit_track):
        prior = cl.cluster_pose_priors(np.zeros(sit_track.n_frames), sit_track)
        assert prior.count == 0
        assert prior.centers == []

    def test_hand_example_two_groups(self):
        pts = np.array([[1.0, 0.0], [1.02, 0.0], [1.05, 0.0], [3.0, 0.0], [3.1, 0.0]])
        groups = cl.single_linkage_clusters(pts, 0.5)
        centers = sorted(float(np.mean(pts[g, 0])) for g in groups)
        assert len(groups) == 2
        assert centers[0] == pytest.approx(1.0233333333)
        assert centers[1] == pytest.approx(3.05)

    def test_single_segment_single_cluster(self, model, sit_clip, sit_track):
        prior = cl.cluster_pose_priors(sit_clip.contacts_gt, sit_track)
        assert prior.count == 1
        hold_x = [fr.root[0] for fr, c in zip(sit_clip.frames, sit_clip.contacts_gt) if c]
        assert prior.centers[0][0] == pytest.approx(float(np.mean(hold_x)))
        assert prior.centers[0][1] in (0.0, math.pi)

    def test_two_sit_clusters(self, model):
        clip = mo.make_two_sit(0.45, 2.5, model=model)
        track = mo.ReferenceTrack(model, clip)
        prior = cl.cluster_pose_priors(clip.contacts_gt, track)
        assert prior.count == 2
        assert prior.centers[1][0] - prior.centers[0][0] == pytest.approx(2.5, abs=0.05)
        # slots ordered by first contact frame
        assert min(prior.members[0]) < min(prior.members[1])

    @given(st.integers(0, 10_000))
    @settings(max_examples=25)
    def test_permutation_invariance(self, seed):
        r = np.random.default_rng(seed)
        pts = np.concatenate([r.normal(0.0, 0.05, (5, 2)),
                              r.normal(4.0, 0.05, (4, 2))])
        base = cl.single_linkage_clusters(pts, 0.5)
        perm = r.permutation(len(pts))
        shuffled = cl.single_linkage_clusters(pts[perm], 0.5)
        def canon(groups, mapping=None):
            out = []
            for g in groups:
                idx = sorted(mapping[i] if mapping is not None else i for i in g)
                out.append(tuple(idx))
            return sorted(out)
        assert canon(base) == canon(shuffled, mapping=perm)

    @given(st.integers(0, 10_000), st.floats(0.1, 1.0), st.floats(1.0, 3.0))
    @settings(max_examples=25)
    def test_threshold_monotonicity(self, seed, t_small, t_big):
        r = np.random.default_rng(seed)
        pts = r.normal(0.0, 1.0, (12, 2))
        small = len(cl.single_linkage_clusters(pts, t_small))
        big = len(cl.single_linkage_clusters(pts, t_big))
        assert big <= small


class TestExport:
    def test_export_schema(self, model, sit_clip, sit_track, tmp_path):
        prior = cl.cluster_pose_priors(sit_clip.contacts_gt, sit_track)
        path = tmp_path / "labels.json"
        cl.export_labels(path, sit_clip.clip_id, sit_clip.contacts_gt, prior)
        import json
        doc = json.loads(path.read_text())
        assert doc["clip_id"] == sit_clip.clip_id
        assert doc["L"] == prior.count
        assert len(doc["labels"]) == sit_clip.n_frames
        assert {"tx", "yaw", "count"} <= set(doc["priors"][0])
