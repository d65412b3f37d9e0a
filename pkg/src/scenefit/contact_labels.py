"""Unsupervised contact inference: a frame-value regressor over canonicalized
pose queries and contact bits, pseudo contact labels from its two-bit
comparison, and pose-prior clustering of contact-frame pelvis poses."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .neural import Adam, Mlp


def pose_query_dim(model) -> int:
    return 6 + 3 * model.n_joints


def pose_query(track, t: int) -> np.ndarray:
    """Reference-frame pose feature with the horizontal translation removed;
    pelvis height is kept so seated and standing poses stay separable."""
    st = track.state(t)
    out = [st.root_z, math.cos(st.root_th), math.sin(st.root_th),
           st.root_vx, st.root_vz, st.root_w]
    for q in st.q:
        out.extend((math.cos(q), math.sin(q)))
    out.extend(st.qd)
    return np.array(out)


def pose_query_matrix(track) -> np.ndarray:
    return np.stack([pose_query(track, t) for t in range(track.n_frames)])


class FrameValueNet:
    """Scalar regressor V(pose query, contact bit)."""

    def __init__(self, query_dim: int, rng: np.random.Generator,
                 hidden=(256, 128, 64), lr: float = 1e-3):
        self.query_dim = query_dim
        self.mlp = Mlp([query_dim + 1] + list(hidden) + [1], rng, final_scale=1.0)
        self.opt = Adam(self.mlp, lr)

    def predict(self, queries: np.ndarray, contact_bits) -> np.ndarray:
        queries = np.atleast_2d(queries)
        bits = np.broadcast_to(np.asarray(contact_bits, dtype=float).reshape(-1, 1),
                               (queries.shape[0], 1))
        x = np.concatenate([queries, bits], axis=1)
        return self.mlp.infer(x)[:, 0]

    def tensors(self, prefix="frame_value."):
        return self.mlp.tensors(prefix)

    def load_tensors(self, tensors, prefix="frame_value."):
        self.mlp.load_tensors(tensors, prefix)


def train_frame_value(net: FrameValueNet, queries, contacts, rewards,
                      next_values, gamma: float, dones=None) -> float:
    """One Adam regression step toward r_t + gamma * V(s_{t+1}).

    Targets are treated as constants; an empty batch is a no-op returning 0.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.size == 0 or queries.shape[0] == 0:
        return 0.0
    contacts = np.asarray(contacts, dtype=float).reshape(-1)
    rewards = np.asarray(rewards, dtype=float).reshape(-1)
    next_values = np.asarray(next_values, dtype=float).reshape(-1)
    mask = np.ones_like(rewards) if dones is None else 1.0 - np.asarray(dones, dtype=float)
    targets = rewards + gamma * next_values * mask
    x = np.concatenate([queries, contacts.reshape(-1, 1)], axis=1)
    pred = net.mlp.forward(x)[:, 0]
    err = pred - targets
    loss = float(np.mean(err ** 2))
    net.mlp.zero_grads()
    net.mlp.backward((2.0 * err / err.size)[:, None])
    net.opt.step()
    return loss


def pseudo_labels(net: FrameValueNet, track) -> np.ndarray:
    """Per-frame contact call: 1 iff the with-contact frame value strictly
    exceeds the without-contact value."""
    queries = pose_query_matrix(track)
    v1 = net.predict(queries, np.ones(len(queries)))
    v0 = net.predict(queries, np.zeros(len(queries)))
    return (v1 - v0 > 0.0).astype(int)


def labels_iou(pred, gt) -> float:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError("label arrays must have equal length")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


@dataclass
class PosePrior:
    """Cluster centers of contact-frame pelvis poses, ordered by first
    contact; the cluster count doubles as the interacting-object count."""

    centers: list = field(default_factory=list)        # (tx, yaw) per cluster
    counts: list = field(default_factory=list)
    members: list = field(default_factory=list)        # frame indices per cluster

    @property
    def count(self) -> int:
        return len(self.centers)


def single_linkage_clusters(points: np.ndarray, threshold: float) -> list[list[int]]:
    """Agglomerative single-linkage grouping; merges while the smallest
    inter-cluster distance is below the threshold. Deterministic tie-break by
    lowest index pair."""
    n = len(points)
    if n == 0:
        return []
    clusters = [[i] for i in range(n)]
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                d = min(dist[i, j] for i in clusters[a] for j in clusters[b])
                if best is None or d < best[0] - 1e-15:
                    best = (d, a, b)
        if best is None or best[0] >= threshold:
            break
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return clusters


def cluster_pose_priors(labels, track, threshold: float = 0.5,
                        yaw_weight: float = 0.5) -> PosePrior:
    """Clusters contact-frame pelvis (tx, yaw) with the yaw axis scaled to
    meters; centers are member means with yaw snapped to the facing set."""
    labels = np.asarray(labels, dtype=int)
    frames = np.nonzero(labels > 0)[0]
    if frames.size == 0:
        return PosePrior()
    txs = np.array([track.state(int(t)).root_x for t in frames])
    yaws = np.array([0.0 if math.cos(track.state(int(t)).root_th) >= 0.0 else math.pi
                     for t in frames])
    pts = np.stack([txs, yaw_weight * yaws], axis=1)
    groups = single_linkage_clusters(pts, threshold)
    groups.sort(key=lambda g: min(frames[i] for i in g))
    prior = PosePrior()
    for g in groups:
        tx = float(np.mean(txs[g]))
        yaw = 0.0 if np.mean(yaws[g]) < math.pi / 2.0 else math.pi
        prior.centers.append((tx, yaw))
        prior.counts.append(len(g))
        prior.members.append(sorted(int(frames[i]) for i in g))
    return prior


def export_labels(path, clip_id: int, labels, prior: PosePrior) -> None:
    doc = {
        "clip_id": int(clip_id),
        "labels": [int(v) for v in labels],
        "priors": [{"tx": c[0], "yaw": c[1], "count": n}
                   for c, n in zip(prior.centers, prior.counts)],
        "L": prior.count,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
