"""Tracking reward terms and weights, contact-gated returns, pose-prior
shaped generator reward, and the episode evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .motion import wrap_angle


@dataclass
class RewardWeights:
    root_pos: float = 0.2
    root_orient: float = 0.05
    root_vel: float = 0.05
    joint_pos: float = 0.45
    joint_vel: float = 0.05
    key_body: float = 0.15

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"weight {name} must be >= 0")

    @property
    def total(self) -> float:
        return (self.root_pos + self.root_orient + self.root_vel
                + self.joint_pos + self.joint_vel + self.key_body)


@dataclass
class RewardBreakdown:
    root_pos: float
    root_orient: float
    root_vel: float
    joint_pos: float
    joint_vel: float
    key_body: float
    total: float


@dataclass
class PriorConfig:
    """Quadratic pose-prior guidance for the layout generator."""

    alpha: float = 0.1
    centers: list = field(default_factory=list)  # one (tx, yaw) per layout slot
    yaw_weight: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError("alpha must be finite and >= 0")


def tracking_reward(sim, ref, weights: RewardWeights | None = None) -> RewardBreakdown:
    """Weighted exponential tracking terms between two CharacterStates.

    Root terms use the planar position/velocity norm and the wrapped angle
    distance; joint terms use squared-error sums; the key-body term uses the
    mean world-position error over the key bodies.
    """
    w = weights or RewardWeights()
    droot = math.hypot(sim.root_x - ref.root_x, sim.root_z - ref.root_z)
    r_p = math.exp(-10.0 * droot)
    r_o = math.exp(-5.0 * abs(wrap_angle(sim.root_th - ref.root_th)))
    dvel = math.hypot(sim.root_vx - ref.root_vx, sim.root_vz - ref.root_vz)
    r_v = math.exp(-1.0 * dvel)
    dq = np.array([wrap_angle(a) for a in (sim.q - ref.q)])
    r_jp = math.exp(-2.0 * float(np.dot(dq, dq)))
    dqd = sim.qd - ref.qd
    r_jv = math.exp(-0.1 * float(np.dot(dqd, dqd)))
    dk = np.linalg.norm(sim.keypos - ref.keypos, axis=1)
    r_k = math.exp(-10.0 * float(dk.mean()))
    total = (w.root_pos * r_p + w.root_orient * r_o + w.root_vel * r_v
             + w.joint_pos * r_jp + w.joint_vel * r_jv + w.key_body * r_k)
    return RewardBreakdown(r_p, r_o, r_v, r_jp, r_jv, r_k, total)


def gated_return(rewards, contacts, gamma: float) -> float:
    """Discounted return multiplied by the any-contact gate.

    The discount index starts at 1, so a single reward r contributes
    gamma * r.
    """
    if len(rewards) != len(contacts):
        raise ValueError(f"{len(rewards)} rewards vs {len(contacts)} contact flags")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    if not any(c > 0 for c in contacts):
        return 0.0
    acc = 0.0
    g = 1.0
    for r in rewards:
        g *= gamma
        acc += g * r
    return acc


def prior_penalty(placement, center, yaw_weight: float = 0.5) -> float:
    """Squared distance between a placement (tx, yaw) and a prior center."""
    tx, yaw = placement
    ctx, cyaw = center
    dyaw = wrap_angle(yaw - cyaw) * yaw_weight
    dx = tx - ctx
    return dx * dx + dyaw * dyaw


def generator_reward(track_return: float, placements, prior: PriorConfig) -> float:
    """Gated tracking return minus the quadratic pose-prior penalty.

    Each layout slot is penalized against its own prior center; slots without
    a center contribute no penalty.
    """
    penalty = 0.0
    for j, plc in enumerate(placements):
        if j < len(prior.centers):
            penalty += prior_penalty(plc, prior.centers[j], prior.yaw_weight)
    return track_return - prior.alpha * penalty


def episode_metrics(sim_states, ref_states, weights: RewardWeights | None = None,
                    success_threshold: float = 0.3):
    """Mean per-step tracking reward and the strict key-body success flag."""
    if len(sim_states) != len(ref_states):
        raise ValueError("trajectory not aligned with reference frames")
    if not sim_states:
        raise ValueError("empty trajectory")
    total = 0.0
    worst = 0.0
    for sim, ref in zip(sim_states, ref_states):
        total += tracking_reward(sim, ref, weights).total
        err = float(np.linalg.norm(sim.keypos - ref.keypos, axis=1).max())
        worst = max(worst, err)
    return total / len(sim_states), worst < success_threshold
