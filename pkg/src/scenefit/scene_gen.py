"""Scene layout generator policy: per-slot categorical object selection and
Gaussian placement, sampled layouts with joint log-probabilities, and its
bandit-style PPO update under the gated, prior-shaped reward."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .neural import Adam, CategoricalHead, EmbeddingTable, GaussianHead, Mlp
from .ppo import PpoConfig
from .rewards import PriorConfig

ARENA_BOUND = 10.0


@dataclass
class Placement:
    tx: float
    ty: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.tx) and math.isfinite(self.yaw)):
            raise ValueError("placement must be finite")
        self.tx = float(min(ARENA_BOUND, max(-ARENA_BOUND, self.tx)))


@dataclass
class SceneLayout:
    items: list  # [(object_index, Placement), ...] one per slot
    log_prob: float = 0.0

    @property
    def n_slots(self) -> int:
        return len(self.items)


class GeneratorPolicy:
    """Two nets: motion+slot -> object logits; motion+slot+object -> placement
    mean. Object and slot identities enter through fixed embeddings; the
    placement distribution keeps a constant diagonal std."""

    MOTION_DIM = 8
    SLOT_DIM = 4
    OBJ_DIM = 8

    def __init__(self, n_objects: int, n_motions: int = 8, max_slots: int = 4,
                 hidden=(64, 16), place_std=(0.3, 0.3), seed: int = 0):
        if n_objects < 1:
            raise ValueError("need at least one object")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE7E]))
        self.n_objects = n_objects
        self.n_motions = n_motions
        self.max_slots = max_slots
        self.emb_motion = EmbeddingTable(n_motions, self.MOTION_DIM, rng)
        self.emb_slot = EmbeddingTable(max_slots, self.SLOT_DIM, rng)
        self.emb_obj = EmbeddingTable(n_objects, self.OBJ_DIM, rng)
        sel_in = self.MOTION_DIM + self.SLOT_DIM
        plc_in = sel_in + self.OBJ_DIM
        self.sel_net = Mlp([sel_in] + list(hidden) + [n_objects], rng, final_scale=0.01)
        self.plc_net = Mlp([plc_in] + list(hidden) + [2], rng, final_scale=0.01)
        self.place_head = GaussianHead(np.asarray(place_std, dtype=float))

    def _check_motion(self, motion_index: int) -> None:
        if not 0 <= motion_index < self.n_motions:
            raise ValueError(f"unknown motion index {motion_index}")

    def sel_input(self, motion_index: int, slot: int) -> np.ndarray:
        self._check_motion(motion_index)
        return np.concatenate([self.emb_motion.lookup(motion_index),
                               self.emb_slot.lookup(slot)])

    def plc_input(self, motion_index: int, slot: int, obj_index: int) -> np.ndarray:
        return np.concatenate([self.sel_input(motion_index, slot),
                               self.emb_obj.lookup(obj_index)])

    def selection_distribution(self, motion_index: int, slot: int = 0) -> np.ndarray:
        logits = self.sel_net.infer(self.sel_input(motion_index, slot)[None, :])
        return CategoricalHead.probs(logits)[0]

    def placement_mean(self, motion_index: int, slot: int, obj_index: int) -> np.ndarray:
        return self.plc_net.infer(self.plc_input(motion_index, slot, obj_index)[None, :])[0]

    def sample_layout(self, motion_index: int, n_slots: int,
                      rng: np.random.Generator) -> SceneLayout:
        if n_slots < 1:
            raise ValueError("layouts need at least one slot")
        items = []
        log_prob = 0.0
        for j in range(min(n_slots, self.max_slots)):
            logits = self.sel_net.infer(self.sel_input(motion_index, j)[None, :])
            idx = int(CategoricalHead.sample(logits, rng)[0])
            log_prob += float(CategoricalHead.log_prob(logits, [idx])[0])
            mu = self.placement_mean(motion_index, j, idx)
            q = self.place_head.sample(mu, rng)
            log_prob += float(self.place_head.log_prob(mu, q))
            items.append((idx, Placement(tx=float(q[0]), yaw=float(q[1]))))
        return SceneLayout(items=items, log_prob=log_prob)

    def mean_layout(self, motion_index: int, n_slots: int) -> SceneLayout:
        """Deterministic layout: argmax selection and mean placement."""
        items = []
        log_prob = 0.0
        for j in range(min(n_slots, self.max_slots)):
            probs = self.selection_distribution(motion_index, j)
            idx = int(np.argmax(probs))
            log_prob += float(np.log(probs[idx]))
            mu = self.placement_mean(motion_index, j, idx)
            log_prob += float(self.place_head.log_prob(mu, mu))
            items.append((idx, Placement(tx=float(mu[0]), yaw=float(mu[1]))))
        return SceneLayout(items=items, log_prob=log_prob)

    def layout_log_prob(self, motion_index: int, layout: SceneLayout) -> float:
        """Re-evaluates the joint log-probability of a sampled layout."""
        total = 0.0
        for j, (idx, plc) in enumerate(layout.items):
            logits = self.sel_net.infer(self.sel_input(motion_index, j)[None, :])
            total += float(CategoricalHead.log_prob(logits, [idx])[0])
            mu = self.placement_mean(motion_index, j, idx)
            q = np.array([plc.tx, plc.yaw])
            total += float(self.place_head.log_prob(mu, q))
        return total

    def tensors(self) -> dict:
        out = self.sel_net.tensors("generator.sel.")
        out.update(self.plc_net.tensors("generator.plc."))
        return out

    def load_tensors(self, tensors: dict) -> None:
        self.sel_net.load_tensors(tensors, "generator.sel.")
        self.plc_net.load_tensors(tensors, "generator.plc.")


@dataclass
class LayoutDecision:
    """One sampled layout with the return its episodes earned."""

    motion_index: int
    layout: SceneLayout
    reward: float


class GeneratorUpdater:
    """Contextual-bandit PPO over layout decisions: each layout is a one-step
    action whose advantage is its shaped reward minus a running baseline."""

    def __init__(self, policy: GeneratorPolicy, cfg: PpoConfig | None = None,
                 prior: PriorConfig | None = None, lr: float = 3e-3,
                 entropy_coef: float = 0.01, baseline_decay: float = 0.9):
        self.policy = policy
        self.cfg = cfg or PpoConfig(epochs=4, minibatch=64)
        self.prior = prior or PriorConfig()
        self.entropy_coef = entropy_coef
        self.baseline_decay = baseline_decay
        self.baseline: float | None = None
        self.sel_opt = Adam(policy.sel_net, lr)
        self.plc_opt = Adam(policy.plc_net, lr)

    def update(self, decisions: list[LayoutDecision]) -> dict:
        if not decisions:
            return {"n": 0, "baseline": self.baseline or 0.0,
                    "mean_reward": 0.0, "mean_ratio": 1.0}
        rewards = np.array([d.reward for d in decisions])
        batch_mean = float(rewards.mean())
        if self.baseline is None:
            self.baseline = batch_mean
        adv = rewards - self.baseline
        self.baseline = (self.baseline_decay * self.baseline
                         + (1.0 - self.baseline_decay) * batch_mean)
        scale = np.abs(adv).mean()
        if scale > 1e-8:
            adv = adv / scale

        old_lp = np.array([d.layout.log_prob for d in decisions])
        # per-slot rows, grouped for batched net passes
        sel_rows = []
        plc_rows = []
        for di, d in enumerate(decisions):
            for j, (idx, plc) in enumerate(d.layout.items):
                sel_rows.append((di, j, idx, self.policy.sel_input(d.motion_index, j)))
                plc_rows.append((di, idx,
                                 self.policy.plc_input(d.motion_index, j, idx),
                                 np.array([plc.tx, plc.yaw])))
        sel_x = np.stack([r[3] for r in sel_rows])
        sel_owner = np.array([r[0] for r in sel_rows])
        sel_choice = np.array([r[2] for r in sel_rows])
        plc_x = np.stack([r[2] for r in plc_rows])
        plc_owner = np.array([r[0] for r in plc_rows])
        plc_q = np.stack([r[3] for r in plc_rows])
        var = self.policy.place_head.std ** 2
        n_dec = len(decisions)

        ratios = []
        for _ in range(self.cfg.epochs):
            logits = self.policy.sel_net.forward(sel_x)
            sel_lp = CategoricalHead.log_prob(logits, sel_choice)
            mu = self.policy.plc_net.forward(plc_x)
            plc_lp = self.policy.place_head.log_prob(mu, plc_q)
            new_lp = np.zeros(n_dec)
            np.add.at(new_lp, sel_owner, sel_lp)
            np.add.at(new_lp, plc_owner, plc_lp)
            ratio = np.exp(new_lp - old_lp)
            surr1 = ratio * adv
            surr2 = np.clip(ratio, 1 - self.cfg.clip_eps, 1 + self.cfg.clip_eps) * adv
            active = (surr1 <= surr2).astype(float)
            dl_dlp = -(adv * ratio * active) / n_dec

            dlogits = dl_dlp[sel_owner][:, None] * CategoricalHead.dlogp_dlogits(
                logits, sel_choice)
            dlogits -= (self.entropy_coef / len(sel_rows)) * \
                CategoricalHead.dentropy_dlogits(logits)
            self.policy.sel_net.zero_grads()
            self.policy.sel_net.backward(dlogits)
            self.sel_opt.step()

            dmu = dl_dlp[plc_owner][:, None] * (plc_q - mu) / var
            self.policy.plc_net.zero_grads()
            self.policy.plc_net.backward(dmu)
            self.plc_opt.step()
            ratios.append(float(np.mean(ratio)))

        return {"n": n_dec, "baseline": float(self.baseline),
                "mean_reward": batch_mean, "mean_ratio": float(np.mean(ratios))}


def export_layout(path, motion_id: int, layout: SceneLayout, policy: GeneratorPolicy,
                  tracking_score: float, success: bool, meta: dict | None = None) -> None:
    probs = policy.selection_distribution(motion_id, 0)
    doc = {
        "motion_id": int(motion_id),
        "objects": [
            {"object_id": int(idx), "tx": plc.tx, "yaw": plc.yaw,
             "probability": float(probs[idx]) if i == 0 else
             float(policy.selection_distribution(motion_id, i)[idx])}
            for i, (idx, plc) in enumerate(layout.items)
        ],
        "tracking_score": float(tracking_score),
        "success": bool(success),
    }
    if meta:
        doc.update(meta)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
