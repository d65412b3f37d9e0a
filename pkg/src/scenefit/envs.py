"""Motion-imitation environment: wires the simulator, character features,
reference tracks, scene layouts, and tracking rewards into an MDP."""

from __future__ import annotations

import numpy as np

from . import character as ch
from . import physics2d as ph
from .neural import EmbeddingTable
from .rewards import RewardWeights, tracking_reward

SCENE_EMBED_WIDTH = 128


class SceneEmbedder:
    """Fixed seeded projection of (object index, placement) pairs to one
    128-entry block per layout slot; empty slots embed to zeros."""

    def __init__(self, n_objects: int, n_slots: int, seed: int = 7120,
                 width: int = SCENE_EMBED_WIDTH):
        if width % 2 != 0:
            raise ValueError("embed width must be even")
        rng = np.random.default_rng(seed)
        self.n_slots = n_slots
        self.width = width
        half = width // 2
        self.obj_table = EmbeddingTable(max(1, n_objects), half, rng)
        self.placement_proj = rng.standard_normal((2, half)) / np.sqrt(half)

    @property
    def total_width(self) -> int:
        return self.width * self.n_slots

    def embed(self, layout_items) -> np.ndarray:
        out = np.zeros(self.total_width)
        half = self.width // 2
        for j, (obj_idx, placement) in enumerate(layout_items):
            if j >= self.n_slots:
                break
            base = j * self.width
            out[base:base + half] = self.obj_table.lookup(obj_idx)
            q = np.array([placement.tx, placement.yaw])
            out[base + half:base + self.width] = q @ self.placement_proj
        return out


class ImitationEnv:
    """One simulated character tracking one reference clip in one scene.

    Control runs at the clip frame rate with `substeps` physics steps per
    control step. Episodes start from a random reference frame and end at the
    clip end, on early termination, or on simulator divergence.
    """

    def __init__(self, model: ch.CharacterModel, track, object_set,
                 embedder: SceneEmbedder, seed: int = 0,
                 weights: RewardWeights | None = None, substeps: int = 4,
                 reset_noise: float = 0.0):
        self.model = model
        self.track = track
        self.object_set = object_set
        self.embedder = embedder
        self.weights = weights or RewardWeights()
        self.substeps = substeps
        self.reset_noise = reset_noise
        self.rng = np.random.default_rng(seed)
        self.world = ch.build_world(model)
        self.layout_items: list = []
        self.layout_key = -1
        self.scene_embedding = embedder.embed([])
        self.joint_lo = np.array([jt.limits[0] for jt in model.joints])
        self.joint_hi = np.array([jt.limits[1] for jt in model.joints])
        self.cursor = 0
        self.obs = None
        self._ep = None

    # -- scene -------------------------------------------------------------

    def set_layout(self, layout_items, layout_key: int = 0) -> None:
        """Replaces the scene objects; the running episode is restarted."""
        self.layout_items = list(layout_items)
        self.layout_key = layout_key
        ph.apply_layout(self.world, self.layout_items, self.object_set)
        self.scene_embedding = self.embedder.embed(self.layout_items)
        self.reset()

    def obstacle_ids(self) -> list[int]:
        return [o.obstacle_id for o in self.world.obstacles]

    # -- episode -----------------------------------------------------------

    def reset(self, frame: int | None = None) -> np.ndarray:
        t0 = ch.reset_from_reference(self.world, self.model, self.track, self.rng, frame)
        if self.reset_noise > 0.0:
            st = self.track.state(t0)
            nq = st.q + self.rng.normal(0.0, self.reset_noise, self.model.n_joints)
            nroot = (st.root_x, st.root_z,
                     st.root_th + self.rng.normal(0.0, 0.3 * self.reset_noise))
            nvel = (st.root_vx + self.rng.normal(0.0, 2.5 * self.reset_noise),
                    st.root_vz + self.rng.normal(0.0, 2.5 * self.reset_noise),
                    st.root_w)
            ch.set_world_state(self.world, self.model, nroot, nq, nvel, st.qd)
            ch.ground_clearance_fix(self.world)
        self.cursor = t0
        self._ep = {"rewards": [], "contacts": [], "start": t0, "max_key_err": 0.0,
                    "layout_key": self.layout_key}
        self.obs = self._observe()
        return self.obs

    def _observe(self) -> np.ndarray:
        t_ref = min(self.cursor + 1, self.track.n_frames - 1)
        return ch.observe(self.world, self.model, self.track.state(t_ref),
                          self.scene_embedding)

    def step(self, action):
        """Applies PD targets for one control step; auto-resets when done.

        Returns (obs, reward, done, info); on done, obs is already the reset
        observation and info['episode'] summarizes the finished episode.
        """
        t_next = min(self.cursor + 1, self.track.n_frames - 1)
        targets = np.clip(np.asarray(action, dtype=float), self.joint_lo, self.joint_hi)
        diverged = False
        try:
            events = self.world.step_pd(list(targets), substeps=self.substeps)
        except ph.SimulationDivergedError:
            events = []
            diverged = True

        ref = self.track.state(t_next)
        contact = ph.contact_flags(events, self.obstacle_ids())
        if diverged:
            reward = 0.0
            key_err = np.inf
            done = True
        else:
            sim = ch.get_state(self.world, self.model)
            breakdown = tracking_reward(sim, ref, self.weights)
            reward = breakdown.total
            key_err = float(np.linalg.norm(sim.keypos - ref.keypos, axis=1).max())
            terminated = ch.early_terminate(self.world, self.model, ref)
            done = terminated or t_next >= self.track.n_frames - 1
        self.cursor = t_next

        ep = self._ep
        ep["rewards"].append(reward)
        ep["contacts"].append(contact)
        ep["max_key_err"] = max(ep["max_key_err"], key_err)

        info = {"contact": contact, "ref_index": t_next, "key_err": key_err,
                "diverged": diverged, "layout_key": self.layout_key}
        if done:
            full = (ep["start"] == 0 and t_next >= self.track.n_frames - 1
                    and not diverged)
            info["episode"] = {
                "rewards": ep["rewards"], "contacts": ep["contacts"],
                "start": ep["start"], "length": len(ep["rewards"]),
                "max_key_err": ep["max_key_err"], "layout_key": ep["layout_key"],
                "mean_reward": float(np.mean(ep["rewards"])),
                "full_clip": full,
                "success": bool(ep["max_key_err"] < 0.3),
                "any_contact": bool(any(ep["contacts"])),
            }
            obs = self.reset()
        else:
            obs = self._observe()
        self.obs = obs
        return obs, reward, done, info


def make_env_pool(model, track, object_set, n_envs: int, seed: int,
                  n_slots: int = 1, weights=None, reset_noise: float = 0.0):
    embedder = SceneEmbedder(len(object_set), n_slots)
    seeds = np.random.SeedSequence(seed).spawn(n_envs)
    return [ImitationEnv(model, track, object_set, embedder,
                         seed=int(s.generate_state(1)[0]), weights=weights,
                         reset_noise=reset_noise)
            for s in seeds]


def bc_dataset(env: ImitationEnv, rng: np.random.Generator, size: int,
               pose_noise: float = 0.03, vel_noise: float = 0.1):
    """Supervised warm-start pairs: perturbed reference states and the next
    reference pose as the PD-target action."""
    model, track, world = env.model, env.track, env.world
    n = track.n_frames
    obs_rows = []
    act_rows = []
    for _ in range(size):
        t = int(rng.integers(0, n - 1))
        st = track.state(t)
        q = st.q + rng.normal(0.0, pose_noise, model.n_joints)
        qd = st.qd + rng.normal(0.0, vel_noise, model.n_joints)
        root = (st.root_x + rng.normal(0.0, pose_noise),
                st.root_z + rng.normal(0.0, pose_noise * 0.5),
                st.root_th + rng.normal(0.0, pose_noise))
        root_vel = (st.root_vx + rng.normal(0.0, vel_noise),
                    st.root_vz + rng.normal(0.0, vel_noise),
                    st.root_w + rng.normal(0.0, vel_noise))
        ch.set_world_state(world, model, root, q, root_vel, qd)
        ch.ground_clearance_fix(world)
        ref = track.state(min(t + 1, n - 1))
        obs_rows.append(ch.observe(world, model, ref, env.scene_embedding))
        act_rows.append(track.clip.frames[min(t + 1, n - 1)].joints)
    env.reset()
    return np.array(obs_rows), np.array(act_rows)
