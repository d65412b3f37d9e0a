"""Training loops and evaluation: imitator-only training against a fixed
oracle layout, joint imitator+generator optimization, checkpointing, and
artifact export."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import character as ch
from . import contact_labels as cl
from . import envs as ev
from . import motion as mo
from . import neural as nn
from . import objects as ob
from . import ppo as P
from . import rewards as rw
from . import scene_gen as sg
from .config import RunConfig, config_hash

log = logging.getLogger("scenefit")

TEACHER_GAINS = {"ankle_x": 0.5, "ankle_v": 0.3, "waist_th": 0.8,
                 "waist_w": 0.15, "knee_z": 1.5}


@dataclass
class RunReport:
    """Append-only per-iteration metrics plus final artifacts."""

    config_hash: str
    seed: int
    rows: list = field(default_factory=list)  # (iter, tracking, success, gen_return)
    final: dict = field(default_factory=dict)
    trajectory: list = field(default_factory=list)

    def add(self, iteration: int, tracking: float, success: float, gen_return: float):
        self.rows.append((int(iteration), float(tracking), float(success),
                          float(gen_return)))

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed,
                "rows": self.rows, "final": self.final, "trajectory": self.trajectory}

    @staticmethod
    def from_dict(doc: dict) -> "RunReport":
        rep = RunReport(doc["config_hash"], doc["seed"])
        rep.rows = [tuple(r) for r in doc["rows"]]
        rep.final = doc.get("final", {})
        rep.trajectory = doc.get("trajectory", [])
        return rep


@dataclass
class TrainState:
    model: object
    track: object
    catalog: object
    envs: list
    policy: P.GaussianPolicy
    critic: P.Critic
    policy_opt: nn.Adam
    critic_opt: nn.Adam
    fvn: cl.FrameValueNet
    queries: np.ndarray           # per-frame pose queries of the clip
    rngs: dict
    fvn_rows: list = field(default_factory=list)


def _load_assets(cfg: RunConfig):
    cfg.validate_paths()
    model = ch.CharacterModel.load(cfg.character_model)
    clip = mo.load_clip(cfg.clip)
    track = mo.ReferenceTrack(model, clip)
    catalog = ob.load_catalog(cfg.catalog)
    return model, track, catalog


def _teacher_action(track, model, world, t_next):
    """Reference pose plus linear balance feedback; the BC warm-start target."""
    g = TEACHER_GAINS
    ref = track.state(t_next)
    sim = ch.get_state(world, model)
    dx = sim.root_x - ref.root_x
    dv = sim.root_vx - ref.root_vx
    dth = sim.root_th - ref.root_th
    dw = sim.root_w - ref.root_w
    dz = sim.root_z - ref.root_z
    tgt = track.clip.frames[t_next].joints.copy()
    ankle = -(g["ankle_x"] * dx + g["ankle_v"] * dv)
    tgt[[3, 6]] += min(0.6, max(-0.6, ankle))
    knee = -g["knee_z"] * dz
    tgt[[2, 5]] += min(0.5, max(-0.5, knee))
    waist = -(g["waist_th"] * dth + g["waist_w"] * dw)
    tgt[0] += min(0.6, max(-0.6, waist))
    return tgt


def _bc_warm_start(state: TrainState, cfg: RunConfig) -> None:
    if cfg.bc_steps <= 0:
        return
    rng = state.rngs["bc"]
    env = state.envs[0]
    model, track = state.model, state.track
    obs_rows, act_rows = [], []
    for _ in range(cfg.bc_episodes):
        obs = env.reset()
        done = False
        while not done:
            t_next = min(env.cursor + 1, track.n_frames - 1)
            a = _teacher_action(track, model, env.world, t_next)
            obs_rows.append(obs.copy())
            act_rows.append(a)
            obs, _, done, _ = env.step(a + rng.normal(0.0, 0.02, model.n_joints))
    ref_obs, ref_act = ev.bc_dataset(env, rng, max(256, cfg.bc_episodes * 50))
    x = np.concatenate([np.array(obs_rows), ref_obs])
    y = np.concatenate([np.array(act_rows), ref_act])
    opt = nn.Adam(state.policy.mlp, 1e-3)
    loss = 0.0
    for _ in range(cfg.bc_steps):
        idx = rng.integers(0, len(x), 256)
        mu = state.policy.mlp.forward(x[idx])
        err = mu - y[idx]
        loss = float((err ** 2).mean())
        state.policy.mlp.zero_grads()
        state.policy.mlp.backward(2.0 * err / err.size)
        opt.step()
    env.reset()
    log.info("behavior-cloning warm start done (%d rows, final loss %.2e)", len(x), loss)


def _setup(cfg: RunConfig) -> TrainState:
    model, track, catalog = _load_assets(cfg)
    seeds = np.random.SeedSequence(cfg.seed)
    streams = seeds.spawn(6)
    rngs = {
        "init": np.random.default_rng(streams[0]),
        "collect": np.random.default_rng(streams[1]),
        "update": np.random.default_rng(streams[2]),
        "bc": np.random.default_rng(streams[3]),
        "gen": np.random.default_rng(streams[4]),
        "eval": np.random.default_rng(streams[5]),
    }
    envs = ev.make_env_pool(model, track, catalog, cfg.n_envs, cfg.seed,
                            n_slots=max(cfg.slots, 1), reset_noise=cfg.reset_noise)
    for env in envs:
        env.set_layout([], layout_key=-1)
    obs_dim = envs[0].obs.shape[0]
    hidden = cfg.hidden_sizes()
    policy = P.GaussianPolicy(obs_dim, model.n_joints, hidden, cfg.policy_std,
                              rngs["init"])
    critic = P.Critic(obs_dim, hidden, rngs["init"])
    fvn = cl.FrameValueNet(cl.pose_query_dim(model), rngs["init"], lr=cfg.fvn_lr)
    queries = cl.pose_query_matrix(track)
    return TrainState(
        model=model, track=track, catalog=catalog, envs=envs,
        policy=policy, critic=critic,
        policy_opt=nn.Adam(policy.mlp, cfg.lr_policy),
        critic_opt=nn.Adam(critic.mlp, cfg.lr_critic),
        fvn=fvn, queries=queries, rngs=rngs,
    )


def _append_fvn_rows(state: TrainState, buf: P.RolloutBuffer, cap: int = 60000):
    rows = state.fvn_rows
    q = state.queries
    for i in range(len(buf)):
        rows.append((buf.ref_index[i], buf.contacts[i], buf.rewards[i],
                     buf.next_values[i]))
    if len(rows) > cap:
        del rows[:len(rows) - cap]


def _fvn_pass(state: TrainState, cfg: RunConfig) -> float:
    rows = state.fvn_rows
    if not rows:
        return 0.0
    rng = state.rngs["update"]
    idx_all = np.arange(len(rows))
    loss = 0.0
    for _ in range(cfg.fvn_steps):
        idx = rng.choice(idx_all, size=min(256, len(rows)), replace=True)
        qs = np.stack([state.queries[rows[i][0]] for i in idx])
        cs = np.array([rows[i][1] for i in idx], dtype=float)
        rs = np.array([rows[i][2] for i in idx], dtype=float)
        nv = np.array([rows[i][3] for i in idx], dtype=float)
        loss = cl.train_frame_value(state.fvn, qs, cs, rs, nv, cfg.gamma)
    return loss


def _episode_stats(episodes):
    if not episodes:
        return None, None
    scores = [e["mean_reward"] for e in episodes]
    succ = [1.0 if e["success"] else 0.0 for e in episodes]
    return float(np.mean(scores)), float(np.mean(succ))


def evaluate_policy(state: TrainState, cfg: RunConfig, layout_items,
                    n_episodes: int, record_trajectory: bool = False):
    """Deterministic-mean policy episodes from frame 0 with small seeded
    reset noise; returns (tracking score, success rate, trajectory records)."""
    env = ev.ImitationEnv(state.model, state.track, state.catalog,
                          state.envs[0].embedder,
                          seed=int(state.rngs["eval"].integers(2 ** 31)),
                          reset_noise=cfg.eval_reset_noise)
    env.set_layout(layout_items, layout_key=0)
    scores, succs = [], []
    trajectory = []
    for k in range(n_episodes):
        obs = env.reset(frame=0)
        done = False
        info = {}
        while not done:
            a = state.policy.mean(obs[None, :])[0]
            obs, _, done, info = env.step(a)
            if record_trajectory:
                sim = ch.get_state(env.world, state.model)
                trajectory.append({
                    "episode": k, "frame": info["ref_index"],
                    "root": [sim.root_x, sim.root_z, sim.root_th],
                    "joints": [float(v) for v in sim.q],
                    "contact": info["contact"],
                })
        epi = info["episode"]
        scores.append(epi["mean_reward"])
        succs.append(1.0 if epi["success"] else 0.0)
    return float(np.mean(scores)), float(np.mean(succs)), trajectory


def _save_checkpoints(state: TrainState, out: Path, generator=None, meta=None):
    tensors = {}
    tensors.update(state.policy.tensors())
    tensors.update(state.critic.tensors())
    tensors.update(state.fvn.tensors())
    if generator is not None:
        tensors.update(generator.tensors())
    nn.save_checkpoint(out / "checkpoint.json", tensors, meta or {})


def _label_artifacts(state: TrainState, cfg: RunConfig, out: Path):
    labels = cl.pseudo_labels(state.fvn, state.track)
    prior = cl.cluster_pose_priors(labels, state.track, cfg.cluster_threshold)
    cl.export_labels(out / "labels.json", state.track.clip_id, labels, prior)
    metrics = {"count": prior.count}
    gt = state.track.clip.contacts_gt
    if gt is not None:
        metrics["iou"] = cl.labels_iou(labels, gt)
    return labels, prior, metrics


def train_imitator(cfg: RunConfig) -> RunReport:
    """Motion-imitation training against the configured oracle layout; also
    trains the frame-value net on the rollout stream."""
    state = _setup(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracle = [(cfg.oracle_object, sg.Placement(tx=cfg.oracle_tx, yaw=0.0))]
    for env in state.envs:
        env.set_layout(oracle, layout_key=0)
    _bc_warm_start(state, cfg)

    report = RunReport(config_hash(cfg), cfg.seed)
    ppo_cfg = P.PpoConfig(gamma=cfg.gamma, lam=cfg.lam, clip_eps=cfg.clip_eps,
                          epochs=cfg.epochs, minibatch=cfg.minibatch,
                          lr_policy=cfg.lr_policy, lr_critic=cfg.lr_critic)
    last_score, last_succ = 0.0, 0.0
    for it in range(cfg.iterations):
        buf = P.collect_rollouts(state.envs, state.policy, state.critic,
                                 cfg.steps_per_env, state.rngs["collect"])
        P.compute_gae(buf, cfg.gamma, cfg.lam)
        _append_fvn_rows(state, buf)
        P.ppo_update(state.policy, state.critic, state.policy_opt,
                     state.critic_opt, buf, ppo_cfg, state.rngs["update"])
        score, succ = _episode_stats(buf.episodes)
        if score is not None:
            last_score, last_succ = score, succ
        report.add(it, last_score, last_succ, 0.0)
        if (it + 1) % cfg.fvn_every == 0:
            loss = _fvn_pass(state, cfg)
            log.info("iter %d: frame-value pass loss %.4f", it, loss)

    if cfg.iterations % cfg.fvn_every != 0 or cfg.iterations == 0:
        _fvn_pass(state, cfg)
    score, succ, traj = evaluate_policy(state, cfg, oracle, cfg.eval_episodes,
                                        record_trajectory=True)
    labels, prior, label_metrics = _label_artifacts(state, cfg, out)
    report.final = {
        "mode": "imitator", "tracking_score": score, "success_rate": succ,
        "labels": label_metrics, "oracle_tx": cfg.oracle_tx,
        "oracle_object": cfg.oracle_object,
    }
    report.trajectory = traj
    _save_checkpoints(state, out, meta={"config_hash": report.config_hash,
                                        "seed": cfg.seed, "mode": "imitator"})
    (out / "report.json").write_text(json.dumps(report.to_dict()))
    export_artifacts(out)
    log.info("train-imitator done: score %.3f success %.2f", score, succ)
    return report


def train_joint(cfg: RunConfig) -> RunReport:
    """Dual optimization: the layout generator proposes scenes on a fixed
    cadence while the imitator learns to track inside them."""
    state = _setup(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _bc_warm_start_with_oracle(state, cfg)

    generator = sg.GeneratorPolicy(len(state.catalog), n_motions=cfg.n_motions,
                                   max_slots=max(cfg.slots, 1),
                                   hidden=cfg.gen_hidden_sizes(),
                                   place_std=(cfg.place_std, cfg.place_std),
                                   seed=cfg.seed)
    prior_cfg = rw.PriorConfig(alpha=cfg.alpha if cfg.pose_prior else 0.0)
    updater = sg.GeneratorUpdater(
        generator,
        P.PpoConfig(gamma=cfg.gamma, lam=cfg.lam, clip_eps=cfg.clip_eps,
                    epochs=cfg.gen_epochs, minibatch=max(cfg.n_envs, 8)),
        prior_cfg, lr=cfg.gen_lr, entropy_coef=cfg.gen_entropy)

    ppo_cfg = P.PpoConfig(gamma=cfg.gamma, lam=cfg.lam, clip_eps=cfg.clip_eps,
                          epochs=cfg.epochs, minibatch=cfg.minibatch,
                          lr_policy=cfg.lr_policy, lr_critic=cfg.lr_critic)
    report = RunReport(config_hash(cfg), cfg.seed)

    window_iters = max(1, cfg.gen_window // cfg.steps_per_env)
    n_slots = max(1, cfg.slots)
    layouts: dict[int, sg.SceneLayout] = {}
    window_episodes: dict[int, list] = {}
    layout_counter = 0
    gen_stats = {"mean_reward": 0.0}
    last_score, last_succ = 0.0, 0.0

    def resample_layouts():
        nonlocal layout_counter
        for env in state.envs:
            layout = generator.sample_layout(cfg.motion_index, n_slots,
                                             state.rngs["gen"])
            layouts[layout_counter] = layout
            window_episodes[layout_counter] = []
            env.set_layout(layout.items, layout_key=layout_counter)
            layout_counter += 1

    def close_window():
        decisions = []
        for key, eps in window_episodes.items():
            if key not in layouts:
                continue
            layout = layouts[key]
            if eps:
                gated = [rw.gated_return(e["rewards"],
                                         e["contacts"] if cfg.contact_gate
                                         else [1] * len(e["contacts"]),
                                         cfg.gamma)
                         for e in eps]
                base = float(np.mean(gated))
            else:
                base = 0.0
            placements = [(plc.tx, plc.yaw) for (_, plc) in layout.items]
            reward = rw.generator_reward(base, placements, updater.prior)
            decisions.append(sg.LayoutDecision(cfg.motion_index, layout, reward))
        window_episodes.clear()
        layouts.clear()
        return updater.update(decisions)

    for it in range(cfg.iterations):
        if it % window_iters == 0:
            if it > 0:
                gen_stats = close_window()
            resample_layouts()
        buf = P.collect_rollouts(state.envs, state.policy, state.critic,
                                 cfg.steps_per_env, state.rngs["collect"])
        P.compute_gae(buf, cfg.gamma, cfg.lam)
        _append_fvn_rows(state, buf)
        P.ppo_update(state.policy, state.critic, state.policy_opt,
                     state.critic_opt, buf, ppo_cfg, state.rngs["update"])
        for e in buf.episodes:
            window_episodes.setdefault(e["layout_key"], []).append(e)
        score, succ = _episode_stats(buf.episodes)
        if score is not None:
            last_score, last_succ = score, succ
        report.add(it, last_score, last_succ, gen_stats.get("mean_reward", 0.0))
        if (it + 1) % cfg.fvn_every == 0:
            loss = _fvn_pass(state, cfg)
            labels = cl.pseudo_labels(state.fvn, state.track)
            prior = cl.cluster_pose_priors(labels, state.track, cfg.cluster_threshold)
            if cfg.pose_prior and prior.count > 0:
                updater.prior.centers = prior.centers
            if cfg.slots_from_priors and prior.count > 0:
                n_slots = min(prior.count, generator.max_slots)
            log.info("iter %d: fvn loss %.4f, clusters %d", it, loss, prior.count)
    close_window()

    # final artifacts: labels, eval of the generator's mean layout + samples
    labels, prior, label_metrics = _label_artifacts(state, cfg, out)
    mean_layout = generator.mean_layout(cfg.motion_index, n_slots)
    score, succ, traj = evaluate_policy(state, cfg, mean_layout.items,
                                        cfg.eval_episodes, record_trajectory=True)
    sample_metrics = []
    for _ in range(cfg.eval_layout_samples):
        lay = generator.sample_layout(cfg.motion_index, n_slots, state.rngs["eval"])
        s, sr, _ = evaluate_policy(state, cfg, lay.items,
                                   max(2, cfg.eval_episodes // 2))
        sample_metrics.append({
            "items": [[int(i), plc.tx, plc.yaw] for i, plc in lay.items],
            "tracking_score": s, "success_rate": sr,
        })
    sel = generator.selection_distribution(cfg.motion_index, 0)
    report.final = {
        "mode": "joint", "tracking_score": score, "success_rate": succ,
        "labels": label_metrics,
        "layout": [[int(i), plc.tx, plc.yaw] for i, plc in mean_layout.items],
        "selection_distribution": [float(v) for v in sel],
        "selection_argmax": int(np.argmax(sel)),
        "layout_samples": sample_metrics,
        "slots": n_slots,
        "prior_centers": [[c[0], c[1]] for c in updater.prior.centers],
    }
    report.trajectory = traj
    sg.export_layout(out / "layout.json", cfg.motion_index, mean_layout, generator,
                     score, succ >= 0.5,
                     meta={"config_hash": report.config_hash, "seed": cfg.seed})
    _save_checkpoints(state, out, generator,
                      meta={"config_hash": report.config_hash, "seed": cfg.seed,
                            "mode": "joint"})
    (out / "report.json").write_text(json.dumps(report.to_dict()))
    export_artifacts(out)
    log.info("train-joint done: score %.3f success %.2f layout %s", score, succ,
             report.final["layout"])
    return report


def _bc_warm_start_with_oracle(state: TrainState, cfg: RunConfig) -> None:
    """Joint training warms the imitator up under the oracle layout so the
    generator optimizes against a competent tracker."""
    if cfg.bc_steps <= 0:
        return
    oracle = [(cfg.oracle_object, sg.Placement(tx=cfg.oracle_tx, yaw=0.0))]
    state.envs[0].set_layout(oracle, layout_key=0)
    _bc_warm_start(state, cfg)
    state.envs[0].set_layout([], layout_key=-1)


def load_run_policy(cfg: RunConfig, run_dir):
    """Rebuilds nets from a run checkpoint; raises ShapeMismatchError on
    incompatible shapes."""
    state = _setup(cfg)
    tensors, meta = nn.load_checkpoint(Path(run_dir) / "checkpoint.json")
    state.policy.load_tensors(tensors)
    state.critic.load_tensors(tensors)
    state.fvn.load_tensors(tensors)
    generator = None
    if any(k.startswith("generator.") for k in tensors):
        generator = sg.GeneratorPolicy(len(state.catalog), n_motions=cfg.n_motions,
                                       max_slots=max(cfg.slots, 1),
                                       hidden=cfg.gen_hidden_sizes(),
                                       place_std=(cfg.place_std, cfg.place_std),
                                       seed=cfg.seed)
        generator.load_tensors(tensors)
    return state, generator, meta


def evaluate_run(cfg: RunConfig, run_dir) -> dict:
    """Evaluation entry point: deterministic policy means, stochastic layout
    samples for joint checkpoints."""
    state, generator, meta = load_run_policy(cfg, run_dir)
    results = {"config_hash": config_hash(cfg), "seed": cfg.seed}
    if generator is None:
        oracle = [(cfg.oracle_object, sg.Placement(tx=cfg.oracle_tx, yaw=0.0))]
        score, succ, _ = evaluate_policy(state, cfg, oracle, cfg.eval_episodes)
        results.update({"tracking_score": score, "success_rate": succ,
                        "layout": [[cfg.oracle_object, cfg.oracle_tx, 0.0]]})
    else:
        n_slots = max(1, cfg.slots)
        mean_layout = generator.mean_layout(cfg.motion_index, n_slots)
        score, succ, _ = evaluate_policy(state, cfg, mean_layout.items,
                                         cfg.eval_episodes)
        sel = generator.selection_distribution(cfg.motion_index, 0)
        results.update({
            "tracking_score": score, "success_rate": succ,
            "layout": [[int(i), plc.tx, plc.yaw] for i, plc in mean_layout.items],
            "selection_distribution": [float(v) for v in sel],
        })
    return results


def label_contacts_run(cfg: RunConfig, run_dir, clip_path=None) -> dict:
    """Loads a trained frame-value net and labels a clip (the run's clip by
    default); exports labels.json next to the checkpoint."""
    if clip_path is not None:
        cfg.clip = str(clip_path)
    state, _, _ = load_run_policy(cfg, run_dir)
    out = Path(run_dir)
    labels, prior, metrics = _label_artifacts(state, cfg, out)
    doc = {"clip_id": state.track.clip_id, "L": prior.count,
           "priors": [[c[0], c[1]] for c in prior.centers]}
    doc.update(metrics)
    return doc


# -- export ---------------------------------------------------------------


def export_artifacts(run_dir) -> list[str]:
    """Rewrites curves.csv, layout.json (if the run has one), and
    trajectory.jsonl from report.json; byte-stable for repeated calls."""
    out = Path(run_dir)
    doc = json.loads((out / "report.json").read_text())
    rep = RunReport.from_dict(doc)
    written = []

    csv_path = out / "curves.csv"
    lines = [f"# config_hash={rep.config_hash} seed={rep.seed}",
             "iter,tracking_score,success_rate,generator_return"]
    for (it, tr, su, gr) in rep.rows:
        lines.append(f"{it},{tr:.6f},{su:.6f},{gr:.6f}")
    csv_path.write_text("\n".join(lines) + "\n")
    written.append(str(csv_path))

    traj_path = out / "trajectory.jsonl"
    with open(traj_path, "w") as f:
        f.write(json.dumps({"config_hash": rep.config_hash, "seed": rep.seed}) + "\n")
        for rec in rep.trajectory:
            f.write(json.dumps(rec) + "\n")
    written.append(str(traj_path))

    if "layout" in rep.final:
        lay_path = out / "layout_final.json"
        lay_path.write_text(json.dumps({
            "config_hash": rep.config_hash, "seed": rep.seed,
            "motion_id": doc.get("motion_id", 0),
            "objects": rep.final["layout"],
            "tracking_score": rep.final.get("tracking_score"),
            "success_rate": rep.final.get("success_rate"),
            "selection_distribution": rep.final.get("selection_distribution"),
        }, indent=1))
        written.append(str(lay_path))
    return written


def smoothed(series, window: int = 25) -> np.ndarray:
    arr = np.asarray(series, dtype=float)
    if len(arr) == 0:
        return arr
    w = max(1, min(window, len(arr)))
    kernel = np.ones(w) / w
    return np.convolve(arr, kernel, mode="valid")


def curve_auc(rows) -> float:
    """Area under the tracking-score learning curve (mean score)."""
    scores = [r[1] for r in rows]
    return float(np.mean(scores)) if scores else 0.0
