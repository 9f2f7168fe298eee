"""Command-line harness: reproducible experiments over all subsystems.

Every subcommand is deterministic for a fixed seed: outputs carry no
timestamps, CSVs use RFC-4180 quoting with LF line endings, and manifests
record the config hash plus content hashes of the inputs, enough to re-run
a job exactly. Log level comes from the MOSAIC_LOG environment variable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys

import click
import numpy as np

from . import fld as fld_mod
from . import motions, quat
from .curriculum import SamplerConfig, SamplerState, sample_motion_ids, sample_start_time
from .errors import ConfigError, MissingArtifacts, MosaicError
from .motion_bank import MotionClip, ingest_clip, load_bank_dir, write_clip
from .policy.obs import ObservationBuilder, ObservationSpec
from .policy.ppo import ActorCritic, PPOConfig, train
from .policy.nets import load_policy, save_policy
from .rewards import FrameState, compute_rewards, default_reward_spec, spec_from_toml
from .robot import default_model
from .sim_env import Metrics, OraclePolicy, TrackingEnv, evaluate
from .teleop import ChannelConfig, ReferenceAssembler, SmootherState, measure_delay, transmit

log = logging.getLogger("mosaic")


def _setup_logging():
    level = os.environ.get("MOSAIC_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _csv_field(v) -> str:
    s = format(v, ".9g") if isinstance(v, float) else str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header: list[str], rows) -> None:
    """RFC-4180 quoting, LF line endings."""
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_csv_field(v) for v in row) + "\n")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config: dict, inputs: list[str]) -> None:
    manifest = {
        "config": config,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "inputs": {os.path.basename(p): _sha256_file(p) for p in sorted(inputs)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


@click.group()
@click.option("--threads", default=1, show_default=True,
              help="Max worker parallelism hint; all reductions stay ordered.")
def main(threads):
    """Desk-scale motion tracking and teleoperation harness."""
    _setup_logging()
    os.environ.setdefault("OMP_NUM_THREADS", str(threads))


# ---------------------------------------------------------------------------
# Bank management
# ---------------------------------------------------------------------------

@main.command()
@click.argument("src", type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
def ingest(src, out):
    """Validate every .mbank clip in SRC and write a canonical bank to --out."""
    os.makedirs(out, exist_ok=True)
    files = sorted(f for f in os.listdir(src) if f.endswith(".mbank"))
    if not files:
        raise click.ClickException(f"no .mbank files in {src}")
    summary = []
    for name in files:
        clip = ingest_clip(os.path.join(src, name))
        write_clip(os.path.join(out, name), clip)
        summary.append({"file": name, "frames": clip.length, "fps": clip.fps,
                        "label": clip.label, "source_id": clip.source_id})
        click.echo(f"ok {name}: {clip.length} frames @ {clip.fps:g} Hz")
    with open(os.path.join(out, "bank.json"), "w") as f:
        json.dump({"clips": summary}, f, indent=2, sort_keys=True)
        f.write("\n")


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def validate(file):
    """Check one .mbank file against the container invariants."""
    try:
        clip = ingest_clip(file)
    except MosaicError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"ok: {clip.length} frames, {clip.dof} dof, {clip.bodies} bodies, "
               f"{clip.fps:g} Hz")


@main.command("demo-bank")
@click.option("--out", required=True, type=click.Path())
def demo_bank(out):
    """Write the deterministic three-clip demo bank (squat / wave / walk)."""
    paths = motions.write_demo_bank(out)
    for p in paths:
        click.echo(f"wrote {p}")


# ---------------------------------------------------------------------------
# Curriculum diagnostics
# ---------------------------------------------------------------------------

@main.command("sample-stats")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--draws", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--step", default=0, show_default=True,
              help="Schedule position for the mixture weights.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Sampler config as a TOML or JSON block.")
@click.option("--out", type=click.Path(), default=None)
def sample_stats(bank_dir, draws, seed, step, config_path, out):
    """Empirical vs analytic motion-sampling probabilities as CSV."""
    bank, _ = load_bank_dir(bank_dir)
    cfg = SamplerConfig()
    if config_path:
        if config_path.endswith(".json"):
            with open(config_path) as f:
                data = json.load(f)
        else:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(config_path, "rb") as f:
                data = tomllib.load(f)
        try:
            cfg = SamplerConfig.from_dict(data)
        except ValueError as exc:
            raise click.ClickException(str(ConfigError(str(exc))))
    state = SamplerState(bank.lengths, cfg)
    state.step = step
    rng = np.random.default_rng(seed)
    from .curriculum import motion_probabilities

    p = motion_probabilities(state)
    ids = sample_motion_ids(state, draws, rng)
    emp = np.bincount(ids, minlength=bank.motion_count) / draws
    rows = [(m, p[m], emp[m]) for m in range(bank.motion_count)]
    if out:
        write_csv(out, ["motion", "analytic", "empirical"], rows)
    for m, a, e in rows:
        click.echo(f"motion {m}: analytic {a:.6f} empirical {e:.6f}")


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def _frame_state_from_dict(d: dict) -> FrameState:
    return FrameState(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


@main.command("reward-eval")
@click.option("--pair", required=True, type=click.Path(exists=True),
              help="JSON file with 'robot' and 'ref' state dicts.")
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None)
def reward_eval(pair, spec_path):
    """Print the weighted reward breakdown for one state pair."""
    with open(pair) as f:
        blob = json.load(f)
    spec = default_reward_spec()
    if spec_path:
        with open(spec_path) as f:
            spec = spec_from_toml(f.read())
    bd = compute_rewards(_frame_state_from_dict(blob["robot"]),
                         _frame_state_from_dict(blob["ref"]), spec)
    weights = {t.name: t.weight for t in spec}
    for name, value in bd.terms.items():
        v = float(np.squeeze(value))
        click.echo(f"{name},{v:.9g},{weights[name] * v:.9g}")
    click.echo(f"total,,{float(np.squeeze(bd.total)):.9g}")


# ---------------------------------------------------------------------------
# Training / evaluation
# ---------------------------------------------------------------------------

def _load_ppo_cfg(path) -> PPOConfig:
    if path is None:
        return PPOConfig()
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        data = tomllib.load(f)
    known = {f.name for f in PPOConfig.__dataclass_fields__.values()}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown ppo config key(s): {sorted(bad)}")
    for key in ("actor_hidden", "critic_hidden"):
        if key in data:
            data[key] = tuple(data[key])
    return PPOConfig(**data).validate()


@main.command("train")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--cfg", "cfg_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--steps", default=200_000, show_default=True)
@click.option("--envs", default=128, show_default=True)
def train_cmd(bank_dir, cfg_path, out, seed, steps, envs):
    """PPO training on a motion bank; writes policy, critic, curves, manifest."""
    os.makedirs(out, exist_ok=True)
    bank, files = load_bank_dir(bank_dir)
    model = default_model()
    cfg = _load_ppo_cfg(cfg_path)
    spec = ObservationSpec(model.dof, model.num_bodies)
    ac = ActorCritic(spec.actor_dim, spec.critic_dim, model.dof, cfg,
                     np.random.default_rng(seed))
    env = TrackingEnv(bank, envs, model, seed=seed, auto_reset=True)
    sampler = SamplerState(bank.lengths, SamplerConfig())
    srng = np.random.default_rng(seed + 1)
    first = np.arange(envs) % bank.motion_count
    frames0 = np.array([sample_start_time(sampler, int(m), srng) for m in first])
    env.reset(first, frames0)
    rows = []
    train(env, ac, total_env_steps=steps, seed=seed + 2, sampler=sampler, log=rows)
    save_policy(os.path.join(out, "policy.ckpt"), ac.actor, spec.spec_hash(),
                meta={"kind": "actor", "seed": seed})
    save_policy(os.path.join(out, "critic.ckpt"), ac.critic, spec.spec_hash(),
                meta={"kind": "critic", "seed": seed})
    write_csv(os.path.join(out, "reward_curve.csv"),
              ["update", "env_steps", "mean_reward", "kl", "lr"],
              [(r["update"], r["env_steps"], r["mean_reward"], r["kl"], r["lr"])
               for r in rows])
    stats = [(m, int(sampler.sample_counts[m]), int(sampler.fail_counts[m]),
              int(sampler.assign_counts[m])) for m in range(bank.motion_count)]
    write_csv(os.path.join(out, "sampler_stats.csv"),
              ["motion", "samples", "failures", "assignments"], stats)
    write_manifest(out, {"cmd": "train", "seed": seed, "steps": steps,
                         "envs": envs}, files)
    click.echo(f"trained {steps} env steps; final mean reward "
               f"{rows[-1]['mean_reward']:.3f}")


def _load_policy_argument(policy_arg, model):
    if policy_arg == "oracle":
        return OraclePolicy(), None
    if policy_arg == "zero":
        return None, None
    net, header = load_policy(policy_arg)
    return net.forward, header


@main.command("eval")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_arg", required=True,
              help="Checkpoint path, or 'oracle' / 'zero'.")
@click.option("--episodes", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--latency", default=0.0, show_default=True,
              help="Observed-reference channel latency (s).")
@click.option("--jitter", default=0.0, show_default=True)
@click.option("--drop", default=0.0, show_default=True)
def eval_cmd(bank_dir, policy_arg, episodes, seed, out, latency, jitter, drop):
    """Roll episodes and report the tracking metrics."""
    bank, files = load_bank_dir(bank_dir)
    model = default_model()
    policy, _ = _load_policy_argument(policy_arg, model)
    obs_stream = None
    if latency > 0 or jitter > 0 or drop > 0:
        from .teleop import stream_bank_references

        obs_stream = stream_bank_references(
            bank, ChannelConfig(latency, jitter, drop), seed=seed + 5
        )
    builder = None
    if policy is not None and not isinstance(policy, OraclePolicy):
        builder = ObservationBuilder(model, 1, noise=False)
    metrics = evaluate(policy, bank, episodes=episodes, model=model, seed=seed,
                       obs_stream=obs_stream, obs_builder=builder)
    click.echo(Metrics.CSV_HEADER)
    click.echo(metrics.csv_row())
    if out:
        with open(out, "w", newline="") as f:
            f.write(Metrics.CSV_HEADER + "\n" + metrics.csv_row() + "\n")


@main.command("adapt")
@click.option("--strategy", type=click.Choice(["finetune", "continual", "residual"]),
              required=True)
@click.option("--base", "base_path", required=True, type=click.Path(exists=True))
@click.option("--adapt-data", required=True, type=click.Path(exists=True))
@click.option("--general-data", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--rl-steps", default=150_000, show_default=True)
@click.option("--distill-steps", default=200, show_default=True)
@click.option("--latency", default=0.4, show_default=True,
              help="Interface latency of the adaptation stream (s).")
@click.option("--jitter", default=0.0, show_default=True)
@click.option("--noise", default=0.0, show_default=True,
              help="Stream payload noise before smoothing (rad).")
def adapt_cmd(strategy, base_path, adapt_data, general_data, out, seed, rl_steps,
              distill_steps, latency, jitter, noise):
    """Adapt a trained base policy to a shifted teleoperation interface."""
    from .policy.distill import AdaptBudgets, DataRegime, adapt_strategy
    from .teleop import stream_bank_references

    os.makedirs(out, exist_ok=True)
    model = default_model()
    spec = ObservationSpec(model.dof, model.num_bodies)
    actor, header = load_policy(base_path)
    critic_path = os.path.join(os.path.dirname(base_path), "critic.ckpt")
    base = ActorCritic(spec.actor_dim, spec.critic_dim, model.dof,
                       PPOConfig(), np.random.default_rng(seed))
    base.actor = actor
    if os.path.exists(critic_path):
        base.critic, _ = load_policy(critic_path)

    adapt_bank, a_files = load_bank_dir(adapt_data)
    a_clips = [ingest_clip(f) for f in a_files]
    stream = stream_bank_references(
        adapt_bank, ChannelConfig(latency, jitter), noise_std=noise, seed=seed + 5
    )
    adapt_regime = DataRegime(adapt_bank, stream, a_clips)
    general_regime = None
    g_files = []
    if general_data:
        general_bank, g_files = load_bank_dir(general_data)
        general_regime = DataRegime(general_bank, None,
                                    [ingest_clip(f) for f in g_files])
    budgets = AdaptBudgets(rl_env_steps=rl_steps, distill_steps=distill_steps)
    result = adapt_strategy(strategy, base, adapt_regime, general_regime,
                            budgets, seed=seed)
    if result.ac is not None:
        save_policy(os.path.join(out, "policy.ckpt"), result.ac.actor,
                    spec.spec_hash(), meta={"kind": "actor", "strategy": strategy})
    if result.residual is not None:
        # the deployable policy is the frozen base plus the residual head
        save_policy(os.path.join(out, "residual.ckpt"), result.residual,
                    spec.spec_hash(), meta={"kind": "residual"})
        save_policy(os.path.join(out, "policy.ckpt"), base.actor, spec.spec_hash(),
                    meta={"kind": "actor", "strategy": strategy,
                          "compose_with": "residual.ckpt"})
    write_manifest(out, {"cmd": "adapt", "strategy": strategy, "seed": seed,
                         "rl_steps": rl_steps, "distill_steps": distill_steps,
                         "latency": latency, "jitter": jitter, "noise": noise},
                   list(a_files) + list(g_files) + [base_path])
    click.echo(f"adapted with strategy {strategy}")


# ---------------------------------------------------------------------------
# Teleoperation stream simulation
# ---------------------------------------------------------------------------

@main.command("stream-sim")
@click.option("--clip", "clip_path", required=True, type=click.Path(exists=True))
@click.option("--latency", default=0.4, show_default=True)
@click.option("--jitter", default=0.02, show_default=True)
@click.option("--drop", default=0.01, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--alpha", default=0.3, show_default=True, help="EMA smoothing factor.")
@click.option("--out", type=click.Path(), default=None,
              help="Write the delayed/smoothed reference clip here.")
@click.option("--stats", "stats_path", type=click.Path(), default=None)
@click.option("--packets", "packets_path", type=click.Path(), default=None,
              help="JSON-lines packet log {seq, t_sent, t_recv}.")
def stream_sim(clip_path, latency, jitter, drop, seed, alpha, out, stats_path,
               packets_path):
    """Push one clip through the latency/jitter/drop channel."""
    clip = ingest_clip(clip_path)
    dt = 1.0 / clip.fps
    rng = np.random.default_rng(seed)
    frames = [(k * dt, clip.joint_pos[k].astype(np.float64),
               clip.body_quat_w[k, 0].astype(np.float64))
              for k in range(clip.length)]
    cfg = ChannelConfig(latency, jitter, drop).validate()
    pkts = transmit(frames, cfg, rng)
    stats = measure_delay({i: t for i, (t, _, _) in enumerate(frames)}, pkts)
    click.echo(f"delivered {len(pkts)}/{clip.length} packets; "
               f"mean delay {stats.mean:.4f} s, p95 {stats.p95:.4f} s")
    if stats_path:
        write_csv(stats_path, ["mean", "std", "p95", "count"],
                  [(stats.mean, stats.std, stats.p95, stats.count)])
    if packets_path:
        with open(packets_path, "w") as f:
            for p in pkts:
                f.write(json.dumps({"seq": p.seq, "t_sent": round(p.t_sent, 9),
                                    "t_recv": round(p.t_recv, 9)}) + "\n")
    if out:
        asm = ReferenceAssembler(pkts, SmootherState(ema_alpha=alpha))
        jp = np.zeros_like(clip.joint_pos)
        jv = np.zeros_like(clip.joint_vel)
        held = np.zeros(clip.length, dtype=np.int64)
        last = 0
        for k in range(clip.length):
            try:
                p, v, _ = asm.tick(k * dt)
                jp[k], jv[k] = p, v
                last = max(asm.last_seq, 0)
            except Exception:
                jp[k] = clip.joint_pos[0]
            held[k] = last
        delayed = MotionClip(
            fps=clip.fps, joint_pos=jp, joint_vel=jv,
            body_pos_w=clip.body_pos_w[held], body_quat_w=clip.body_quat_w[held],
            body_lin_vel_w=clip.body_lin_vel_w[held],
            body_ang_vel_w=clip.body_ang_vel_w[held],
            label=clip.label + " (streamed)", source_id="stream_sim",
        )
        write_clip(out, delayed)


# ---------------------------------------------------------------------------
# Periodic-motion model
# ---------------------------------------------------------------------------

@main.group()
def fld():
    """Fit and sample the periodic-motion model."""


@fld.command("fit")
@click.option("--clips", "clips_dir", required=True, type=click.Path(exists=True))
@click.option("--harmonics", default=4, show_default=True)
@click.option("--components", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def fld_fit(clips_dir, harmonics, components, seed, out):
    """Fit per-clip style vectors and a style GMM; write fld.json."""
    bank, files = load_bank_dir(clips_dir)
    model = default_model()
    dt = 1.0 / bank.fps
    thetas = []
    freqs = []
    for m in range(bank.motion_count):
        o, L = int(bank.offsets[m]), int(bank.lengths[m])
        clip = MotionClip(
            fps=bank.fps, joint_pos=bank.joint_pos[o:o + L],
            joint_vel=bank.joint_vel[o:o + L], body_pos_w=bank.body_pos_w[o:o + L],
            body_quat_w=bank.body_quat_w[o:o + L],
            body_lin_vel_w=bank.body_lin_vel_w[o:o + L],
            body_ang_vel_w=bank.body_ang_vel_w[o:o + L],
        )
        states = fld_mod.clip_to_states(clip)
        fitted = fld_mod.fit_model(states, dt, n_harmonics=harmonics)
        thetas.append(fitted.theta())
        freqs.append(fitted.freq)
        click.echo(f"clip {m}: f = {fitted.freq:.4f} Hz")
    gmm = fld_mod.fit_gmm(np.array(thetas), components, np.random.default_rng(seed),
                          layout=(10 + model.dof, harmonics, dt))
    blob = {
        "dt": dt, "n_channels": 10 + model.dof, "n_harmonics": harmonics,
        "weights": gmm.weights.tolist(), "means": gmm.means.tolist(),
        "variances": gmm.variances.tolist(), "clip_freqs": freqs,
    }
    with open(out, "w") as f:
        json.dump(blob, f, sort_keys=True)
        f.write("\n")


@fld.command("gen")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--hours", default=0.01, show_default=True)
@click.option("--clip-seconds", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def fld_gen(model_path, hours, clip_seconds, seed, out):
    """Sample styles from the GMM and synthesize periodic clips."""
    with open(model_path) as f:
        blob = json.load(f)
    gmm = fld_mod.GmmStyle(
        np.array(blob["weights"]), np.array(blob["means"]),
        np.array(blob["variances"]), n_channels=blob["n_channels"],
        n_harmonics=blob["n_harmonics"], dt=blob["dt"],
    )
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = max(1, int(round(hours * 3600.0 / clip_seconds)))
    for i in range(n):
        clip = fld_mod.synthesize(gmm, clip_seconds, blob["dt"], rng,
                                  label=f"synth {i}")
        write_clip(os.path.join(out, f"synth_{i:04d}.mbank"), clip)
    click.echo(f"wrote {n} clips to {out}")


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

RUN_SCHEMA = {
    "seed": int,
    "bank": str,
    "out": str,
    "train": {"steps": int, "envs": int},
    "eval": {"episodes": int},
    "channel": {"base_latency": float, "jitter_std": float, "drop_rate": float},
}


def _validate_config(data: dict, schema: dict = RUN_SCHEMA, path: str = "") -> None:
    for key, value in data.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {here}")
        expect = schema[key]
        if isinstance(expect, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected a table")
            _validate_config(value, expect, here)
        elif expect is float:
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{here}: expected a number")
        elif not isinstance(value, expect):
            raise ConfigError(f"{here}: expected {expect.__name__}")
    if "channel" in data:
        ch = data["channel"]
        if not 0.0 <= ch.get("drop_rate", 0.0) < 1.0:
            raise ConfigError("channel.drop_rate: must be in [0, 1)")
        if ch.get("base_latency", 0.0) < 0:
            raise ConfigError("channel.base_latency: must be >= 0")


def run_experiment(config: dict, out_dir: str) -> None:
    """The full pipeline: bank -> short train -> eval -> stats CSVs + manifest."""
    _validate_config(config)
    os.makedirs(out_dir, exist_ok=True)
    seed = config.get("seed", 0)
    model = default_model()

    if "bank" in config:
        bank, files = load_bank_dir(config["bank"])
    else:
        bank_dir = os.path.join(out_dir, "bank")
        files = motions.write_demo_bank(bank_dir, model)
        bank, _ = load_bank_dir(bank_dir)

    tr = config.get("train", {})
    spec = ObservationSpec(model.dof, model.num_bodies)
    ac = ActorCritic(spec.actor_dim, spec.critic_dim, model.dof, PPOConfig(),
                     np.random.default_rng(seed))
    env = TrackingEnv(bank, tr.get("envs", 64), model, seed=seed, auto_reset=True)
    sampler = SamplerState(bank.lengths, SamplerConfig())
    srng = np.random.default_rng(seed + 1)
    first = np.arange(env.num_envs) % bank.motion_count
    env.reset(first, np.array([sample_start_time(sampler, int(m), srng)
                               for m in first]))
    rows = []
    train(env, ac, total_env_steps=tr.get("steps", 50_000), seed=seed + 2,
          sampler=sampler, log=rows)
    write_csv(os.path.join(out_dir, "reward_curve.csv"),
              ["update", "env_steps", "mean_reward", "kl", "lr"],
              [(r["update"], r["env_steps"], r["mean_reward"], r["kl"], r["lr"])
               for r in rows])

    metrics = evaluate(ac.policy_fn(), bank,
                       episodes=config.get("eval", {}).get("episodes", 4),
                       model=model, seed=seed,
                       obs_builder=ObservationBuilder(model, 1, noise=False))
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as f:
        f.write(Metrics.CSV_HEADER + "\n" + metrics.csv_row() + "\n")

    from .curriculum import motion_probabilities

    p = motion_probabilities(sampler)
    write_csv(os.path.join(out_dir, "sampler_stats.csv"),
              ["motion", "analytic_p", "samples", "failures", "assignments"],
              [(m, p[m], int(sampler.sample_counts[m]), int(sampler.fail_counts[m]),
                int(sampler.assign_counts[m])) for m in range(bank.motion_count)])

    ch = config.get("channel", {"base_latency": 0.267, "jitter_std": 0.01})
    from .teleop import PRESETS, simulate_pipeline

    dtf = 1.0 / bank.fps
    frames = [(k * dtf, np.zeros(1), np.array([1.0, 0, 0, 0])) for k in range(2000)]
    cfgs = [ChannelConfig(ch.get("base_latency", 0.267), ch.get("jitter_std", 0.01),
                          ch.get("drop_rate", 0.0)),
            ChannelConfig(PRESETS["vr"][1], ch.get("jitter_std", 0.01))]
    _, stats = simulate_pipeline(frames, cfgs, np.random.default_rng(seed + 3))
    write_csv(os.path.join(out_dir, "delay.csv"),
              ["mean", "std", "p95", "count", "stage1_mean", "stage2_mean"],
              [(stats.mean, stats.std, stats.p95, stats.count,
                stats.stage_means[0], stats.stage_means[1])])

    write_manifest(out_dir, config, list(files))


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=None, type=int)
def run_cmd(config_path, out, seed):
    """Run a config-driven experiment end to end."""
    config: dict = {}
    if config_path:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(config_path, "rb") as f:
            config = tomllib.load(f)
    if seed is not None:
        config["seed"] = seed
    try:
        run_experiment(config, out)
    except MosaicError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"run complete: {out}")


@main.command("report")
@click.argument("run_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(), default=None)
def report(run_dirs, out):
    """Aggregate per-run metrics into one comparison table."""
    rows = []
    for d in run_dirs:
        mpath = os.path.join(d, "metrics.csv")
        if not os.path.exists(mpath):
            raise click.ClickException(str(MissingArtifacts(
                f"missing artifacts: no metrics.csv in {d}")))
        with open(mpath) as f:
            header = f.readline().strip().split(",")
            values = f.readline().strip().split(",")
        m = dict(zip(header, values))
        rows.append((os.path.basename(os.path.normpath(d)),
                     float(m["E_AP"]), float(m["E_BP"]), float(m["E_EP"]),
                     float(m["success_rate"])))
    base = rows[0]
    table = []
    header = ["run", "E_AP", "E_BP", "E_EP", "success_rate", "dE_AP_vs_first"]
    for r in rows:
        table.append((*r, r[1] - base[1]))
        click.echo(",".join(_csv_field(v) for v in table[-1]))
    if out:
        write_csv(out, header, table)


if __name__ == "__main__":
    main()
