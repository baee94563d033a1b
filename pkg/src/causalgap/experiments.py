"""Scenario runners: discrete and continuous direction prediction, the
mixture-marginal robustness study, the real-data noise sweep, and the
population-level edge-case scatter. Each runner is seed-reproducible and can
emit records plus plot-ready long-format CSV files."""

from __future__ import annotations

import csv
import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import direction, models, probs, replearn
from .direction import (
    METHOD_ADAPTATION,
    METHOD_GAP,
    METHOD_GAP_GAMMA,
    GammaState,
    HarnessConfig,
    gamma_step,
)
from .probs import A_TO_B, B_TO_A, Dataset, make_rng

SCENARIOS = (
    "direction_discrete",
    "direction_continuous",
    "replearn",
    "robustness",
    "realdata",
    "edge",
)

RECORDS_HEADER = (
    "scenario",
    "seed",
    "step",
    "method",
    "score",
    "sigma_gamma",
    "verdict",
    "correct",
    "elapsed_ns",
)
CURVES_HEADER = ("x", "series", "y", "q25", "q75")
TRAJECTORY_HEADER = (
    "seed",
    "method",
    "iteration",
    "theta_e",
    "theta_error",
    "loss_uv",
    "loss_vu",
    "gap_uv",
    "gap_vu",
    "elapsed_s",
)
EDGE_HEADER = ("instance", "kl_shift", "gap_score", "dh_a", "dh_b", "dh_ab", "identity_gap")


@dataclass
class ScenarioSpec:
    """One scenario run: dimensions, counts, method set, and overrides."""

    scenario: str
    n_dim: int = 10
    m_dim: int | None = None
    k_components: int = 200
    seeds: int = 100
    episodes: int = 60
    iterations: int = 800
    steps: int = 30
    samples_per_episode: int = 64
    n_train: int = 5000
    heldout: int = 2000
    eps: float = models.DEFAULT_SMOOTHING
    adapt_steps: int = 10
    adapt_lr: float = 0.5
    gamma_lr: float = 1.0
    mech_noise: float = 0.3
    zero_intervention: bool = False
    lam: float = 1.0
    lr_encoder: float = 0.01
    lr_predictor: float = 0.05
    batch_size: int = 64
    redraw_every: int = 5
    hidden: int = 16
    inner_steps: int = 5
    inner_lr: float = 0.05
    rep_gamma_lr: float = 0.1
    noise_levels: tuple = (0.0, 0.5, 1.0, 5.0, 10.0, 50.0)
    data_path: str | None = None
    model: str = "linear"
    net_epochs: int = 200
    net_hidden: int = 100
    net_lr: float = 0.01
    net_batch: int = 32
    instances: int = 10000
    dim: int = 2
    base_seed: int = 0
    workers: int = 1
    out_dir: str | None = None
    plots: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.m_dim is None:
            self.m_dim = self.n_dim
        for name in ("n_dim", "m_dim", "k_components", "seeds", "episodes", "iterations", "steps", "samples_per_episode", "n_train", "instances", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """One emitted results row."""

    scenario: str
    seed: int
    step: int
    method: str
    score: float
    sigma_gamma: float | None
    verdict: str
    correct: bool | None
    elapsed_ns: int


@dataclass(frozen=True)
class PairDataset:
    """Two-column real-valued dataset, standardized to zero mean, unit variance."""

    a: np.ndarray
    b: np.ndarray
    source: str
    scaling_applied: bool = True

    @property
    def n(self) -> int:
        return self.a.size


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_records(path, records) -> None:
    rows = [
        (r.scenario, r.seed, r.step, r.method, r.score, r.sigma_gamma, r.verdict, r.correct, r.elapsed_ns)
        for r in records
    ]
    write_csv(path, RECORDS_HEADER, rows)


def emit_plots(curves_rows, out_path) -> None:
    """Render the long-format curve rows as one SVG line plot per x/series."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = {}
    for x, name, y, q25, q75 in curves_rows:
        series.setdefault(name, []).append((float(x), float(y)))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(series):
        pts = sorted(series[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def _pool_map(workers: int):
    if workers <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=workers)
    return pool.map, pool


# ---------------------------------------------------------------------------
# discrete direction prediction
# ---------------------------------------------------------------------------


def discrete_pair_factory(rng, n_dim: int, m_dim: int):
    return probs.make_pair(n_dim, m_dim, rng)


DISCRETE_METHODS = (METHOD_GAP, METHOD_ADAPTATION, METHOD_GAP_GAMMA)


@dataclass
class DiscreteResult:
    spec: ScenarioSpec
    results: dict  # method -> direction.HarnessResult

    def accuracy(self, method: str) -> np.ndarray:
        return self.results[method].accuracy

    def episodes_to_perfect(self, method: str):
        return self.results[method].episodes_to_perfect()

    def elapsed_ns(self, method: str) -> int:
        return self.results[method].elapsed_ns


def run_discrete(spec: ScenarioSpec, methods=DISCRETE_METHODS) -> DiscreteResult:
    factory = functools.partial(discrete_pair_factory, n_dim=spec.n_dim, m_dim=spec.m_dim)
    config = HarnessConfig(
        samples_per_episode=spec.samples_per_episode,
        n_train=spec.n_train,
        eps=spec.eps,
        adapt_steps=spec.adapt_steps,
        adapt_lr=spec.adapt_lr,
        gamma_lr=spec.gamma_lr,
    )
    map_fn, pool = _pool_map(spec.workers)
    try:
        results = {
            m: direction.episode_harness(
                factory, m, spec.episodes, spec.seeds, config, spec.base_seed, map_fn
            )
            for m in methods
        }
    finally:
        if pool is not None:
            pool.shutdown()
    out = DiscreteResult(spec, results)
    if spec.out_dir:
        _emit_harness_outputs(spec, results, prefix=spec.scenario)
    return out


def _emit_harness_outputs(spec, results, prefix) -> None:
    records = []
    curves = []
    for method, res in results.items():
        for rec in res.records:
            records.append(
                RunRecord(spec.scenario, rec.seed, rec.episode, method, rec.score, rec.sigma_gamma, rec.verdict, rec.correct, rec.elapsed_ns)
            )
        for t in range(res.episodes):
            curves.append((t + 1, f"{method}:accuracy", res.accuracy[t], None, None))
            if res.mean_sigma is not None:
                curves.append((t + 1, f"{method}:mean_sigma", res.mean_sigma[t], None, None))
    out = Path(spec.out_dir)
    write_records(out / f"{prefix}_records.csv", records)
    write_csv(out / f"{prefix}_curves.csv", CURVES_HEADER, curves)
    if spec.plots:
        emit_plots(curves, out / f"{prefix}_curves.svg")


# ---------------------------------------------------------------------------
# continuous direction prediction
# ---------------------------------------------------------------------------

CONTINUOUS_METHODS = (METHOD_GAP, METHOD_ADAPTATION)


def _continuous_seed(args):
    (seed, spec) = args
    rng = make_rng(spec.base_seed + seed)
    mech_w = float(rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 2.0))
    mech_c = rng.uniform(-1.0, 1.0)
    mu1, s1 = rng.uniform(-2.0, 2.0), rng.uniform(0.5, 2.0)

    def draw(mean, std, n):
        a = rng.normal(mean, std, n)
        b = mech_w * a + mech_c + spec.mech_noise * rng.normal(0.0, 1.0, n)
        return Dataset(a, b)

    train = draw(mu1, s1, spec.n_train)
    lin_ab = models.fit_linear(train, A_TO_B)
    lin_ba = models.fit_linear(train, B_TO_A)
    train_ab = lin_ab.nll(train)
    train_ba = lin_ba.nll(train)

    adapt_ab = (models.fit_gaussian_marginal(train, A_TO_B), models.fit_linear(train, A_TO_B))
    adapt_ba = (models.fit_gaussian_marginal(train, B_TO_A), models.fit_linear(train, B_TO_A))
    gamma = GammaState(learning_rate=spec.gamma_lr)

    records = []
    gap_scores = []
    for episode in range(1, spec.episodes + 1):
        if spec.zero_intervention:
            mu2, s2 = mu1, s1
        else:
            mu2, s2 = rng.uniform(-2.0, 2.0), rng.uniform(0.5, 2.0)
        batch = draw(mu2, s2, spec.samples_per_episode)

        t0 = time.perf_counter_ns()
        s = (lin_ba.nll(batch) - train_ba) - (lin_ab.nll(batch) - train_ab)
        gap_scores.append(s)
        score = float(np.mean(gap_scores))
        verdict = A_TO_B if score > 0 else B_TO_A
        records.append(
            RunRecord(spec.scenario, seed, episode, METHOD_GAP, score, None, verdict, verdict == A_TO_B, time.perf_counter_ns() - t0)
        )

        t0 = time.perf_counter_ns()
        lls_ab, lls_ba = [], []
        for _ in range(spec.adapt_steps):
            lls_ab.append(-(adapt_ab[0].nll(batch) + adapt_ab[1].nll(batch)))
            lls_ba.append(-(adapt_ba[0].nll(batch) + adapt_ba[1].nll(batch)))
            for module in (*adapt_ab, *adapt_ba):
                module.step(batch, spec.adapt_lr)
        lls_ab.append(-(adapt_ab[0].nll(batch) + adapt_ab[1].nll(batch)))
        lls_ba.append(-(adapt_ba[0].nll(batch) + adapt_ba[1].nll(batch)))
        gamma = gamma_step(gamma, float(np.mean(lls_ab)), float(np.mean(lls_ba)))
        verdict = A_TO_B if gamma.gamma > 0 else B_TO_A
        records.append(
            RunRecord(spec.scenario, seed, episode, METHOD_ADAPTATION, gamma.gamma, gamma.sigma, verdict, verdict == A_TO_B, time.perf_counter_ns() - t0)
        )
    return records


@dataclass
class ContinuousResult:
    spec: ScenarioSpec
    records: list
    accuracy: dict  # method -> (episodes,) array

    def episodes_to_reach(self, method: str, level: float):
        acc = self.accuracy[method]
        hit = np.flatnonzero(acc >= level)
        return int(hit[0]) + 1 if hit.size else None


def run_continuous(spec: ScenarioSpec) -> ContinuousResult:
    map_fn, pool = _pool_map(spec.workers)
    try:
        per_seed = list(map_fn(_continuous_seed, [(s, spec) for s in range(spec.seeds)]))
    finally:
        if pool is not None:
            pool.shutdown()
    records = [r for recs in per_seed for r in recs]
    accuracy = {}
    for method in CONTINUOUS_METHODS:
        acc = np.zeros(spec.episodes)
        for r in records:
            if r.method == method:
                acc[r.step - 1] += r.correct
        accuracy[method] = acc / spec.seeds
    result = ContinuousResult(spec, records, accuracy)
    if spec.out_dir:
        curves = []
        for method, acc in accuracy.items():
            curves.extend((t + 1, f"{method}:accuracy", acc[t], None, None) for t in range(spec.episodes))
        out = Path(spec.out_dir)
        write_records(out / "direction_continuous_records.csv", records)
        write_csv(out / "direction_continuous_curves.csv", CURVES_HEADER, curves)
        if spec.plots:
            emit_plots(curves, out / "direction_continuous_curves.svg")
    return result


# ---------------------------------------------------------------------------
# mixture-marginal robustness
# ---------------------------------------------------------------------------


def _robustness_seed(args):
    (seed, spec) = args
    rng = make_rng(spec.base_seed + seed)
    pair = probs.make_pair(spec.n_dim, spec.m_dim, rng)
    transfer_joint = pair.transfer_joint()
    train = probs.sample(pair.train_joint(), spec.n_train, rng)
    f_ab = models.fit_counts(train, A_TO_B, (spec.n_dim, spec.m_dim), spec.eps)
    f_ba = models.fit_counts(train, B_TO_A, (spec.n_dim, spec.m_dim), spec.eps)
    train_ab = f_ab.nll(train)
    train_ba = f_ba.nll(train)

    # Cause marginal with hidden mixture structure, initialized at the fitted
    # marginal (tiny jitter breaks the exact component symmetry).
    k = spec.k_components
    theta = 0.01 * rng.normal(size=k)
    phi = np.log(f_ab.marginal)[None, :] + 0.01 * rng.normal(size=(k, spec.n_dim))
    mix = models.MixtureMarginal(theta, phi)
    cond_ab = models.TabularSoftmaxModule.from_probs(f_ab.conditional, models.ROLE_CONDITIONAL, A_TO_B)
    marg_b = models.TabularSoftmaxModule.from_probs(f_ba.marginal, models.ROLE_MARGINAL, B_TO_A)
    cond_ba = models.TabularSoftmaxModule.from_probs(f_ba.conditional, models.ROLE_CONDITIONAL, B_TO_A)

    heldout = probs.sample(transfer_joint, spec.heldout, rng)
    adapt_cfg = models.TrainConfig(learning_rate=spec.adapt_lr, steps=1)

    def ll_ab():
        return mix.log_likelihood(heldout.a) - cond_ab.nll(heldout)

    def ll_ba():
        return -(marg_b.nll(heldout) + cond_ba.nll(heldout))

    ll0_ab, ll0_ba = ll_ab(), ll_ba()
    improve_ab = np.zeros(spec.steps)
    improve_ba = np.zeros(spec.steps)
    sg_running = np.zeros(spec.steps)
    gap_scores = []
    for t in range(spec.steps):
        batch = probs.sample(transfer_joint, 100, rng)
        models.mixture_sgd_step(mix, batch.a, adapt_cfg)
        cond_ab.step(batch, spec.adapt_lr)
        marg_b.step(batch, spec.adapt_lr)
        cond_ba.step(batch, spec.adapt_lr)
        improve_ab[t] = ll_ab() - ll0_ab
        improve_ba[t] = ll_ba() - ll0_ba
        s = (f_ba.nll(batch) - train_ba) - (f_ab.nll(batch) - train_ab)
        gap_scores.append(s)
        sg_running[t] = float(np.mean(gap_scores))
    return improve_ab, improve_ba, sg_running


@dataclass
class RobustnessResult:
    spec: ScenarioSpec
    improve_ab: np.ndarray  # (seeds, steps) held-out log-likelihood improvements
    improve_ba: np.ndarray
    gap_running: np.ndarray

    def quantiles(self, arr: np.ndarray):
        return (
            np.median(arr, axis=0),
            np.quantile(arr, 0.25, axis=0),
            np.quantile(arr, 0.75, axis=0),
        )


def run_robustness(spec: ScenarioSpec) -> RobustnessResult:
    map_fn, pool = _pool_map(spec.workers)
    try:
        per_seed = list(map_fn(_robustness_seed, [(s, spec) for s in range(spec.seeds)]))
    finally:
        if pool is not None:
            pool.shutdown()
    result = RobustnessResult(
        spec,
        improve_ab=np.stack([p[0] for p in per_seed]),
        improve_ba=np.stack([p[1] for p in per_seed]),
        gap_running=np.stack([p[2] for p in per_seed]),
    )
    if spec.out_dir:
        curves = []
        for name, arr in (
            ("adaptation_improvement_ab", result.improve_ab),
            ("adaptation_improvement_ba", result.improve_ba),
            ("gap_score_running", result.gap_running),
        ):
            med, q25, q75 = result.quantiles(arr)
            curves.extend((t + 1, name, med[t], q25[t], q75[t]) for t in range(spec.steps))
        out = Path(spec.out_dir)
        write_csv(out / "robustness_curves.csv", CURVES_HEADER, curves)
        if spec.plots:
            emit_plots(curves, out / "robustness_curves.svg")
    return result


# ---------------------------------------------------------------------------
# representation learning
# ---------------------------------------------------------------------------

REP_PROPOSED = "min_gap_encoder"
REP_BASELINE = "adaptation_encoder"


def _replearn_seed(args):
    (seed, method, spec) = args
    rng = make_rng(spec.base_seed + seed)
    process = replearn.make_process(rng)
    if method == REP_PROPOSED:
        state = replearn.init_encoder_state(
            rng,
            hidden=spec.hidden,
            lam=spec.lam,
            lr_encoder=spec.lr_encoder,
            lr_predictor=spec.lr_predictor,
        )
        return replearn.train_representation(
            process, state, spec.iterations, rng, spec.batch_size, spec.redraw_every
        )
    config = replearn.BaselineRepConfig(
        inner_steps=spec.inner_steps,
        inner_lr=spec.inner_lr,
        gamma_lr=spec.rep_gamma_lr,
        lr_encoder=spec.lr_encoder,
        lr_predictor=spec.lr_predictor,
        batch_size=spec.batch_size,
        redraw_every=spec.redraw_every,
        hidden=spec.hidden,
    )
    return replearn.baseline_replearn(process, config, spec.iterations, rng)


@dataclass
class RepLearnResult:
    spec: ScenarioSpec
    trajectories: dict  # method -> list of ThetaTrajectory per seed

    def stable_entries(self, method: str, tol: float = 0.05, hold: int = 100):
        return [
            traj.stable_entry(-math.pi / 4, tol=tol, hold=hold)
            for traj in self.trajectories[method]
        ]

    def median_iter_seconds(self, method: str) -> float:
        return float(np.median(np.concatenate([t.elapsed_s for t in self.trajectories[method]])))


def run_replearn(spec: ScenarioSpec, methods=(REP_PROPOSED, REP_BASELINE)) -> RepLearnResult:
    map_fn, pool = _pool_map(spec.workers)
    args = [(s, m, spec) for m in methods for s in range(spec.seeds)]
    try:
        flat = list(map_fn(_replearn_seed, args))
    finally:
        if pool is not None:
            pool.shutdown()
    trajectories = {}
    for (seed, method, _), traj in zip(args, flat):
        trajectories.setdefault(method, []).append(traj)
    result = RepLearnResult(spec, trajectories)
    if spec.out_dir:
        rows = []
        for method in methods:
            for seed, traj in enumerate(result.trajectories[method]):
                for i in range(len(traj.iteration)):
                    rows.append(
                        (
                            seed,
                            method,
                            int(traj.iteration[i]),
                            traj.theta_e[i],
                            traj.theta_err[i],
                            traj.loss_uv[i],
                            traj.loss_vu[i],
                            traj.gap_uv[i],
                            traj.gap_vu[i],
                            traj.elapsed_s[i],
                        )
                    )
        out = Path(spec.out_dir)
        write_csv(out / "replearn_trajectories.csv", TRAJECTORY_HEADER, rows)
        curves = []
        for method in methods:
            errs = np.stack([t.theta_err for t in result.trajectories[method]])
            med = np.median(errs, axis=0)
            q25 = np.quantile(errs, 0.25, axis=0)
            q75 = np.quantile(errs, 0.75, axis=0)
            curves.extend(
                (i + 1, f"{method}:theta_error", med[i], q25[i], q75[i]) for i in range(errs.shape[1])
            )
        write_csv(out / "replearn_curves.csv", CURVES_HEADER, curves)
        if spec.plots:
            emit_plots(curves, out / "replearn_curves.svg")
    return result


# ---------------------------------------------------------------------------
# real data
# ---------------------------------------------------------------------------


def bundled_pair_file() -> Path:
    return Path(__file__).parent / "data" / "altitude_temperature.txt"


def ingest_pair_file(path) -> PairDataset:
    """Parse a two-column numeric text file and standardize both columns.

    Accepts whitespace- or comma-separated values and an optional header
    line. Raises with a line number on malformed rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pair data file not found: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = [p for p in text.replace(",", " ").split() if p]
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected two numeric columns")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if lineno == 1:  # tolerate a single header line
                    continue
                raise ValueError(f"{path}:{lineno}: malformed row {text!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    scaled = np.empty_like(arr)
    for col in range(2):
        std = arr[:, col].std()
        if std == 0.0:
            raise ValueError(f"{path}: column {col} is constant and cannot be scaled")
        scaled[:, col] = (arr[:, col] - arr[:, col].mean()) / std
    return PairDataset(scaled[:, 0], scaled[:, 1], source=str(path))


def split_by_cause(a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    """Covariate-shift split: threshold on the cause at its median, shuffle each
    side, and cross the 9:1 remainders so train is dominated by one side."""
    thr = np.median(a)
    hi = np.flatnonzero(a >= thr)
    lo = np.flatnonzero(a < thr)
    hi = hi[rng.permutation(hi.size)]
    lo = lo[rng.permutation(lo.size)]
    hi_cut = (9 * hi.size) // 10
    lo_cut = (9 * lo.size) // 10
    train_idx = np.concatenate([hi[:hi_cut], lo[lo_cut:]])
    transfer_idx = np.concatenate([hi[hi_cut:], lo[:lo_cut]])
    return (
        Dataset(a[train_idx], b[train_idx]),
        Dataset(a[transfer_idx], b[transfer_idx]),
    )


def _realdata_verdict(train: Dataset, transfer: Dataset, spec: ScenarioSpec, model: str, rng) -> float:
    if model == "linear":
        f_ab = models.fit_linear(train, A_TO_B)
        f_ba = models.fit_linear(train, B_TO_A)
    elif model == "net":
        cfg = models.TrainConfig(learning_rate=spec.net_lr, steps=spec.net_epochs, batch_size=spec.net_batch)
        f_ab = models.fit_net(train, A_TO_B, cfg, rng, hidden=spec.net_hidden)
        f_ba = models.fit_net(train, B_TO_A, cfg, rng, hidden=spec.net_hidden)
    else:
        raise ValueError(f"unknown model {model!r}")
    gaps = direction.GapReport(
        train_ab=f_ab.nll(train),
        transfer_ab=f_ab.nll(transfer),
        train_ba=f_ba.nll(train),
        transfer_ba=f_ba.nll(transfer),
    )
    return direction.score_sg(gaps).gap_score


def _realdata_run(args):
    (run_index, seed, sigma, model, spec, a, b) = args
    rng = make_rng(spec.base_seed + run_index)
    noisy_a = a + sigma * rng.normal(size=a.size)
    noisy_b = b + sigma * rng.normal(size=b.size)
    t0 = time.perf_counter_ns()
    train, transfer = split_by_cause(noisy_a, noisy_b, rng)
    score = _realdata_verdict(train, transfer, spec, model, rng)
    verdict = A_TO_B if score > 0 else B_TO_A
    elapsed = time.perf_counter_ns() - t0
    return RunRecord(spec.scenario, seed, 0, model, score, None, verdict, verdict == A_TO_B, elapsed)


@dataclass
class RealdataResult:
    spec: ScenarioSpec
    success: dict  # (model, sigma) -> success rate
    records: dict  # (model, sigma) -> list of RunRecord


def run_realdata(spec: ScenarioSpec, data: PairDataset | None = None, model_levels=None) -> RealdataResult:
    """Noise sweep over seeds; success means the cause column is identified.

    ``model_levels`` maps model name to the noise levels it runs at; by
    default the configured model runs at every level in the spec.
    """
    if data is None:
        data = ingest_pair_file(spec.data_path or bundled_pair_file())
    if data.n < 100:
        raise ValueError(f"need at least 100 rows, got {data.n}")
    if model_levels is None:
        model_levels = {spec.model: tuple(spec.noise_levels)}
    jobs = []
    run_index = 0
    for model in sorted(model_levels):
        for sigma in model_levels[model]:
            for seed in range(spec.seeds):
                jobs.append((run_index, seed, float(sigma), model, spec, data.a, data.b))
                run_index += 1
    map_fn, pool = _pool_map(spec.workers)
    try:
        flat = list(map_fn(_realdata_run, jobs))
    finally:
        if pool is not None:
            pool.shutdown()
    success = {}
    records = {}
    for job, rec in zip(jobs, flat):
        key = (job[3], job[2])
        records.setdefault(key, []).append(rec)
    for key, recs in records.items():
        success[key] = float(np.mean([r.correct for r in recs]))
    result = RealdataResult(spec, success, records)
    if spec.out_dir:
        out = Path(spec.out_dir)
        write_records(out / "realdata_records.csv", [r for recs in records.values() for r in recs])
        curves = [
            (sigma, f"{model}:success_rate", success[(model, sigma)], None, None)
            for (model, sigma) in sorted(success)
        ]
        write_csv(out / "realdata_success.csv", CURVES_HEADER, curves)
        if spec.plots:
            emit_plots(curves, out / "realdata_success.svg")
    return result


# ---------------------------------------------------------------------------
# population-level edge analysis
# ---------------------------------------------------------------------------


def edge_row(pair: probs.DistributionPair):
    """Exact score decomposition for one pair: divergence shift, gap score,
    entropy deltas, and the residual of the decomposition identity."""
    deltas = probs.entropy_deltas(pair)
    kl_shift = direction.score_sdkl_population(pair).consistent
    gap_score = direction.score_sg(direction.population_gaps(pair)).gap_score
    identity_gap = gap_score - (kl_shift - (deltas.dh_b - deltas.dh_a))
    return kl_shift, gap_score, deltas.dh_a, deltas.dh_b, deltas.dh_ab, identity_gap


@dataclass
class EdgeResult:
    spec: ScenarioSpec
    rows: np.ndarray  # columns follow EDGE_HEADER minus the index


def run_edge_analysis(spec: ScenarioSpec) -> EdgeResult:
    rng = make_rng(spec.base_seed)
    rows = np.empty((spec.instances, 6))
    for i in range(spec.instances):
        rows[i] = edge_row(probs.make_pair(spec.dim, spec.dim, rng))
    result = EdgeResult(spec, rows)
    if spec.out_dir:
        out = Path(spec.out_dir)
        write_csv(
            out / "edge_scatter.csv",
            EDGE_HEADER,
            [(i, *rows[i]) for i in range(spec.instances)],
        )
    return result


# ---------------------------------------------------------------------------
# run everything
# ---------------------------------------------------------------------------


def run_all(spec: ScenarioSpec) -> dict:
    """Desk-scale pass over every scenario, sharing the spec's common knobs."""
    outputs = {}
    outputs["direction_discrete"] = run_discrete(replace(spec, scenario="direction_discrete"))
    outputs["direction_continuous"] = run_continuous(replace(spec, scenario="direction_continuous"))
    outputs["replearn"] = run_replearn(replace(spec, scenario="replearn"))
    outputs["robustness"] = run_robustness(replace(spec, scenario="robustness"))
    outputs["realdata"] = run_realdata(replace(spec, scenario="realdata"))
    outputs["edge"] = run_edge_analysis(replace(spec, scenario="edge"))
    return outputs
