"""Causal direction inference between two variables.

The primary score compares generalization gaps: fit a conditional model in
each candidate direction on training data, evaluate the loss on training
and transfer data, and prefer the direction whose loss moved less. Two
alternative metrics (conditional KL shift, transfer-gradient norm) and an
adaptation-speed meta-learning baseline are provided for comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import models, probs
from .probs import A_TO_B, B_TO_A, Dataset, DistributionPair


@dataclass(frozen=True)
class GapReport:
    """Per-direction train/transfer losses and their gaps (nats per sample)."""

    train_ab: float
    transfer_ab: float
    train_ba: float
    transfer_ba: float
    gap_ab: float = field(init=False)
    gap_ba: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gap_ab", self.transfer_ab - self.train_ab)
        object.__setattr__(self, "gap_ba", self.transfer_ba - self.train_ba)


@dataclass(frozen=True)
class DirectionScore:
    """A scalar score plus its verdict; positive means the cause is A."""

    gap_score: float
    verdict: str
    kl_score: float | None = None
    grad_norm_score: float | None = None


def _verdict(score: float) -> str:
    return A_TO_B if score > 0 else B_TO_A


def generalization_gaps(
    train: Dataset,
    transfer: Dataset,
    dims: tuple,
    eps: float = models.DEFAULT_SMOOTHING,
) -> GapReport:
    """Fit both directions on ``train``, evaluate conditional NLL on both sets."""
    if train.n == 0 or transfer.n == 0:
        raise ValueError("train and transfer datasets must be nonempty")
    f_ab = models.fit_counts(train, A_TO_B, dims, eps)
    f_ba = models.fit_counts(train, B_TO_A, dims, eps)
    return GapReport(
        train_ab=f_ab.nll(train),
        transfer_ab=f_ab.nll(transfer),
        train_ba=f_ba.nll(train),
        transfer_ba=f_ba.nll(transfer),
    )


def population_gaps(pair: DistributionPair) -> GapReport:
    """Infinite-sample limit of the gap report, computed exactly.

    The fitted conditionals converge to the train-distribution conditionals,
    so each loss is a conditional cross-entropy between exact tables.
    """
    j1 = pair.train_joint()
    j2 = pair.transfer_joint()
    cond_ab = pair.cond_b_given_a
    cond_ba = probs.condition(j1, given_axis=1)
    return GapReport(
        train_ab=probs.conditional_cross_entropy(j1, cond_ab, given_axis=0),
        transfer_ab=probs.conditional_cross_entropy(j2, cond_ab, given_axis=0),
        train_ba=probs.conditional_cross_entropy(j1, cond_ba, given_axis=1),
        transfer_ba=probs.conditional_cross_entropy(j2, cond_ba, given_axis=1),
    )


def score_sg(report: GapReport) -> DirectionScore:
    """Gap difference; ties and zero break toward B->A."""
    s = report.gap_ba - report.gap_ab
    return DirectionScore(gap_score=s, verdict=_verdict(s))


@dataclass(frozen=True)
class KlShiftScore:
    """Conditional-divergence shift per direction between the distributions.

    ``d_ab`` measures how much the effect-given-cause conditional moved from
    train to transfer, ``d_ba`` the reverse factorization. The direction
    whose own term is smaller wins, so ``consistent`` (d_ba - d_ab) is
    positive exactly when A->B is preferred; ``printed`` carries the
    opposite orientation for completeness.
    """

    d_ab: float
    d_ba: float

    @property
    def consistent(self) -> float:
        return self.d_ba - self.d_ab

    @property
    def printed(self) -> float:
        return self.d_ab - self.d_ba

    @property
    def verdict(self) -> str:
        return _verdict(self.consistent)


def score_sdkl_population(pair: DistributionPair) -> KlShiftScore:
    j1 = pair.train_joint()
    j2 = pair.transfer_joint()
    d_ab = probs.conditional_kl(
        j2, probs.condition(j2, 0), probs.condition(j1, 0), A_TO_B
    )
    d_ba = probs.conditional_kl(
        j2, probs.condition(j2, 1), probs.condition(j1, 1), B_TO_A
    )
    return KlShiftScore(d_ab=d_ab, d_ba=d_ba)


def score_sdkl_samples(
    train: Dataset,
    transfer: Dataset,
    dims: tuple,
    eps: float = models.DEFAULT_SMOOTHING,
) -> KlShiftScore:
    """Estimate the divergence shift with count models fit on each dataset."""
    if train.n == 0 or transfer.n == 0:
        raise ValueError("train and transfer datasets must be nonempty")
    out = {}
    for direction in (A_TO_B, B_TO_A):
        c1 = models.fit_counts(train, direction, dims, eps)
        c2 = models.fit_counts(transfer, direction, dims, eps)
        rows, targets = c1._index(transfer)
        terms = c2.log_conditional[rows, targets] - c1.log_conditional[rows, targets]
        out[direction] = float(terms.mean())
    return KlShiftScore(d_ab=out[A_TO_B], d_ba=out[B_TO_A])


@dataclass(frozen=True)
class GradNormScore:
    """Transfer-loss gradient norms of the two conditional modules.

    A module whose conditional survives the intervention sits near a
    stationary point on transfer data, so the smaller norm wins and
    ``consistent`` (norm_ba - norm_ab) is positive when A->B is preferred.
    """

    norm_ab: float
    norm_ba: float

    @property
    def consistent(self) -> float:
        return self.norm_ba - self.norm_ab

    @property
    def printed(self) -> float:
        return self.norm_ab - self.norm_ba

    @property
    def verdict(self) -> str:
        return _verdict(self.consistent)


def score_l2(
    model_ab: models.TabularSoftmaxModule,
    model_ba: models.TabularSoftmaxModule,
    transfer: Dataset,
) -> GradNormScore:
    return GradNormScore(
        norm_ab=models.grad_norm(model_ab, transfer),
        norm_ba=models.grad_norm(model_ba, transfer),
    )


# ---------------------------------------------------------------------------
# adaptation-speed baseline
# ---------------------------------------------------------------------------


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class GammaState:
    """Scalar decision variable; sigmoid(gamma) is the belief that A causes B."""

    gamma: float = 0.0
    learning_rate: float = 1.0
    history: tuple = ()

    @property
    def sigma(self) -> float:
        return sigmoid(self.gamma)


def gamma_step(state: GammaState, ll_ab: float, ll_ba: float) -> GammaState:
    """One descent step on -log of the sigmoid-weighted likelihood mixture.

    The mixture is evaluated in log-sum-exp form so the per-episode
    log-likelihoods can be arbitrarily negative.
    """
    if not (math.isfinite(ll_ab) and math.isfinite(ll_ba)):
        raise ValueError(f"non-finite episode log-likelihoods ({ll_ab}, {ll_ba})")
    s = sigmoid(state.gamma)
    log_z = np.logaddexp(math.log(s) + ll_ab, math.log1p(-s) + ll_ba)
    grad = -s * (1.0 - s) * (math.exp(ll_ab - log_z) - math.exp(ll_ba - log_z))
    gamma = state.gamma - state.learning_rate * grad
    return replace(state, gamma=gamma, history=state.history + (sigmoid(gamma),))


# ---------------------------------------------------------------------------
# episode harness
# ---------------------------------------------------------------------------

METHOD_GAP = "gap_score"
METHOD_GAP_GAMMA = "gap_regret"
METHOD_ADAPTATION = "adaptation_speed"
METHOD_KL = "conditional_kl"
METHOD_GRADNORM = "gradient_norm"

METHODS = (METHOD_GAP, METHOD_GAP_GAMMA, METHOD_ADAPTATION, METHOD_KL, METHOD_GRADNORM)

GAMMA_METHODS = (METHOD_GAP_GAMMA, METHOD_ADAPTATION)


@dataclass
class HarnessConfig:
    samples_per_episode: int = 64
    n_train: int = 5000
    eps: float = models.DEFAULT_SMOOTHING
    adapt_steps: int = 10
    adapt_lr: float = 0.5
    gamma_lr: float = 1.0

    def __post_init__(self):
        if self.samples_per_episode < 1 or self.n_train < 1:
            raise ValueError("sample counts must be >= 1")
        if self.adapt_steps < 0:
            raise ValueError("adapt_steps must be >= 0")


@dataclass(frozen=True)
class EpisodeRecord:
    seed: int
    episode: int
    method: str
    score: float
    sigma_gamma: float | None
    verdict: str
    correct: bool
    elapsed_ns: int


@dataclass
class HarnessResult:
    method: str
    episodes: int
    seeds: int
    records: list
    accuracy: np.ndarray
    mean_sigma: np.ndarray | None
    elapsed_ns: int

    def episodes_to_perfect(self) -> int | None:
        """First episode index (1-based) from which accuracy stays at 1.0."""
        perfect = self.accuracy >= 1.0
        if not perfect[-1]:
            return None
        t = len(perfect)
        while t > 1 and perfect[t - 2]:
            t -= 1
        return t


def _joint_ll(marg: models.TabularSoftmaxModule, cond: models.TabularSoftmaxModule, batch: Dataset) -> float:
    return -(marg.nll(batch) + cond.nll(batch))


def run_seed(
    method: str,
    seed: int,
    base_seed: int,
    pair_factory,
    episodes: int,
    config: HarnessConfig,
) -> list:
    """All episode records for one seeded experiment with one method."""
    rng = probs.make_rng(base_seed + seed)
    pair = pair_factory(rng)
    dims = (pair.n_dim, pair.m_dim)
    truth = pair.true_direction
    transfer_joint = pair.transfer_joint()
    train = probs.sample(pair.train_joint(), config.n_train, rng)

    f_ab = models.fit_counts(train, A_TO_B, dims, config.eps)
    f_ba = models.fit_counts(train, B_TO_A, dims, config.eps)
    train_ab = f_ab.nll(train)
    train_ba = f_ba.nll(train)

    if method == METHOD_ADAPTATION:
        marg_a = models.TabularSoftmaxModule.from_probs(f_ab.marginal, models.ROLE_MARGINAL, A_TO_B)
        cond_ab = models.TabularSoftmaxModule.from_probs(f_ab.conditional, models.ROLE_CONDITIONAL, A_TO_B)
        marg_b = models.TabularSoftmaxModule.from_probs(f_ba.marginal, models.ROLE_MARGINAL, B_TO_A)
        cond_ba = models.TabularSoftmaxModule.from_probs(f_ba.conditional, models.ROLE_CONDITIONAL, B_TO_A)
        adapted = (marg_a, cond_ab, marg_b, cond_ba)
        gamma = GammaState(learning_rate=config.gamma_lr)
    elif method == METHOD_GAP_GAMMA:
        gamma = GammaState(learning_rate=config.gamma_lr)
    elif method == METHOD_GRADNORM:
        cond_ab = models.TabularSoftmaxModule.from_probs(f_ab.conditional, models.ROLE_CONDITIONAL, A_TO_B)
        cond_ba = models.TabularSoftmaxModule.from_probs(f_ba.conditional, models.ROLE_CONDITIONAL, B_TO_A)
    elif method not in (METHOD_GAP, METHOD_KL):
        raise ValueError(f"unknown method {method!r}")

    records = []
    gap_scores = []
    seen_a = []
    seen_b = []
    for episode in range(1, episodes + 1):
        batch = probs.sample(transfer_joint, config.samples_per_episode, rng)
        t0 = time.perf_counter_ns()
        sigma = None
        if method == METHOD_GAP:
            s = (f_ba.nll(batch) - train_ba) - (f_ab.nll(batch) - train_ab)
            gap_scores.append(s)
            score = float(np.mean(gap_scores))
            verdict = _verdict(score)
        elif method == METHOD_GAP_GAMMA:
            g_ab = f_ab.nll(batch) - train_ab
            g_ba = f_ba.nll(batch) - train_ba
            gamma = gamma_step(gamma, -g_ab, -g_ba)
            score = gamma.gamma
            sigma = gamma.sigma
            verdict = _verdict(gamma.gamma)
        elif method == METHOD_ADAPTATION:
            lls_ab = []
            lls_ba = []
            for _ in range(config.adapt_steps):
                lls_ab.append(_joint_ll(marg_a, cond_ab, batch))
                lls_ba.append(_joint_ll(marg_b, cond_ba, batch))
                for module in adapted:
                    module.step(batch, config.adapt_lr)
            lls_ab.append(_joint_ll(marg_a, cond_ab, batch))
            lls_ba.append(_joint_ll(marg_b, cond_ba, batch))
            gamma = gamma_step(gamma, float(np.mean(lls_ab)), float(np.mean(lls_ba)))
            score = gamma.gamma
            sigma = gamma.sigma
            verdict = _verdict(gamma.gamma)
        elif method == METHOD_KL:
            seen_a.append(batch.a)
            seen_b.append(batch.b)
            cum = Dataset(np.concatenate(seen_a), np.concatenate(seen_b))
            score = score_sdkl_samples(train, cum, dims, config.eps).consistent
            verdict = _verdict(score)
        else:  # METHOD_GRADNORM
            seen_a.append(batch.a)
            seen_b.append(batch.b)
            cum = Dataset(np.concatenate(seen_a), np.concatenate(seen_b))
            score = score_l2(cond_ab, cond_ba, cum).consistent
            verdict = _verdict(score)
        elapsed = time.perf_counter_ns() - t0
        records.append(
            EpisodeRecord(
                seed=seed,
                episode=episode,
                method=method,
                score=score,
                sigma_gamma=sigma,
                verdict=verdict,
                correct=verdict == truth,
                elapsed_ns=elapsed,
            )
        )
    return records


def episode_harness(
    pair_factory,
    method: str,
    episodes: int,
    seeds: int,
    config: HarnessConfig | None = None,
    base_seed: int = 0,
    map_fn=map,
) -> HarnessResult:
    """Accuracy-versus-episode curve for one method over seeded experiments.

    ``pair_factory(rng)`` builds the per-seed ground-truth pair. Seeds run
    independently (``map_fn`` may fan them out); records are merged in seed
    order so results do not depend on scheduling.
    """
    if episodes < 1 or seeds < 1:
        raise ValueError("episodes and seeds must be >= 1")
    config = config or HarnessConfig()
    args = [(method, s, base_seed, pair_factory, episodes, config) for s in range(seeds)]
    per_seed = list(map_fn(_run_seed_star, args))
    records = [rec for recs in per_seed for rec in recs]

    correct = np.zeros(episodes)
    sigma_sum = np.zeros(episodes)
    has_sigma = method in GAMMA_METHODS
    elapsed = 0
    for rec in records:
        t = rec.episode - 1
        correct[t] += rec.correct
        if has_sigma:
            sigma_sum[t] += rec.sigma_gamma
        elapsed += rec.elapsed_ns
    return HarnessResult(
        method=method,
        episodes=episodes,
        seeds=seeds,
        records=records,
        accuracy=correct / seeds,
        mean_sigma=sigma_sum / seeds if has_sigma else None,
        elapsed_ns=elapsed,
    )


def _run_seed_star(args):
    return run_seed(*args)
