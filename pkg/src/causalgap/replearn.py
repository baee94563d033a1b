"""Disentangling a rotated 2-D observation back into causal coordinates.

A fixed rotation entangles cause and effect into the observed pair; a
trainable rotation encoder is learned so that at least one direction's
conditional predictor generalizes from the train distribution to freshly
intervened transfer batches. The encoder objective penalizes the smaller
of the two directions' generalization gaps.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .direction import GammaState, gamma_step
from .probs import make_rng

VARIANCE_FLOOR = 1e-6


class EncoderDiverged(RuntimeError):
    """Raised when the encoder angle leaves the sane range; carries the trace."""

    def __init__(self, trajectory):
        super().__init__("encoder angle diverged")
        self.trajectory = trajectory


def rotate(theta: float, point):
    """Apply the 2-D rotation matrix for ``theta`` to a point or batch."""
    x, y = point
    c, s = math.cos(theta), math.sin(theta)
    return c * x - s * y, s * x + c * y


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def theta_error(theta_e: float, theta_d: float) -> float:
    """Minimum angular distance from theta_e to {+theta_d, -theta_d} mod 2*pi."""
    best = math.inf
    for target in (theta_d, -theta_d):
        d = (theta_e - target + math.pi) % (2.0 * math.pi) - math.pi
        best = min(best, abs(d))
    return best


# ---------------------------------------------------------------------------
# data generating process
# ---------------------------------------------------------------------------


@dataclass
class GenProcess:
    """Ground truth: cause, an invariant saturating mechanism, and a decoder.

    The cause is uniform over a bounded range at train time; interventions
    replace it with a Gaussian (clipped to the same range, so predictors are
    never asked to extrapolate) while the mechanism mapping cause to effect
    never changes. Observations are the rotation of (cause, effect) by the
    decoder angle.
    """

    theta_d: float
    mech_gain: float
    mech_shift: float
    mech_scale: float
    mech_offset: float
    noise_std: float = 0.1
    cause_range: float = 3.0
    transfer_mean: float = 0.0
    transfer_std: float = 1.0

    def mechanism(self, a: np.ndarray) -> np.ndarray:
        return self.mech_scale * np.tanh(self.mech_gain * a + self.mech_shift) + self.mech_offset


def make_process(rng: np.random.Generator, theta_d: float = -math.pi / 4) -> GenProcess:
    proc = GenProcess(
        theta_d=theta_d,
        mech_gain=rng.uniform(1.0, 2.0),
        mech_shift=rng.uniform(-0.5, 0.5),
        mech_scale=rng.uniform(1.0, 2.0),
        mech_offset=rng.uniform(-0.5, 0.5),
    )
    redraw_intervention(proc, rng)
    return proc


def redraw_intervention(process: GenProcess, rng: np.random.Generator) -> None:
    process.transfer_mean = rng.uniform(-2.0, 2.0)
    process.transfer_std = rng.uniform(0.5, 2.0)


def gen_batch(process: GenProcess, which: str, n: int, rng: np.random.Generator):
    """Sample causal variables, push through the mechanism, decode to (X, Y)."""
    r = process.cause_range
    if which == "train":
        a = rng.uniform(-r, r, n)
    elif which == "transfer":
        a = np.clip(rng.normal(process.transfer_mean, process.transfer_std, n), -r, r)
    else:
        raise ValueError(f"unknown batch kind {which!r}")
    b = process.mechanism(a) + rng.normal(0.0, process.noise_std, n)
    return rotate(process.theta_d, (a, b))


# ---------------------------------------------------------------------------
# predictors
# ---------------------------------------------------------------------------


@dataclass
class Predictor:
    """Small rectifier net plus a learned homoscedastic Gaussian variance."""

    net: models.TwoLayerNet
    log_variance: float = math.log(0.25)

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator) -> "Predictor":
        return cls(models.TwoLayerNet.init(hidden, "", rng))

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance) + VARIANCE_FLOOR

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        yhat, _ = self.net.forward(x)
        return models.gaussian_nll(y - yhat, self.variance)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean Gaussian NLL plus gradients for parameters and inputs.

        Returns (loss, param_grads, g_log_variance, g_x, g_y). Network
        parameters follow the half-mean-squared-error gradient (the NLL
        gradient with the variance factored out, so the step size does not
        explode as the variance shrinks); the variance and the input-side
        derivatives g_x, g_y follow the NLL itself, since they exist to
        calibrate and propagate the likelihood.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = x.size
        var = self.variance
        yhat, cache = self.net.forward(x)
        resid = yhat - y
        param_grads = self.net.backward(cache, resid / n)
        d_yhat = resid / (var * n)
        g_lv = (0.5 / var - float((resid**2).mean()) / (2.0 * var * var)) * math.exp(self.log_variance)
        g_x = d_yhat * self.net.input_grad(cache)
        g_y = -d_yhat
        loss = models.gaussian_nll(resid, var)
        return loss, param_grads, g_lv, g_x, g_y

    def apply(self, param_grads: dict, g_lv: float, lr: float) -> None:
        self.net.apply_grads(param_grads, lr)
        # clamp keeps exp() representable if a predictor transiently diverges
        self.log_variance = min(30.0, max(-30.0, self.log_variance - lr * g_lv))


@dataclass
class EncoderState:
    """Trainable rotation angle plus one conditional predictor per direction."""

    theta_e: float
    predictor_uv: Predictor
    predictor_vu: Predictor
    lam: float = 1.0
    lr_encoder: float = 0.01
    lr_predictor: float = 0.05


def init_encoder_state(
    rng: np.random.Generator,
    hidden: int = 16,
    theta_e: float | None = None,
    lam: float = 1.0,
    lr_encoder: float = 0.01,
    lr_predictor: float = 0.05,
) -> EncoderState:
    """Fresh encoder near zero with randomly initialized predictors."""
    if theta_e is None:
        theta_e = rng.uniform(-0.3, 0.3)
    p_uv = Predictor.init(hidden, rng)
    p_vu = Predictor.init(hidden, rng)
    return EncoderState(theta_e, p_uv, p_vu, lam, lr_encoder, lr_predictor)


def predictor_step(state: EncoderState, train_batch):
    """One gradient step for both predictors on a train batch; encoder frozen.

    Returns the losses before the step; they serve as the train-side
    reference when transfer gaps are formed later in the iteration.
    """
    x, y = train_batch
    if np.size(x) == 0:
        raise ValueError("empty train batch")
    u, v = rotate(state.theta_e, (x, y))
    loss_uv, g_uv, g_lv_uv, _, _ = state.predictor_uv.loss_and_grads(u, v)
    loss_vu, g_vu, g_lv_vu, _, _ = state.predictor_vu.loss_and_grads(v, u)
    if not (math.isfinite(loss_uv) and math.isfinite(loss_vu)):
        raise FloatingPointError("non-finite predictor loss")
    state.predictor_uv.apply(g_uv, g_lv_uv, state.lr_predictor)
    state.predictor_vu.apply(g_vu, g_lv_vu, state.lr_predictor)
    return loss_uv, loss_vu


def _encoder_angle_grad(pred: Predictor, u, v, forward: bool):
    """d mean-loss / d theta for one predictor branch, inputs already rotated.

    ``forward`` selects the U->V branch (input u, target v); the angle enters
    through both coordinates: du/dtheta = -v and dv/dtheta = u.
    """
    if forward:
        loss, _, _, g_in, g_tgt = pred.loss_and_grads(u, v)
        g_u, g_v = g_in, g_tgt
    else:
        loss, _, _, g_in, g_tgt = pred.loss_and_grads(v, u)
        g_u, g_v = g_tgt, g_in
    return loss, float((g_u * (-v) + g_v * u).sum())


def encoder_step(state: EncoderState, transfer_batch, train_reference_losses):
    """One descent step on lambda * min(gap_uv, gap_vu); predictors frozen.

    Gaps are transfer losses minus the supplied train-side references
    (constants here); the gradient flows through the smaller branch only,
    ties breaking toward U->V.
    """
    ref_uv, ref_vu = train_reference_losses
    x, y = transfer_batch
    u, v = rotate(state.theta_e, (x, y))
    loss_uv, grad_uv = _encoder_angle_grad(state.predictor_uv, u, v, forward=True)
    loss_vu, grad_vu = _encoder_angle_grad(state.predictor_vu, u, v, forward=False)
    gap_uv = loss_uv - ref_uv
    gap_vu = loss_vu - ref_vu
    if state.lam != 0.0:
        grad = grad_uv if gap_uv <= gap_vu else grad_vu
        state.theta_e -= state.lr_encoder * state.lam * grad
    return gap_uv, gap_vu


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


@dataclass
class ThetaTrajectory:
    """Per-iteration record of the encoder angle and bookkeeping columns."""

    iteration: np.ndarray
    theta_e: np.ndarray
    theta_err: np.ndarray
    loss_uv: np.ndarray
    loss_vu: np.ndarray
    gap_uv: np.ndarray
    gap_vu: np.ndarray
    elapsed_s: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.iteration) <= 0):
            raise ValueError("iteration indices must strictly increase")

    def stable_entry(self, theta_d: float, tol: float = 0.05, hold: int = 100) -> int | None:
        """First iteration whose error stays below tol for ``hold`` iterations."""
        ok = self.theta_err < tol
        run = 0
        for i in range(len(ok)):
            run = run + 1 if ok[i] else 0
            if run >= hold:
                return int(self.iteration[i - hold + 1])
        return None


class _TrajectoryBuilder:
    def __init__(self):
        self.rows = []

    def add(self, iteration, theta_e, theta_err, loss_uv, loss_vu, gap_uv, gap_vu, elapsed_s):
        self.rows.append((iteration, theta_e, theta_err, loss_uv, loss_vu, gap_uv, gap_vu, elapsed_s))

    def build(self) -> ThetaTrajectory:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 8
        return ThetaTrajectory(*(np.asarray(c, dtype=float) for c in cols))


THETA_LIMIT = 10.0 * math.pi


def train_representation(
    process: GenProcess,
    state: EncoderState,
    iterations: int,
    rng: np.random.Generator,
    batch_size: int = 64,
    redraw_every: int = 5,
) -> ThetaTrajectory:
    """Alternate predictor updates on train batches with encoder updates on
    transfer batches, redrawing the intervention on a fixed schedule."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    traj = _TrajectoryBuilder()
    for it in range(1, iterations + 1):
        if (it - 1) % redraw_every == 0:
            redraw_intervention(process, rng)
        train_batch = gen_batch(process, "train", batch_size, rng)
        transfer_batch = gen_batch(process, "transfer", batch_size, rng)
        t0 = time.perf_counter()
        loss_uv, loss_vu = predictor_step(state, train_batch)
        gap_uv, gap_vu = encoder_step(state, transfer_batch, (loss_uv, loss_vu))
        elapsed = time.perf_counter() - t0
        err = theta_error(state.theta_e, process.theta_d)
        traj.add(it, state.theta_e, err, loss_uv, loss_vu, gap_uv, gap_vu, elapsed)
        if abs(state.theta_e) > THETA_LIMIT:
            raise EncoderDiverged(traj.build())
    return traj.build()


@dataclass
class BaselineRepConfig:
    """Settings for the adaptation-speed counterpart trained on the regret."""

    inner_steps: int = 5
    inner_lr: float = 0.05
    gamma_lr: float = 0.1
    lr_encoder: float = 0.01
    lr_predictor: float = 0.05
    batch_size: int = 64
    redraw_every: int = 5
    hidden: int = 16

    def __post_init__(self):
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")


def baseline_replearn(
    process: GenProcess,
    config: BaselineRepConfig,
    iterations: int,
    rng: np.random.Generator,
    theta_e: float | None = None,
) -> ThetaTrajectory:
    """Meta-learn the encoder angle from adaptation speed.

    Each iteration clones the predictors, adapts the clones on transfer
    samples for ``inner_steps`` gradient steps, scores both directions by
    their accumulated adapted log-likelihood, and descends the
    sigmoid-weighted regret with respect to the angle (adapted parameters
    treated as constants) and the weighting variable.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    state = init_encoder_state(
        rng,
        hidden=config.hidden,
        theta_e=theta_e,
        lr_encoder=config.lr_encoder,
        lr_predictor=config.lr_predictor,
    )
    gamma = GammaState(learning_rate=config.gamma_lr)
    traj = _TrajectoryBuilder()
    for it in range(1, iterations + 1):
        if (it - 1) % config.redraw_every == 0:
            redraw_intervention(process, rng)
        train_batch = gen_batch(process, "train", config.batch_size, rng)
        transfer_batch = gen_batch(process, "transfer", config.batch_size, rng)
        t0 = time.perf_counter()
        loss_uv, loss_vu = predictor_step(state, train_batch)

        x, y = transfer_batch
        u, v = rotate(state.theta_e, (x, y))
        clone_uv = copy.deepcopy(state.predictor_uv)
        clone_vu = copy.deepcopy(state.predictor_vu)
        lls_uv = [-clone_uv.loss(u, v)]
        lls_vu = [-clone_vu.loss(v, u)]
        for _ in range(config.inner_steps):
            _, g, g_lv, _, _ = clone_uv.loss_and_grads(u, v)
            clone_uv.apply(g, g_lv, config.inner_lr)
            _, g, g_lv, _, _ = clone_vu.loss_and_grads(v, u)
            clone_vu.apply(g, g_lv, config.inner_lr)
            lls_uv.append(-clone_uv.loss(u, v))
            lls_vu.append(-clone_vu.loss(v, u))
        ll_uv = float(np.mean(lls_uv))
        ll_vu = float(np.mean(lls_vu))

        s = gamma.sigma
        log_z = np.logaddexp(math.log(s) + ll_uv, math.log1p(-s) + ll_vu)
        w_uv = math.exp(math.log(s) + ll_uv - log_z)
        w_vu = 1.0 - w_uv
        _, angle_grad_uv = _encoder_angle_grad(clone_uv, u, v, forward=True)
        _, angle_grad_vu = _encoder_angle_grad(clone_vu, u, v, forward=False)
        # dR/dtheta with adapted weights fixed: R = -log sum of weighted
        # likelihoods, and d ll / d theta = -d loss / d theta.
        regret_grad = w_uv * angle_grad_uv + w_vu * angle_grad_vu
        state.theta_e -= config.lr_encoder * regret_grad
        gamma = gamma_step(gamma, ll_uv, ll_vu)
        elapsed = time.perf_counter() - t0

        err = theta_error(state.theta_e, process.theta_d)
        traj.add(it, state.theta_e, err, loss_uv, loss_vu, -ll_uv, -ll_vu, elapsed)
        if abs(state.theta_e) > THETA_LIMIT:
            raise EncoderDiverged(traj.build())
    return traj.build()
