"""Trainable model families with losses and analytic gradients.

Count-based maximum likelihood tables, softmax-parameterized tabular
modules trained by gradient ascent, a mixture-structured cause marginal,
and the continuous linear-Gaussian and two-layer network regressors. Every
analytic gradient here is covered by a finite-difference check in the test
suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .probs import A_TO_B, B_TO_A, Categorical, Dataset

DEFAULT_SMOOTHING = 1e-6
VARIANCE_FLOOR = 1e-12

ROLE_MARGINAL = "marginal"
ROLE_CONDITIONAL = "conditional"


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    steps: int = 100
    batch_size: int = 0  # 0 means full batch
    smoothing: float = DEFAULT_SMOOTHING

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def nll(model, data: Dataset) -> float:
    """Average negative log-likelihood of ``data`` under ``model`` (nats)."""
    return model.nll(data)


# ---------------------------------------------------------------------------
# count-based maximum likelihood
# ---------------------------------------------------------------------------


@dataclass
class CountModel:
    """Closed-form table estimates from sample counts with pseudo-count eps.

    Rows of ``counts`` index the conditioning variable for the model's
    direction (cause values for A->B, effect values for B->A).
    """

    counts: np.ndarray
    eps: float
    direction: str
    conditional: np.ndarray = field(init=False)
    marginal: np.ndarray = field(init=False)
    log_conditional: np.ndarray = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        rows, cols = c.shape
        row_sums = c.sum(axis=1)
        denom = row_sums + cols * self.eps
        cond = np.zeros_like(c)
        ok = denom > 0
        cond[ok] = (c[ok] + self.eps) / denom[ok, None]
        self.conditional = cond
        total = c.sum()
        self.marginal = (row_sums + self.eps) / (total + rows * self.eps) if total + rows * self.eps > 0 else np.full(rows, 1.0 / rows)
        with np.errstate(divide="ignore"):
            self.log_conditional = np.log(cond)

    def _index(self, data: Dataset):
        if self.direction == A_TO_B:
            return data.a, data.b
        return data.b, data.a

    def nll(self, data: Dataset) -> float:
        """Average -log P(effect | cause); infinite on unsmoothed unseen cells."""
        rows, targets = self._index(data)
        vals = self.log_conditional[rows, targets]
        return float(-vals.mean())

    def marginal_nll(self, data: Dataset) -> float:
        rows, _ = self._index(data)
        with np.errstate(divide="ignore"):
            return float(-np.log(self.marginal[rows]).mean())


def fit_counts(data: Dataset, direction: str, dims: tuple, eps: float = DEFAULT_SMOOTHING) -> CountModel:
    n_dim, m_dim = dims
    a = np.asarray(data.a, dtype=np.int64)
    b = np.asarray(data.b, dtype=np.int64)
    if data.n and (a.min() < 0 or a.max() >= n_dim or b.min() < 0 or b.max() >= m_dim):
        raise ValueError("sample indices out of range for the given dims")
    counts = np.bincount(a * m_dim + b, minlength=n_dim * m_dim).reshape(n_dim, m_dim).astype(float)
    if direction == B_TO_A:
        counts = counts.T.copy()
    return CountModel(counts, eps, direction)


# ---------------------------------------------------------------------------
# softmax tabular modules
# ---------------------------------------------------------------------------


@dataclass
class TabularSoftmaxModule:
    """Logit-parameterized categorical table trained by gradient ascent.

    One row of logits for a marginal, one row per conditioning value for a
    conditional. The implied probabilities are the row-softmax.
    """

    logits: np.ndarray
    role: str
    direction: str

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a matrix")
        if self.role not in (ROLE_MARGINAL, ROLE_CONDITIONAL):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == ROLE_MARGINAL and self.logits.shape[0] != 1:
            raise ValueError("a marginal module has a single logit row")

    @classmethod
    def from_probs(cls, probs: np.ndarray, role: str, direction: str) -> "TabularSoftmaxModule":
        p = np.asarray(probs, dtype=float)
        if p.ndim == 1:
            p = p[None, :]
        with np.errstate(divide="ignore"):
            return cls(np.log(p), role, direction)

    def probs(self) -> np.ndarray:
        return _softmax(self.logits)

    def _index(self, data: Dataset):
        if self.role == ROLE_CONDITIONAL:
            return (data.a, data.b) if self.direction == A_TO_B else (data.b, data.a)
        own = data.a if self.direction == A_TO_B else data.b
        return np.zeros(own.size, dtype=np.int64), own

    def nll(self, data: Dataset) -> float:
        rows, targets = self._index(data)
        logp = _log_softmax(self.logits)
        return float(-logp[rows, targets].mean())

    def grad(self, data: Dataset) -> np.ndarray:
        """Gradient of the average NLL with respect to the logits."""
        rows, targets = self._index(data)
        n = rows.size
        p = self.probs()
        g = np.zeros_like(self.logits)
        np.add.at(g, (rows, targets), -1.0)
        row_counts = np.bincount(rows, minlength=self.logits.shape[0]).astype(float)
        g += row_counts[:, None] * p
        return g / n

    def step(self, data: Dataset, lr: float) -> None:
        g = self.grad(data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient in {self.role} module ({self.direction})"
            )
        self.logits -= lr * g


def sgd_fit(module: TabularSoftmaxModule, data: Dataset, cfg: TrainConfig):
    """Gradient ascent on the data log-likelihood; returns (module, loss trace).

    The trace holds the full-data NLL before each step plus the final value,
    so trace[t+1] - trace[t] is the effect of step t.
    """
    n = data.n
    bs = cfg.batch_size if 0 < cfg.batch_size < n else n
    trace = np.empty(cfg.steps + 1)
    for t in range(cfg.steps):
        trace[t] = module.nll(data)
        if bs == n:
            batch = data
        else:
            start = (t * bs) % n
            idx = np.arange(start, start + bs) % n
            batch = Dataset(data.a[idx], data.b[idx])
        module.step(batch, cfg.learning_rate)
    trace[cfg.steps] = module.nll(data)
    return module, trace


def grad_norm(module: TabularSoftmaxModule, data: Dataset) -> float:
    """L2 norm of the average-NLL gradient over the module's own parameters."""
    return float(np.linalg.norm(module.grad(data)))


# ---------------------------------------------------------------------------
# mixture-structured cause marginal
# ---------------------------------------------------------------------------


@dataclass
class MixtureMarginal:
    """P(value) = sum_k softmax(theta)_k * row_softmax(phi)_k."""

    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        self.phi = np.array(self.phi, dtype=float)
        if self.theta.ndim != 1 or self.phi.ndim != 2 or self.theta.size != self.phi.shape[0]:
            raise ValueError("theta must be (K,) and phi (K, N)")

    @property
    def k(self) -> int:
        return self.theta.size

    def weights(self) -> np.ndarray:
        return _softmax(self.theta[None, :])[0]

    def components(self) -> np.ndarray:
        return _softmax(self.phi)

    def log_likelihood(self, values: np.ndarray) -> float:
        p = mixture_eval(self).probs
        return float(np.log(p[np.asarray(values, dtype=np.int64)]).mean())

    def grads(self, values: np.ndarray):
        """Gradients of the mean log-likelihood w.r.t. theta and phi."""
        v = np.asarray(values, dtype=np.int64)
        n = v.size
        w = self.weights()
        q = self.components()
        p = w @ q
        resp = w[:, None] * q[:, v] / p[v][None, :]  # (K, n) posterior responsibilities
        g_theta = resp.mean(axis=1) - w
        scatter = np.zeros_like(self.phi).T  # (N, K)
        np.add.at(scatter, v, resp.T)
        g_phi = scatter.T / n - (resp.sum(axis=1) / n)[:, None] * q
        return g_theta, g_phi


def mixture_eval(m: MixtureMarginal) -> Categorical:
    p = m.weights() @ m.components()
    return Categorical(p / p.sum())


def mixture_sgd_step(m: MixtureMarginal, values: np.ndarray, cfg: TrainConfig) -> MixtureMarginal:
    """One ascent step on the mean log-likelihood through theta and phi."""
    g_theta, g_phi = m.grads(values)
    if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_phi))):
        raise FloatingPointError("non-finite mixture gradient")
    m.theta += cfg.learning_rate * g_theta
    m.phi += cfg.learning_rate * g_phi
    return m


# ---------------------------------------------------------------------------
# continuous models
# ---------------------------------------------------------------------------


def _xy(data: Dataset, direction: str):
    if direction == A_TO_B:
        return np.asarray(data.a, dtype=float), np.asarray(data.b, dtype=float)
    return np.asarray(data.b, dtype=float), np.asarray(data.a, dtype=float)


def gaussian_nll(resid: np.ndarray, variance: float) -> float:
    return float(0.5 * np.log(2.0 * np.pi * variance) + (resid**2).mean() / (2.0 * variance))


@dataclass
class LinearGaussian:
    """y = weight * x + bias with homoscedastic Gaussian noise."""

    weight: float
    bias: float
    log_variance: float
    direction: str
    degenerate: bool = False

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.weight * np.asarray(x, dtype=float) + self.bias

    def nll(self, data: Dataset) -> float:
        x, y = _xy(data, self.direction)
        return gaussian_nll(y - self.predict(x), self.variance)

    def grads(self, data: Dataset):
        """Gradients of the mean NLL w.r.t. (weight, bias, log_variance)."""
        x, y = _xy(data, self.direction)
        var = self.variance
        r = self.predict(x) - y
        g_w = float((r * x).mean() / var)
        g_b = float(r.mean() / var)
        g_lv = float(0.5 - (r**2).mean() / (2.0 * var))
        return g_w, g_b, g_lv

    def step(self, data: Dataset, lr: float) -> None:
        g_w, g_b, g_lv = self.grads(data)
        self.weight -= lr * g_w
        self.bias -= lr * g_b
        self.log_variance -= lr * g_lv


def fit_linear(data: Dataset, direction: str) -> LinearGaussian:
    """Least-squares line with residual-variance plug-in.

    A constant predictor column degenerates to an intercept-only model,
    flagged on the result.
    """
    if data.n < 2:
        raise ValueError("need at least 2 samples for a linear fit")
    x, y = _xy(data, direction)
    var_x = x.var()
    if var_x == 0.0:
        resid = y - y.mean()
        lv = math.log(max(resid.var(), VARIANCE_FLOOR))
        return LinearGaussian(0.0, float(y.mean()), lv, direction, degenerate=True)
    w = float(((x - x.mean()) * (y - y.mean())).mean() / var_x)
    b = float(y.mean() - w * x.mean())
    resid = y - (w * x + b)
    lv = math.log(max(float((resid**2).mean()), VARIANCE_FLOOR))
    return LinearGaussian(w, b, lv, direction)


@dataclass
class GaussianMarginal:
    """Trainable univariate Gaussian for the continuous adaptation baseline."""

    mean: float
    log_variance: float
    direction: str  # owns the cause variable for A->B, the effect for B->A

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance)

    def _values(self, data: Dataset) -> np.ndarray:
        return np.asarray(data.a if self.direction == A_TO_B else data.b, dtype=float)

    def nll(self, data: Dataset) -> float:
        return gaussian_nll(self._values(data) - self.mean, self.variance)

    def step(self, data: Dataset, lr: float) -> None:
        v = self._values(data)
        var = self.variance
        r = self.mean - v
        self.mean -= lr * float(r.mean() / var)
        self.log_variance -= lr * float(0.5 - (r**2).mean() / (2.0 * var))


def fit_gaussian_marginal(data: Dataset, direction: str) -> GaussianMarginal:
    v = np.asarray(data.a if direction == A_TO_B else data.b, dtype=float)
    return GaussianMarginal(float(v.mean()), math.log(max(float(v.var()), VARIANCE_FLOOR)), direction)


@dataclass
class TwoLayerNet:
    """Scalar-to-scalar rectifier network with one hidden layer.

    Trained on squared error by mini-batch gradient descent;
    ``log_variance`` turns the fitted regressor into a homoscedastic
    Gaussian conditional for NLL-based scoring.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    direction: str
    log_variance: float = 0.0

    @classmethod
    def init(cls, hidden: int, direction: str, rng: np.random.Generator) -> "TwoLayerNet":
        w1 = rng.normal(0.0, 1.0, hidden)
        b1 = rng.uniform(-0.5, 0.5, hidden)
        w2 = rng.normal(0.0, math.sqrt(2.0 / hidden), hidden)
        return cls(w1, b1, w2, 0.0, direction)

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance)

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        z = self.w1[:, None] * x[None, :] + self.b1[:, None]  # (h, n)
        h = np.maximum(z, 0.0)
        yhat = self.w2 @ h + self.b2
        return yhat, (x, z, h)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, d_yhat: np.ndarray) -> dict:
        """Parameter gradients given upstream d loss / d yhat."""
        x, z, h = cache
        g_w2 = h @ d_yhat
        g_b2 = float(d_yhat.sum())
        dh = self.w2[:, None] * d_yhat[None, :]
        dz = dh * (z > 0)
        g_w1 = dz @ x
        g_b1 = dz.sum(axis=1)
        return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}

    def input_grad(self, cache) -> np.ndarray:
        """d yhat_i / d x_i for each sample."""
        _, z, _ = cache
        return (self.w2[:, None] * (z > 0) * self.w1[:, None]).sum(axis=0)

    def apply_grads(self, grads: dict, lr: float) -> None:
        self.w1 -= lr * grads["w1"]
        self.b1 -= lr * grads["b1"]
        self.w2 -= lr * grads["w2"]
        self.b2 -= lr * grads["b2"]

    def squared_error(self, x: np.ndarray, y: np.ndarray) -> float:
        yhat, _ = self.forward(x)
        return float(((yhat - y) ** 2).mean())

    def squared_error_grads(self, x: np.ndarray, y: np.ndarray) -> dict:
        yhat, cache = self.forward(x)
        d_yhat = 2.0 * (yhat - np.asarray(y, dtype=float)) / x.size
        return self.backward(cache, d_yhat)

    def nll(self, data: Dataset) -> float:
        x, y = _xy(data, self.direction)
        return gaussian_nll(y - self.predict(x), self.variance)


def fit_net(
    data: Dataset,
    direction: str,
    cfg: TrainConfig,
    rng: np.random.Generator,
    hidden: int = 100,
) -> TwoLayerNet:
    """Mini-batch gradient descent on squared error, epochs = cfg.steps."""
    x, y = _xy(data, direction)
    net = TwoLayerNet.init(hidden, direction, rng)
    n = x.size
    bs = cfg.batch_size if 0 < cfg.batch_size < n else n
    for _ in range(cfg.steps):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            grads = net.squared_error_grads(x[idx], y[idx])
            net.apply_grads(grads, cfg.learning_rate)
    resid = y - net.predict(x)
    net.log_variance = math.log(max(float((resid**2).mean()), VARIANCE_FLOOR))
    return net


# ---------------------------------------------------------------------------
# parameter serialization (flat versioned text)
# ---------------------------------------------------------------------------

PARAMS_FORMAT_VERSION = "causalgap-params v1"


def dump_params(params: dict) -> str:
    """Serialize named arrays as text: version line, then name/shape/data."""
    lines = [PARAMS_FORMAT_VERSION]
    for name, arr in params.items():
        a = np.asarray(arr, dtype=float)
        lines.append(f"name {name}")
        lines.append("shape " + " ".join(str(d) for d in a.shape))
        lines.append("data " + " ".join(repr(v) for v in a.ravel()))
    return "\n".join(lines) + "\n"


def load_params(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != PARAMS_FORMAT_VERSION:
        raise ValueError("unrecognized parameter format version")
    params = {}
    i = 1
    while i < len(lines):
        if not lines[i].startswith("name "):
            raise ValueError(f"expected a name line, got {lines[i]!r}")
        name = lines[i][5:]
        shape = tuple(int(s) for s in lines[i + 1].split()[1:])
        values = np.array([float(v) for v in lines[i + 2].split()[1:]])
        params[name] = values.reshape(shape)
        i += 3
    return params
