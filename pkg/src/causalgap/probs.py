"""Exact arithmetic for small categorical distributions.

Everything downstream (direction scoring, experiment harnesses) builds on
these tables: cause/effect pairs sharing an invariant conditional,
marginalization and Bayes inversion, entropy and KL identities, and seeded
sampling. All information quantities are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

A_TO_B = "A->B"
B_TO_A = "B->A"

SUM_ATOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; run k of a sweep uses make_rng(base_seed + k)."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _freeze(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


def _probs_of(p) -> np.ndarray:
    return np.asarray(getattr(p, "probs", p), dtype=float)


@dataclass(frozen=True)
class Categorical:
    """A probability vector: entries nonnegative, summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        p = _freeze(self.probs)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("categorical needs a nonempty 1-D probability vector")
        if np.any(p < 0):
            raise ValueError("negative probability entry")
        if abs(p.sum() - 1.0) > SUM_ATOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class ConditionalTable:
    """Row-stochastic table; row i is the outcome distribution given value i.

    ``degenerate_rows`` lists rows that had to be replaced by a uniform
    distribution because the conditioning value had zero probability.
    """

    rows: np.ndarray
    degenerate_rows: tuple = ()

    def __post_init__(self):
        r = _freeze(self.rows)
        if r.ndim != 2 or 0 in r.shape:
            raise ValueError("conditional table must be a nonempty matrix")
        if np.any(r < 0):
            raise ValueError("negative probability entry")
        if np.any(np.abs(r.sum(axis=1) - 1.0) > SUM_ATOL):
            raise ValueError("conditional rows must each sum to 1")
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "degenerate_rows", tuple(self.degenerate_rows))

    @property
    def shape(self) -> tuple:
        return self.rows.shape


@dataclass(frozen=True)
class JointTable:
    """A joint probability table over (cause value, effect value)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _freeze(self.probs)
        if p.ndim != 2 or 0 in p.shape:
            raise ValueError("joint table must be a nonempty matrix")
        if np.any(p < 0):
            raise ValueError("negative probability entry")
        if abs(p.sum() - 1.0) > SUM_ATOL:
            raise ValueError(f"joint sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple:
        return self.probs.shape


@dataclass(frozen=True)
class DistributionPair:
    """Train and transfer distributions sharing one conditional mechanism.

    The conditional of the effect given the cause is identical in both
    implied joints by construction; only the cause marginal changes.
    """

    cond_b_given_a: ConditionalTable
    marginal_a_train: Categorical
    marginal_a_transfer: Categorical
    true_direction: str = A_TO_B

    def __post_init__(self):
        n = self.cond_b_given_a.shape[0]
        if self.marginal_a_train.dim != n or self.marginal_a_transfer.dim != n:
            raise ValueError("cause marginals must match the conditional's row count")

    @property
    def n_dim(self) -> int:
        return self.cond_b_given_a.shape[0]

    @property
    def m_dim(self) -> int:
        return self.cond_b_given_a.shape[1]

    def train_joint(self) -> JointTable:
        return joint_from_factorization(self.marginal_a_train, self.cond_b_given_a)

    def transfer_joint(self) -> JointTable:
        return joint_from_factorization(self.marginal_a_transfer, self.cond_b_given_a)


@dataclass(frozen=True)
class EntropyDelta:
    """Entropy changes (nats) from the train to the transfer distribution."""

    dh_a: float
    dh_b: float
    dh_ab: float


@dataclass(frozen=True)
class Dataset:
    """Paired samples; integer category indices or real values."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _freeze(self.a, dtype=None)
        b = _freeze(self.b, dtype=None)
        if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
            raise ValueError("a and b must be 1-D arrays of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.size


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def random_categorical(dim: int, rng: np.random.Generator) -> Categorical:
    """Draw a uniform number per value and normalize."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    u = rng.random(dim)
    total = u.sum()
    while total == 0.0:  # unreachable in practice, guards the normalization
        u = rng.random(dim)
        total = u.sum()
    return Categorical(u / total)


def make_pair(n_dim: int, m_dim: int, rng: np.random.Generator) -> DistributionPair:
    """Random invariant conditional plus two independent cause marginals.

    Draw order is fixed (conditional rows, then train marginal, then
    transfer marginal) so a seed pins down the pair.
    """
    rows = np.stack([random_categorical(m_dim, rng).probs for _ in range(n_dim)])
    cond = ConditionalTable(rows)
    p1 = random_categorical(n_dim, rng)
    p2 = random_categorical(n_dim, rng)
    return DistributionPair(cond, p1, p2)


def joint_from_factorization(marginal: Categorical, cond: ConditionalTable) -> JointTable:
    if marginal.dim != cond.shape[0]:
        raise ValueError(
            f"marginal dim {marginal.dim} != conditional rows {cond.shape[0]}"
        )
    return JointTable(marginal.probs[:, None] * cond.rows)


def marginalize(joint: JointTable, axis: int) -> Categorical:
    """Sum out ``axis`` (0 sums out the cause, leaving the effect marginal)."""
    p = joint.probs.sum(axis=axis)
    return Categorical(p / p.sum())


def condition(joint: JointTable, given_axis: int) -> ConditionalTable:
    """Bayes inversion: rows indexed by the value of the ``given_axis`` variable.

    Conditioning values with zero probability get a uniform row and are
    reported in ``degenerate_rows`` so downstream scores stay finite but
    auditable.
    """
    tbl = joint.probs if given_axis == 0 else joint.probs.T
    sums = tbl.sum(axis=1)
    degenerate = tuple(int(i) for i in np.flatnonzero(sums == 0.0))
    rows = np.empty_like(tbl)
    ok = sums > 0
    rows[ok] = tbl[ok] / sums[ok, None]
    rows[~ok] = 1.0 / tbl.shape[1]
    return ConditionalTable(rows, degenerate_rows=degenerate)


# ---------------------------------------------------------------------------
# information quantities (nats)
# ---------------------------------------------------------------------------


def entropy(p) -> float:
    q = _probs_of(p).ravel()
    nz = q > 0
    return float(-(q[nz] * np.log(q[nz])).sum())


def cross_entropy(p, q) -> float:
    """-sum p log q; infinite when q lacks support somewhere p has mass."""
    pv = _probs_of(p).ravel()
    qv = _probs_of(q).ravel()
    nz = pv > 0
    if np.any(qv[nz] == 0.0):
        return float("inf")
    return float(-(pv[nz] * np.log(qv[nz])).sum())


def kl(p, q) -> float:
    """sum p log(p/q); exactly zero when p and q coincide."""
    pv = _probs_of(p).ravel()
    qv = _probs_of(q).ravel()
    nz = pv > 0
    if np.any(qv[nz] == 0.0):
        return float("inf")
    return float((pv[nz] * (np.log(pv[nz]) - np.log(qv[nz]))).sum())


def conditional_entropy(joint: JointTable, given_axis: int) -> float:
    """H(other | given) = H(joint) - H(given marginal)."""
    given = joint.probs.sum(axis=1 - given_axis)
    return entropy(joint) - entropy(given / given.sum())


def conditional_cross_entropy(joint: JointTable, cond: ConditionalTable, given_axis: int) -> float:
    """Expected -log cond(other | given) under the joint."""
    tbl = cond.rows if given_axis == 0 else cond.rows.T
    j = joint.probs
    if tbl.shape != j.shape:
        raise ValueError(f"conditional shape {cond.shape} does not match joint {j.shape}")
    m = j > 0
    if np.any(tbl[m] == 0.0):
        return float("inf")
    return float(-(j[m] * np.log(tbl[m])).sum())


def conditional_kl(
    p2: JointTable,
    cond2: ConditionalTable,
    cond1: ConditionalTable,
    direction: str,
) -> float:
    """Expected log-ratio of the two conditionals under the transfer joint.

    With ``direction`` A->B this is the divergence of the transfer effect
    conditional from the train one; zero iff they agree on the support of
    the transfer joint.
    """
    given_axis = 0 if direction == A_TO_B else 1
    t2 = cond2.rows if given_axis == 0 else cond2.rows.T
    t1 = cond1.rows if given_axis == 0 else cond1.rows.T
    j = p2.probs
    if t2.shape != j.shape or t1.shape != j.shape:
        raise ValueError("conditional shapes do not match the joint")
    m = j > 0
    if np.any(t1[m] == 0.0):
        return float("inf")
    return float((j[m] * (np.log(t2[m]) - np.log(t1[m]))).sum())


def entropy_deltas(pair: DistributionPair) -> EntropyDelta:
    j1 = pair.train_joint()
    j2 = pair.transfer_joint()
    dh_a = entropy(pair.marginal_a_transfer) - entropy(pair.marginal_a_train)
    dh_b = entropy(marginalize(j2, axis=0)) - entropy(marginalize(j1, axis=0))
    dh_ab = entropy(j2) - entropy(j1)
    return EntropyDelta(dh_a, dh_b, dh_ab)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample(joint: JointTable, n: int, rng: np.random.Generator) -> Dataset:
    """n i.i.d. index pairs by inverse CDF over the flattened joint."""
    if n < 0:
        raise ValueError("sample count must be >= 0")
    n_rows, n_cols = joint.shape
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return Dataset(empty, empty.copy())
    cdf = np.cumsum(joint.probs.ravel())
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, n_rows * n_cols - 1)
    return Dataset((idx // n_cols).astype(np.int64), (idx % n_cols).astype(np.int64))
