"""Box discretisation of a trajectory, Ulam transition matrices and
almost-invariant sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .timeseries import Trajectory

PAD = 0.01
DEFAULT_BOXES = 20
POWER_TOL = 1e-10
POWER_MAXITER = 100_000
ANNIHILATED = 1e-12  # norm of a lazy iterate, relative to the unit start
LORENZ_LOBES = np.array(
    [[np.sqrt(72.0), np.sqrt(72.0), 27.0], [-np.sqrt(72.0), -np.sqrt(72.0), 27.0]]
)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoxGrid:
    """Uniform axis-aligned boxes covering ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray
    counts: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        counts = tuple(int(c) for c in self.counts)
        if lo.shape != hi.shape or lo.ndim != 1 or len(counts) != lo.size:
            raise ValueError("lower, upper and counts must have matching dimension")
        if any(c < 2 for c in counts):
            raise ValueError("need at least 2 boxes per dimension")
        if not np.all(hi > lo):
            raise ValueError("upper must exceed lower in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def around(cls, states, counts=DEFAULT_BOXES, pad=PAD) -> "BoxGrid":
        """Bounding box of ``states`` padded by ``pad`` of its extent per side."""
        X = np.asarray(getattr(states, "states", states), dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("empty trajectory")
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        # degenerate extent: pad by a unit-scale margin instead
        margin = np.where(span > 0, pad * span, np.maximum(np.abs(lo), 1.0) * pad)
        if np.isscalar(counts) or np.ndim(counts) == 0:
            counts = (int(counts),) * X.shape[1]
        return cls(lo - margin, hi + margin, tuple(counts))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return (self.upper - self.lower) / np.array(self.counts)

    @property
    def n_boxes(self) -> int:
        return int(np.prod(self.counts))

    def multi_index(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"points must have dimension {self.dim}")
        idx = np.floor((X - self.lower) / self.width).astype(np.int64)
        return np.clip(idx, 0, np.array(self.counts) - 1)

    def locate(self, X) -> np.ndarray:
        """Flat box index of each point (points outside are clamped to the edge boxes)."""
        return np.ravel_multi_index(self.multi_index(X).T, self.counts)

    def unravel(self, flat) -> np.ndarray:
        return np.column_stack(np.unravel_index(np.asarray(flat), self.counts))

    def centers(self, flat) -> np.ndarray:
        return self.lower + (self.unravel(flat) + 0.5) * self.width


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``P`` over occupied boxes.

    ``boxes[i]`` is the flat grid index of state ``i``; ``pi`` the fraction
    of samples in each box.
    """

    P: sp.csr_matrix = field(repr=False)
    lag: float
    lag_steps: int
    boxes: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)
    grid: BoxGrid = field(repr=False)

    @property
    def n(self) -> int:
        return self.boxes.size


def ulam_matrix(traj: Trajectory, grid: BoxGrid, T: float) -> TransitionMatrix:
    """Count box-to-box transitions ``x_k -> x_{k + T/dt}`` along one orbit.

    The orbit is closed periodically (the last ``T/dt`` samples map to the
    first ones), so every sample is exactly one source and one target. The
    occupancy ``pi`` is then exactly stationary for ``P`` and no row is empty.
    """
    steps = int(round(T / traj.dt))
    if steps < 1 or abs(steps * traj.dt - T) > 1e-9 * max(abs(T), traj.dt):
        raise ValueError(f"lag {T} is not a positive integer multiple of dt={traj.dt}")
    X = traj.states
    if X.shape[0] <= steps:
        raise ValueError("trajectory shorter than one lag")
    flat = grid.locate(X)
    boxes, inv = np.unique(flat, return_inverse=True)
    if boxes.size == 0:
        raise ValueError("empty grid")
    n = boxes.size
    dst = np.roll(inv, -steps)
    C = sp.coo_matrix((np.ones(inv.size), (inv, dst)), shape=(n, n)).tocsr()
    C.sum_duplicates()
    out = np.asarray(C.sum(axis=1)).ravel()
    P = sp.diags(1.0 / out) @ C
    pi = out / out.sum()
    return TransitionMatrix(P.tocsr(), float(T), steps, boxes, pi, grid)


def reversibilize(tm: TransitionMatrix):
    """``R = (P + Pi^-1 P^T Pi) / 2``, returned as a sparse matrix.

    ``Pi R`` is symmetric for any positive ``pi``; rows sum to 1 when ``pi``
    is stationary for ``P``, as it is for :func:`ulam_matrix` output.
    """
    pi = np.asarray(tm.pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("pi must be strictly positive on occupied boxes")
    P = sp.csr_matrix(tm.P)
    R = 0.5 * (P + sp.diags(1.0 / pi) @ P.T @ sp.diags(pi))
    return R.tocsr()


@dataclass(frozen=True)
class AlmostInvariantSets:
    labels: np.ndarray
    lambda2: float
    vector: np.ndarray = field(repr=False)
    iterations: int = 0


def almost_invariant_sets(R, pi, tol=POWER_TOL, max_iter=POWER_MAXITER, seed=0) -> AlmostInvariantSets:
    """Two-set split by the sign of the second right eigenvector of ``R``.

    Power iteration runs on the lazy chain ``(I + S) / 2`` with
    ``S = Pi^1/2 R Pi^-1/2`` symmetric, deflating ``sqrt(pi)``. The lazy
    shift maps the spectrum into ``[0, 1]`` so the iteration converges to
    the second-*largest* eigenvalue rather than the largest in modulus.
    """
    R = sp.csr_matrix(R)
    pi = np.asarray(pi, dtype=float)
    n = R.shape[0]
    if R.shape != (n, n) or pi.shape != (n,):
        raise ValueError("R must be square and pi must match its size")
    if np.any(pi <= 0):
        raise ValueError("pi must be strictly positive")
    pi = pi / pi.sum()
    if n == 1:
        return AlmostInvariantSets(np.zeros(1, int), 0.0, np.ones(1), 0)
    s = np.sqrt(pi)
    S = sp.diags(s) @ R @ sp.diags(1.0 / s)
    S = (0.5 * (S + S.T)).tocsr()
    e = s / np.linalg.norm(s)

    def deflate(x):
        return x - e * (e @ x)

    x = deflate(np.random.default_rng(seed).standard_normal(n))
    x /= np.linalg.norm(x)
    mu = 0.0
    for it in range(1, max_iter + 1):
        y = deflate(0.5 * (x + S @ x))
        ny = np.linalg.norm(y)
        if ny <= ANNIHILATED:
            # start vector annihilated up to rounding: every non-Perron
            # eigenvalue of S is -1 (a pure flip); fall back to dense
            break
        mu = float(x @ y)
        y /= ny
        if np.linalg.norm(y - x) <= tol:
            x = y
            break
        x = y
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
    if ny <= ANNIHILATED:
        w, Q = np.linalg.eigh(S.toarray())
        # drop the Perron vector, keep the next largest
        order = np.argsort(w)[::-1]
        k = next(i for i in order if abs(Q[:, i] @ e) < 0.5)
        x, mu, it = Q[:, k], 0.5 * (1.0 + w[k]), it
    v = x / s
    j = int(np.argmax(np.abs(v)))
    if v[j] < 0:
        v = -v
    lam2 = min(2.0 * mu - 1.0, 1.0)
    labels = (v >= 0).astype(int)
    return AlmostInvariantSets(labels, lam2, v, it)


def box_activity(tm: TransitionMatrix, traj: Trajectory, active, offset: int = 0) -> np.ndarray:
    """Majority vote per occupied box of a per-sample boolean ``active``.

    ``active[k]`` refers to trajectory sample ``k + offset``. Boxes without
    any labelled sample are marked inactive.
    """
    active = np.asarray(active, bool)
    idx = np.arange(active.size) + int(offset)
    ok = (idx >= 0) & (idx < traj.states.shape[0])
    flat = tm.grid.locate(traj.states[idx[ok]])
    pos = np.searchsorted(tm.boxes, flat)
    hits = np.bincount(pos, weights=active[ok].astype(float), minlength=tm.n)
    tot = np.bincount(pos, minlength=tm.n)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(tot > 0, hits / np.maximum(tot, 1), 0.0)
    return (frac > 0.5).astype(int)


def _boundary_distance(coords, labels):
    nb = coords.shape[0]
    lookup = {tuple(c): i for i, c in enumerate(coords)}
    boundary = np.zeros(nb, bool)
    d = coords.shape[1]
    for i, c in enumerate(coords):
        for ax in range(d):
            for step in (-1, 1):
                nbr = c.copy()
                nbr[ax] += step
                j = lookup.get(tuple(nbr))
                if j is not None and labels[j] != labels[i]:
                    boundary[i] = True
                    break
            if boundary[i]:
                break
    if not boundary.any():
        return np.full(nb, np.inf)
    dist, _ = cKDTree(coords[boundary]).query(coords, p=np.inf)
    return dist


@dataclass(frozen=True)
class OverlapReport:
    score: float
    contingency: np.ndarray


def partition_overlap(tm: TransitionMatrix, labels, activity_labels) -> OverlapReport:
    """Fraction of occupied boxes whose Chebyshev distance (in boxes) to the
    nearest boundary of each partition differs by at most one box.

    A boundary box has a face neighbour with a different label. Labels are
    not matched to each other, so complementary partitions score 1.
    ``contingency[a, b]`` counts boxes with set label ``a`` and activity ``b``.
    """
    a = np.asarray(labels, int)
    b = np.asarray(activity_labels, int)
    if a.shape != (tm.n,) or b.shape != (tm.n,):
        raise ValueError(f"grid mismatch: expected {tm.n} labels per partition")
    coords = tm.grid.unravel(tm.boxes)
    da = _boundary_distance(coords, a)
    db = _boundary_distance(coords, b)
    both_inf = np.isinf(da) & np.isinf(db)
    with np.errstate(invalid="ignore"):
        agree = both_inf | (np.abs(da - db) <= 1.0)
    table = np.zeros((2, 2), int)
    np.add.at(table, (np.clip(a, 0, 1), np.clip(b, 0, 1)), 1)
    return OverlapReport(float(agree.mean()), table)


def lobe_labels(tm: TransitionMatrix, labels, centers=LORENZ_LOBES) -> np.ndarray:
    """Set label of the occupied box nearest to each point in ``centers``."""
    pts = tm.grid.centers(tm.boxes)
    _, j = cKDTree(pts).query(np.asarray(centers, dtype=float))
    return np.asarray(labels)[j]
