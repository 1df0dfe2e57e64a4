"""Hankel matrices of delay-shifted samples and their singular value decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .timeseries import TimeSeries

# relative singular-value cutoffs below which V columns are not formed
SNAPSHOT_CUTOFF = 1e-12
# a few ulps: rounding in R leaves exactly-rank-deficient spectra at ~2 eps
QR_CUTOFF = 10 * np.finfo(float).eps
# columns of H processed per block when accumulating H H^T / H^T U
BLOCK = 16384


@dataclass(frozen=True)
class HankelMatrix:
    """Delay matrix ``H[i, j] = x[i + j]`` with ``q`` rows and ``p = m - q + 1`` columns.

    Backed by the source series; ``values`` is a read-only strided view, so
    nothing of size ``q * p`` is allocated until a caller asks for a copy.
    """

    q: int
    source: TimeSeries = field(repr=False)

    @property
    def p(self) -> int:
        return len(self.source) - self.q + 1

    @property
    def shape(self):
        return (self.q, self.p)

    @property
    def values(self) -> np.ndarray:
        return sliding_window_view(self.source.values, self.p)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    def column_blocks(self, size=BLOCK):
        """Yield ``(start, H[:, start:start+size])`` as contiguous arrays."""
        x = self.source.values
        for start in range(0, self.p, size):
            stop = min(self.p, start + size)
            block = sliding_window_view(x[start : stop + self.q - 1], stop - start)
            yield start, np.ascontiguousarray(block)


def build_hankel(ts: TimeSeries, q: int) -> HankelMatrix:
    m = len(ts)
    if not (isinstance(q, (int, np.integer)) and 1 <= q <= m):
        raise ValueError(f"window q must be an integer in [1, {m}], got {q!r}")
    return HankelMatrix(int(q), ts)


@dataclass(frozen=True)
class DelayDecomposition:
    """Leading singular triplets of a Hankel matrix.

    ``U`` (q x r) holds the eigen-time-delay modes, ``V`` (p x r) the eigen
    time series and ``sigma`` the singular values in descending order.
    ``full_sigma`` keeps the whole spectrum for rank selection and energy
    bookkeeping, and ``energy[k]`` is the cumulative squared-singular-value
    fraction of the first ``k + 1`` modes.
    """

    U: np.ndarray = field(repr=False)
    sigma: np.ndarray
    V: np.ndarray = field(repr=False)
    full_sigma: np.ndarray = field(repr=False)
    shape: tuple = (0, 0)
    # number of singular values above the snapshot cutoff
    numerical_rank: int = 0

    @property
    def r(self) -> int:
        return self.sigma.shape[0]

    @property
    def energy(self) -> np.ndarray:
        s2 = self.full_sigma**2
        return np.cumsum(s2) / s2.sum()

    def truncate(self, r: int) -> "DelayDecomposition":
        if not 1 <= r <= self.r:
            raise ValueError(f"rank {r} exceeds the {self.r} available components")
        return DelayDecomposition(
            self.U[:, :r], self.sigma[:r], self.V[:, :r], self.full_sigma,
            self.shape, self.numerical_rank,
        )


def _fix_signs(U):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def gram(H: HankelMatrix) -> np.ndarray:
    """``H @ H.T`` accumulated over column blocks in a fixed order."""
    G = np.zeros((H.q, H.q))
    for _, block in H.column_blocks():
        G += block @ block.T
    return 0.5 * (G + G.T)


def project(H: HankelMatrix, U: np.ndarray, scale=None) -> np.ndarray:
    """``H.T @ U`` (optionally divided column-wise by ``scale``), blockwise."""
    U = np.asarray(U, dtype=float)
    out = np.empty((H.p, U.shape[1]))
    for start, block in H.column_blocks():
        out[start : start + block.shape[1]] = block.T @ U
    if scale is not None:
        out /= scale
    return out


def triangular_factor(H: HankelMatrix) -> np.ndarray:
    """``R`` (q x q) of the thin QR factorisation ``H^T = Q R``, by streaming
    QR over column blocks (TSQR) in a fixed order."""
    R = np.zeros((0, H.q))
    for _, block in H.column_blocks():
        R = np.linalg.qr(np.vstack([R, block.T]), mode="r")
    return R


def decompose(
    H: HankelMatrix, n_components: int | None = None, method: str = "qr"
) -> DelayDecomposition:
    """Singular value decomposition of a (wide) Hankel matrix.

    Both methods only factor a ``q x q`` matrix, then recover the eigen
    time series as ``V = H^T U / sigma``. Components with ``sigma_i <=
    cutoff * sigma_1`` are dropped from ``U`` and ``V`` and
    ``numerical_rank`` records how many survive. Only the leading
    ``n_components`` columns of ``V`` are formed.

    ``method="snapshots"`` eigendecomposes the Gram matrix ``H H^T``
    (``sigma = sqrt(lambda)``, cutoff ``1e-12``). Squaring the matrix
    limits it to singular values above roughly ``1e-8 * sigma_1``.

    ``method="qr"`` (default) takes the SVD of the triangular factor of
    ``H^T`` instead (cutoff: ten machine epsilons), which is as accurate as a
    dense SVD of ``H``. Smooth signals sampled finely, such as the Lorenz
    series at ``dt = 1e-3``, need this: their trailing modes sit near
    ``1e-13 * sigma_1``.
    """
    if not isinstance(H, HankelMatrix):
        raise TypeError("decompose expects a HankelMatrix")
    if np.iscomplexobj(H.source.values):
        raise TypeError("complex data is not supported")
    if H.q > H.p:
        raise ValueError(f"need q <= p (got {H.q} x {H.p}); use a shorter window")
    if not np.any(H.source.values):
        raise ValueError("Hankel matrix is identically zero")
    if method == "snapshots":
        lam, W = np.linalg.eigh(gram(H))
        lam, W = lam[::-1], W[:, ::-1]
        full_sigma = np.sqrt(np.clip(lam, 0.0, None))
        cutoff = SNAPSHOT_CUTOFF
    elif method == "qr":
        _, full_sigma, Wt = np.linalg.svd(triangular_factor(H))
        W = Wt.T
        cutoff = QR_CUTOFF
    else:
        raise ValueError(f"unknown method {method!r}")
    keep = int(np.sum(full_sigma > full_sigma[0] * cutoff))
    keep_v = keep if n_components is None else min(keep, int(n_components))
    U = _fix_signs(W[:, :keep_v])
    sigma = full_sigma[:keep_v].copy()
    V = project(H, U, sigma)
    return DelayDecomposition(U, sigma, V, full_sigma, H.shape, keep)


def svd_direct(H) -> tuple:
    """Reference SVD via LAPACK on the dense matrix, same sign convention."""
    A = np.asarray(H, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, (Vt.T * signs)


def gavish_donoho_omega(beta: float) -> float:
    """Polynomial approximation of the optimal hard-threshold coefficient
    (unknown noise level) for aspect ratio ``beta = q / p``."""
    return 0.56 * beta**3 - 0.95 * beta**2 + 1.82 * beta + 1.43


def select_rank(dec: DelayDecomposition, policy="hard_threshold", value=None) -> int:
    """Truncation rank under one of three policies.

    ``"hard_threshold"``: keep ``sigma_i > omega(q/p) * median(full_sigma)``;
    ``"energy"``: smallest ``r`` with cumulative energy ``>= value``;
    ``"fixed"``: ``value`` itself, bounds-checked.
    """
    if isinstance(policy, tuple):
        policy, value = policy
    available = dec.numerical_rank or dec.r
    if policy == "hard_threshold":
        q, p = dec.shape
        beta = min(q, p) / max(q, p)
        tau = gavish_donoho_omega(beta) * np.median(dec.full_sigma)
        return max(1, int(np.sum(dec.full_sigma > tau)))
    if policy == "energy":
        f = float(value)
        if not 0.0 < f <= 1.0:
            raise ValueError("energy fraction must be in (0, 1]")
        e = dec.energy
        # guard against cumsum rounding just below 1.0
        r = int(np.searchsorted(e, f - 1e-15 * f, side="left")) + 1
        return min(r, len(e))
    if policy == "fixed":
        r = int(value)
        if not 1 <= r <= available:
            raise ValueError(f"fixed rank {r} exceeds available rank {available}")
        return r
    raise ValueError(f"unknown rank policy {policy!r}")


def energy_fraction(dec: DelayDecomposition, r: int) -> float:
    """``sum(sigma[:r]^2) / sum(full_sigma^2)``."""
    n = len(dec.full_sigma)
    if not 1 <= r <= n:
        raise ValueError(f"r must be in [1, {n}]")
    s2 = dec.full_sigma**2
    return float(s2[:r].sum() / s2.sum())
