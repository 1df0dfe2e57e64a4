"""Best-fit linear operators, DMD, and sparse regression on a function library."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PINV_RTOL = 1e-12
STLSQ_MAXITER = 10
MAX_DEGREE = 5
MAX_TRIG = 2


def _as_2d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d")
    return a


def lstsq(X, Y) -> np.ndarray:
    """Minimum-norm least-squares ``C`` with ``X @ C ~ Y`` via a truncated SVD pseudo-inverse."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > PINV_RTOL * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    UtY = U.T @ Y
    return Vt.T @ (inv.reshape((-1,) + (1,) * (UtY.ndim - 1)) * UtY)


def fit_linear(X, Y) -> np.ndarray:
    """Operator ``G`` (k x n) minimising ``||Y - X G^T||_F`` for samples in rows."""
    X, Y = _as_2d(X, "X"), _as_2d(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] < X.shape[1]:
        raise ValueError("need at least as many samples as regressors")
    return lstsq(X, Y).T


@dataclass(frozen=True)
class DmdResult:
    Atilde: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    rank: int = 0


def dmd(X, Xp, r: int) -> DmdResult:
    """Exact DMD with rank-``r`` truncation; snapshots are columns.

    ``X = U S V*``, ``Atilde = U_r* X' V_r S_r^-1``, ``Atilde W = W Lambda``,
    ``Phi = X' V_r S_r^-1 W``.
    """
    X, Xp = _as_2d(X, "X"), _as_2d(Xp, "Xp")
    if X.shape != Xp.shape:
        raise ValueError(f"snapshot shapes differ: {X.shape} vs {Xp.shape}")
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    numerical_rank = int(np.sum(s > PINV_RTOL * s[0])) if s.size else 0
    if not 1 <= r <= numerical_rank:
        raise ValueError(f"rank {r} exceeds numerical rank {numerical_rank} of X")
    Ur, sr, Vr = U[:, :r], s[:r], Vh[:r].conj().T
    XpVS = Xp @ Vr / sr
    Atilde = Ur.conj().T @ XpVS
    lam, W = np.linalg.eig(Atilde)
    Phi = XpVS @ W
    return DmdResult(Atilde, lam, Phi, W, r)


@dataclass(frozen=True)
class SindyLibrarySpec:
    """Polynomials up to ``degree`` followed by ``sin(k x_i), cos(k x_i)`` for ``k <= n_trig``."""

    degree: int = 2
    n_trig: int = 0
    normalize_columns: bool = False

    def __post_init__(self):
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [0, {MAX_DEGREE}]")
        if not 0 <= self.n_trig <= MAX_TRIG:
            raise ValueError(f"n_trig must be in [0, {MAX_TRIG}]")


def library_labels(n: int, spec: SindyLibrarySpec, names=None) -> list[str]:
    names = names or [f"x{i + 1}" for i in range(n)]
    labels = ["1"]
    for d in range(1, spec.degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            parts = []
            for i in sorted(set(combo)):
                e = combo.count(i)
                parts.append(names[i] if e == 1 else f"{names[i]}^{e}")
            labels.append("*".join(parts))
    for k in range(1, spec.n_trig + 1):
        arg = "" if k == 1 else str(k)
        labels += [f"sin({arg}{names[i]})" for i in range(n)]
        labels += [f"cos({arg}{names[i]})" for i in range(n)]
    return labels


def build_library(X, spec: SindyLibrarySpec, names=None):
    """Candidate-function matrix ``Theta`` and its column labels.

    Column order: constant, degree 1, degree 2 (monomials in
    lexicographic order of variable indices), ..., then the sin block and
    cos block for each harmonic. With ``normalize_columns`` every nonzero
    column is scaled to unit 2-norm; the scale factors are returned as the
    third element (all ones otherwise).
    """
    X = _as_2d(X, "X")
    if X.size == 0:
        raise ValueError("empty data")
    n = X.shape[1]
    cols = [np.ones(X.shape[0])]
    for d in range(1, spec.degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            cols.append(np.prod(X[:, combo], axis=1))
    for k in range(1, spec.n_trig + 1):
        cols += [np.sin(k * X[:, i]) for i in range(n)]
        cols += [np.cos(k * X[:, i]) for i in range(n)]
    Theta = np.column_stack(cols)
    scales = np.ones(Theta.shape[1])
    if spec.normalize_columns:
        norms = np.linalg.norm(Theta, axis=0)
        scales = np.where(norms > 0, norms, 1.0)
        Theta = Theta / scales
    return Theta, library_labels(n, spec, names), scales


@dataclass(frozen=True)
class SindyModel:
    """Sparse coefficients ``Xi`` (library_size x n) with ``Xdot ~ Theta(X) Xi``.

    ``Xi`` is in the units of the raw library; ``Xi_normalized`` in the units
    of the (possibly) column-normalised library used for thresholding.
    ``empty_equations`` lists equations whose every term was thresholded out.
    """

    Xi: np.ndarray
    Xi_normalized: np.ndarray
    labels: list
    spec: SindyLibrarySpec
    threshold: float
    empty_equations: tuple = ()
    iterations: int = 0

    def active(self, tol=0.0):
        return np.abs(self.Xi) > tol

    def predict(self, X):
        Theta, _, _ = build_library(X, SindyLibrarySpec(self.spec.degree, self.spec.n_trig))
        return Theta @ self.Xi


def stlsq(Theta, Y, threshold: float, max_iter: int = STLSQ_MAXITER):
    """Sequentially thresholded least squares, one equation per column of ``Y``.

    Returns ``(Xi, iterations)``.
    """
    Xi = lstsq(Theta, Y)
    it = 0
    for it in range(1, max_iter + 1):
        before = Xi != 0
        big = np.abs(Xi) >= threshold
        Xi = np.zeros_like(Xi)
        for j in range(Y.shape[1]):
            if big[:, j].any():
                Xi[big[:, j], j] = lstsq(Theta[:, big[:, j]], Y[:, j])
        if np.array_equal(big, before):
            break
    return Xi, it


def sindy(X, Xdot, spec: SindyLibrarySpec, threshold: float, names=None) -> SindyModel:
    """Identify ``Xdot = Theta(X) Xi`` by STLSQ with cutoff ``threshold``
    applied in normalised-column units when ``spec.normalize_columns``."""
    X, Xdot = _as_2d(X, "X"), _as_2d(Xdot, "Xdot")
    if X.shape[0] != Xdot.shape[0]:
        raise ValueError("X and Xdot must have the same number of samples")
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    Theta, labels, scales = build_library(X, spec, names)
    Xi_n, iterations = stlsq(Theta, Xdot, threshold)
    Xi = Xi_n / scales[:, None]
    empty = tuple(j for j in range(Xi.shape[1]) if not np.any(Xi[:, j]))
    return SindyModel(Xi, Xi_n, labels, spec, float(threshold), empty, iterations)


def save_coefficients(model: SindyModel, path, names=None) -> Path:
    """Coefficient CSV: one row per library term, one column per equation."""
    n = model.Xi.shape[1]
    names = names or [f"d{j + 1}" for j in range(n)]
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", *names])
        for label, row in zip(model.labels, model.Xi):
            w.writerow([label, *(format(float(v), ".17g") for v in row)])
    return path
