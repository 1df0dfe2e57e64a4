"""Forced linear models on eigen-time-delay coordinates.

A series ``x`` is delay-embedded with window ``q``, the leading ``r``
eigen time series ``v_1..v_r`` are extracted, and the first ``r - 1`` are
regressed as

    dv/dt = A v + B v_r

with ``v_r`` acting as an external input. Coordinates are time-stamped at
the *end* of their delay window: the sample of ``V`` built from
``x_k..x_{k+q-1}`` carries time ``t0 + (k + q - 1) dt``, so everything
downstream (forcing activity, lead times) is causal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import DelayDecomposition, build_hankel, decompose, project
from .regression import fit_linear, stlsq
from .timeseries import TimeSeries, central_difference, fmt


class ModelError(ValueError):
    """Invalid model inputs (shapes, ranks, sampling)."""


@dataclass(frozen=True)
class HavokModel:
    """``dv/dt = A v + B v_r`` with the delay basis needed to compute ``v`` from data.

    ``modes`` (q x r) and ``sigmas`` (r) are empty for hand-built models
    such as :func:`idealized_lorenz_model`.
    """

    A: np.ndarray
    B: np.ndarray
    r: int
    dt: float
    modes: np.ndarray = field(default=None, repr=False)
    sigmas: np.ndarray = field(default=None, repr=False)
    q: int = 0
    m: int = 0
    source: str = ""

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float).reshape(-1, 1)
        n = self.r - 1
        if A.shape != (n, n) or B.shape != (n, 1):
            raise ModelError(f"A must be {n}x{n} and B {n}x1 for r={self.r}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ModelError("non-finite model coefficients")
        for arr in (A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.modes is not None and np.size(self.modes):
            modes = np.array(self.modes, dtype=float)
            sig = np.array(self.sigmas, dtype=float)
            if modes.shape != (self.q, self.r) or sig.shape != (self.r,):
                raise ModelError("modes must be q x r and sigmas length r")
            modes.setflags(write=False)
            sig.setflags(write=False)
            object.__setattr__(self, "modes", modes)
            object.__setattr__(self, "sigmas", sig)
        else:
            object.__setattr__(self, "modes", None)
            object.__setattr__(self, "sigmas", None)

    @property
    def has_basis(self) -> bool:
        return self.modes is not None

    def skewness(self) -> float:
        """``||A + A^T||_F / ||A||_F`` (0 for a skew-symmetric A)."""
        return float(np.linalg.norm(self.A + self.A.T) / np.linalg.norm(self.A))


def coordinates_series(V: np.ndarray, ts: TimeSeries, q: int) -> list[TimeSeries]:
    """Wrap columns of ``V`` as series stamped at the end of each delay window."""
    t0 = ts.t0 + (q - 1) * ts.dt
    return [TimeSeries(t0, ts.dt, V[:, j]) for j in range(V.shape[1])]


def regress(V: np.ndarray, dt: float, threshold: float = 0.0):
    """Least-squares (optionally STLSQ-sparsified) ``[A | B]`` from eigen time series.

    Derivatives come from the fourth-order central stencil; the same two
    samples per edge are trimmed from every column so rows stay aligned.
    """
    r = V.shape[1]
    dV = central_difference(V[:, : r - 1], dt)
    X = V[2:-2, :r]
    if threshold > 0:
        G = stlsq(X, dV, threshold)[0].T
    else:
        G = fit_linear(X, dV)
    return G[:, : r - 1], G[:, r - 1 :], X, dV


def fit(ts: TimeSeries, q: int, r: int, threshold: float = 0.0, source: str = ""):
    """Build the Hankel matrix, truncate its SVD to rank ``r`` and regress the model.

    Returns ``(model, decomposition)``; the decomposition holds ``r`` columns
    of ``U`` and ``V`` and the full singular spectrum.
    """
    m = len(ts)
    if m < q:
        raise ModelError(f"series shorter than window ({m} < q={q})")
    if not (m > q >= r >= 2):
        raise ModelError(f"need m > q >= r >= 2 (m={m}, q={q}, r={r})")
    H = build_hankel(ts, q)
    if H.p < q:
        raise ModelError(f"series too short for window q={q}: need m >= {2 * q - 1}")
    dec = decompose(H, n_components=r)
    if dec.r < r:
        raise ModelError(f"rank {r} exceeds available rank {dec.numerical_rank}")
    if dec.V.shape[0] < 5:
        raise ModelError("too few delay columns to differentiate")
    A, B, _, _ = regress(dec.V, ts.dt, threshold)
    model = HavokModel(A, B, r, ts.dt, dec.U, dec.sigma, q, m, source)
    return model, dec


def embed_series(model: HavokModel, ts: TimeSeries) -> np.ndarray:
    """All ``r`` eigen-time-delay coordinates of ``ts`` in the model's basis."""
    if not model.has_basis:
        raise ModelError("model has no delay basis (modes/sigmas)")
    if len(ts) < model.q:
        raise ModelError(f"series shorter than window ({len(ts)} < q={model.q})")
    if not np.isclose(ts.dt, model.dt, rtol=1e-9, atol=0):
        raise ModelError(f"series dt {ts.dt} differs from model dt {model.dt}")
    return project(build_hankel(ts, model.q), model.modes, model.sigmas)


def extract_forcing(model: HavokModel, ts: TimeSeries) -> TimeSeries:
    """Streaming forcing ``v_r``: the series correlated with the last retained mode.

    ``v_r(t_k) = sum_j modes[j, r-1] x_{k+j} / sigmas[r-1]``, stamped at the
    end of each window.
    """
    # same projection call as the training decomposition, so the training
    # series reproduces V[:, r-1] exactly (summation order matters here:
    # sigma_r can be ~1e-13 sigma_1)
    col = embed_series(model, ts)[:, -1]
    return TimeSeries(ts.t0 + (model.q - 1) * ts.dt, ts.dt, col)


def rk4_propagator(A, B, h):
    """Matrices ``(M, N0, N1)`` with one RK4 step of ``v' = A v + B u(t)``,
    ``u`` linear between samples, equal to ``v1 = M v0 + N0 u0 + N1 u1``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    n = A.shape[0]
    I = np.eye(n)
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    M = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    # stage inputs: k1 <- u0, k2,k3 <- (u0+u1)/2, k4 <- u1
    # v1 = v0 + h/6 (k1 + 2k2 + 2k3 + k4); expand each stage's input dependence
    hB = h * B
    # dk/du for stages, in units of h*B
    k1_u0 = hB
    k2_u0 = hA @ k1_u0 / 2 + hB / 2
    k2_u1 = hB / 2
    k3_u0 = hA @ k2_u0 / 2 + hB / 2
    k3_u1 = hA @ k2_u1 / 2 + hB / 2
    k4_u0 = hA @ k3_u0
    k4_u1 = hA @ k3_u1 + hB
    N0 = (k1_u0 + 2 * k2_u0 + 2 * k3_u0 + k4_u0) / 6
    N1 = (2 * k2_u1 + 2 * k3_u1 + k4_u1) / 6
    return M, N0[:, 0], N1[:, 0]


def simulate(model: HavokModel, forcing: TimeSeries, v0) -> np.ndarray:
    """Integrate ``dv/dt = A v + B v_r(t)`` with RK4 on the forcing grid.

    The forcing is linear between samples (midpoint stages use the average
    of neighbours). Returns ``len(forcing) x (r - 1)`` states aligned with
    the forcing timestamps; row 0 is ``v0``.
    """
    if not np.isclose(forcing.dt, model.dt, rtol=1e-9, atol=0):
        raise ModelError(f"forcing dt {forcing.dt} differs from model dt {model.dt}")
    v = np.array(v0, dtype=float).reshape(-1)
    if v.shape != (model.r - 1,):
        raise ModelError(f"v0 must have length {model.r - 1}")
    M, N0, N1 = rk4_propagator(model.A, model.B, model.dt)
    u = forcing.values
    n = len(u)
    out = np.empty((n, v.size))
    out[0] = v
    # input contribution for every step at once; the state recursion stays sequential
    drive = np.outer(u[:-1], N0) + np.outer(u[1:], N1)
    Mt = M.T
    for k in range(1, n):
        v = v @ Mt + drive[k - 1]
        out[k] = v
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise ModelError(f"non-finite state at step {bad}")
    return out


def eigenvalues(model_or_A) -> np.ndarray:
    """Eigenvalues of ``A`` sorted by ``|Im|`` ascending, conjugates adjacent (+Im first)."""
    A = model_or_A.A if isinstance(model_or_A, HavokModel) else np.asarray(model_or_A, float)
    if not np.all(np.isfinite(A)):
        raise ModelError("non-finite matrix")
    lam = np.linalg.eigvals(A)
    order = np.lexsort((-lam.imag, lam.real, np.round(np.abs(lam.imag), 10)))
    return lam[order]


def harmonic_ratio_report(eigs, tol: float = 1e-12) -> list[dict]:
    """For each oscillatory pair: ``Im / Im_slowest`` and distance to the nearest integer."""
    eigs = np.asarray(eigs, dtype=complex)
    freqs = np.sort(eigs.imag[eigs.imag > tol])
    if freqs.size == 0:
        raise ValueError("no oscillatory eigenvalue pair")
    base = freqs[0]
    rows = []
    for k, w in enumerate(freqs):
        ratio = w / base
        rows.append(
            {"pair": k + 1, "imag": float(w), "ratio": float(ratio),
             "distance": float(abs(ratio - round(ratio)))}
        )
    return rows


_IDEAL_SUPER = [-5, -10, -15, -20, 25, -30, -35, -40, 45, -50, -55, 60, -65]


def idealized_lorenz_model() -> HavokModel:
    """Integer-valued 14-coordinate model: tridiagonal with zero diagonal,
    off-diagonal magnitudes 5, 10, ..., 65 and forcing only into ``v_14``
    (coefficient -70)."""
    A = np.zeros((14, 14))
    for i, a in enumerate(_IDEAL_SUPER):
        A[i, i + 1] = a
        A[i + 1, i] = -a
    B = np.zeros((14, 1))
    B[-1, 0] = -70.0
    return HavokModel(A, B, 15, 0.001, source="idealized Lorenz")


# -- serialization ---------------------------------------------------------------


def _block(name, arr):
    arr = np.atleast_2d(arr)
    lines = [f"{name} {arr.shape[0]} {arr.shape[1]}"]
    lines += [" ".join(fmt(v) for v in row) for row in arr]
    return lines


def save_model(model: HavokModel, path) -> Path:
    """Plain-text model file: ``key = value`` header, then A, B, modes, sigmas.

    Every number is written with 17 significant digits.
    """
    lines = [
        "# havok model",
        f"q = {model.q}",
        f"r = {model.r}",
        f"dt = {fmt(model.dt)}",
        f"m = {model.m}",
        f"source = {model.source}",
    ]
    lines += _block("A", model.A)
    lines += _block("B", model.B)
    if model.has_basis:
        lines += _block("modes", model.modes)
        lines += _block("sigmas", model.sigmas[None, :])
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_model(path) -> HavokModel:
    text = Path(path).read_text().splitlines()
    header, blocks = {}, {}
    i = 0
    while i < len(text):
        line = text[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            k, v = line.split("=", 1)
            header[k.strip()] = v.strip()
            continue
        name, rows, cols = line.split()
        rows, cols = int(rows), int(cols)
        data = np.array([[float(v) for v in text[i + j].split()] for j in range(rows)])
        blocks[name] = data.reshape(rows, cols)
        i += rows
    try:
        return HavokModel(
            blocks["A"],
            blocks["B"],
            int(header["r"]),
            float(header["dt"]),
            blocks.get("modes"),
            blocks["sigmas"][0] if "sigmas" in blocks else None,
            int(header.get("q", 0)),
            int(header.get("m", 0)),
            header.get("source", ""),
        )
    except KeyError as exc:
        raise ModelError(f"{path}: missing {exc.args[0]!r} in model file") from None
