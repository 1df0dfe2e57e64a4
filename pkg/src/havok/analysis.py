"""Forcing activity, switching events, lead times and tail statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .timeseries import TimeSeries

LORENZ_THRESHOLD = 4e-6
DEFAULT_DEBOUNCE = 0.5


@dataclass(frozen=True)
class ForcingActivity:
    """Samples where ``v_r^2`` exceeds ``threshold``.

    ``segments`` are maximal active runs as half-open index ranges
    ``(start, stop)``; ``t0``/``dt`` give the time base of the mask.
    """

    threshold: float
    mask: np.ndarray = field(repr=False)
    segments: list
    t0: float = 0.0
    dt: float = 1.0

    @property
    def fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.mask.size)


def _runs(mask):
    m = np.concatenate([[False], np.asarray(mask, bool), [False]]).astype(np.int8)
    d = np.diff(m)
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1)
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def activity(forcing: TimeSeries, threshold: float = LORENZ_THRESHOLD) -> ForcingActivity:
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    mask = np.asarray(forcing.values) ** 2 > threshold
    mask.setflags(write=False)
    return ForcingActivity(float(threshold), mask, _runs(mask), forcing.t0, forcing.dt)


@dataclass(frozen=True)
class EventList:
    """Sign-change events of a signal.

    ``indices[k]`` is the first sample after the crossing, ``times[k]`` the
    linearly interpolated crossing time, ``directions[k]`` is +1 for a
    negative-to-positive crossing.
    """

    indices: np.ndarray
    times: np.ndarray
    directions: np.ndarray
    debounce: float
    detector: str = "sign change"

    def __len__(self):
        return len(self.indices)


def detect_transitions(signal: TimeSeries, debounce: float = DEFAULT_DEBOUNCE) -> EventList:
    """Zero crossings of ``signal``; crossings within ``debounce`` (time units)
    of the last kept event are merged into it. Exact zeros inherit the
    previous sign, so touching zero without crossing is not an event."""
    if not debounce > 0:
        raise ValueError("debounce must be positive")
    x = np.asarray(signal.values, dtype=float)
    s = np.sign(x)
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return EventList(np.array([], int), np.array([]), np.array([], int), debounce)
    # forward-fill zeros with the last nonzero sign (leading zeros take the first one)
    idx = np.where(s != 0, np.arange(x.size), 0)
    np.maximum.accumulate(idx, out=idx)
    s = s[idx]
    s[: nz[0]] = s[nz[0]]
    flips = np.flatnonzero(s[1:] != s[:-1]) + 1
    kept_idx, kept_t, kept_dir = [], [], []
    last = -math.inf
    for k in flips:
        x0, x1 = x[k - 1], x[k]
        frac = x0 / (x0 - x1) if x0 != x1 else 0.0
        t = signal.t0 + (k - 1 + frac) * signal.dt
        if t - last < debounce:
            continue
        kept_idx.append(int(k))
        kept_t.append(t)
        kept_dir.append(int(s[k]))
        last = t
    return EventList(np.array(kept_idx, int), np.array(kept_t), np.array(kept_dir, int), debounce)


@dataclass(frozen=True)
class LeadTimeStats:
    hit_rate: float | None
    mean_lead: float | None
    leads: np.ndarray
    hits: np.ndarray
    horizon: float


def lead_time_stats(events: EventList, act: ForcingActivity, horizon: float) -> LeadTimeStats:
    """Whether activity occurs in ``[t_event - horizon, t_event)`` for each event.

    Each active sample holds over ``[t_k, t_k + dt)``. ``leads[k]`` is
    ``t_event - (earliest active time in the window)`` for hits, so it lies
    in ``(0, horizon]``, and NaN otherwise. Events whose window is not
    covered by the activity record are skipped (NaN lead, not counted).
    ``hit_rate``/``mean_lead`` are None when no event can be scored.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    t = act.times
    n = len(events)
    leads = np.full(n, np.nan)
    hits = np.zeros(n, bool)
    scored = np.zeros(n, bool)
    eps = 1e-9 * act.dt
    active_t = t[act.mask]
    for k, te in enumerate(events.times):
        lo = te - horizon
        if t.size == 0 or lo < t[0] - eps or te > t[-1] + act.dt + eps:
            continue
        scored[k] = True
        # first active interval [t_j, t_j + dt) reaching past lo
        i = np.searchsorted(active_t, lo - act.dt, side="right")
        if i < active_t.size and active_t[i] < te:
            hits[k] = True
            leads[k] = te - max(active_t[i], lo)
    if not scored.any():
        return LeadTimeStats(None, None, leads, hits, horizon)
    rate = float(hits[scored].mean())
    mean_lead = float(np.nanmean(leads[hits])) if hits.any() else None
    return LeadTimeStats(rate, mean_lead, leads, hits, horizon)


@dataclass(frozen=True)
class TailReport:
    edges: np.ndarray
    density: np.ndarray
    gaussian_density: np.ndarray
    mean: float
    std: float
    excess_kurtosis: float


def excess_kurtosis(x) -> float:
    """``m4 / m2^2 - 3`` with population central moments."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        raise ValueError("zero-variance data")
    return float(np.mean(d**4) / m2**2 - 3.0)


def tail_report(forcing, bins: int = 100) -> TailReport:
    """Density histogram of the forcing against a moment-matched Gaussian."""
    x = np.asarray(getattr(forcing, "values", forcing), dtype=float)
    if x.size < 100:
        raise ValueError("need at least 100 samples")
    if bins < 10:
        raise ValueError("need at least 10 bins")
    mu, sd = float(x.mean()), float(x.std())
    if sd == 0:
        raise ValueError("zero-variance data")
    density, edges = np.histogram(x, bins=bins, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    gauss = np.exp(-0.5 * ((centers - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    return TailReport(edges, density, gauss, mu, sd, excess_kurtosis(x))
