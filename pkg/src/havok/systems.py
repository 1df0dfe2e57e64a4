"""Example dynamical systems, their integrators, and scalar measurements.

Every system is simulated on a fixed grid ``t_k = k * dt``, ``k = 0..m-1``
with the initial condition as sample 0.

* lorenz, rossler, duffing: classical RK4.
* mackey_glass: RK4 with linearly interpolated delayed values and a
  constant pre-history.
* double_pendulum: variational integrator from the trapezoidal discrete
  action, implicit steps solved by Newton's method.
* magnetic_field: Euler-Maruyama for the stochastically forced dynamo,
  complex amplitude stored as ``(Re A, Im A)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .timeseries import TimeSeries, Trajectory

KINDS = ("lorenz", "rossler", "mackey_glass", "duffing", "double_pendulum", "magnetic_field")

_STATE_DIM = {
    "lorenz": 3,
    "rossler": 3,
    "mackey_glass": 1,
    "duffing": 2,
    "double_pendulum": 4,
    "magnetic_field": 2,
}

DEFAULT_PARAMS = {
    "lorenz": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "rossler": {"a": 0.1, "b": 0.1, "c": 14.0},
    "mackey_glass": {"beta": 2.0, "tau": 2.0, "n": 9.65, "gamma": 1.0},
    "duffing": {"delta": 0.02, "alpha": 1.0, "beta": 5.0, "gamma": 8.0, "omega": 0.5},
    "double_pendulum": {"l1": 1.0, "l2": 1.0, "m1": 1.0, "m2": 1.0, "g": 10.0},
    # B_k = Re + i Im; the drift coefficient mu = 1 follows the model
    # description (the parameter table lists mu = nu = 0, which decays to 0).
    "magnetic_field": {
        "mu": 1.0,
        "nu": 0.0,
        "B1_re": 0.0,
        "B1_im": -0.4605,
        "B2_re": -1.0,
        "B2_im": 0.12,
        "B3_re": 0.0,
        "B3_im": 0.4395,
        "B4_re": -0.06,
        "B4_im": -0.12,
        "b1": 0.25,
        "b2": 0.07,
        "b3": 0.07,
        "b4": 0.25,
        "noise_std": 5.0,
    },
}

UNFORCED_DUFFING = {"delta": 0.0, "alpha": -1.0, "beta": 5.0, "gamma": 0.0, "omega": 0.0}

DEFAULT_IC = {
    "lorenz": (-8.0, 8.0, 27.0),
    "rossler": (1.0, 1.0, 1.0),
    "mackey_glass": (0.5,),
    "duffing": (1.0, 0.0),
    "double_pendulum": (math.pi / 2, math.pi / 2, -0.01, -0.005),
    "magnetic_field": (0.1, 0.0),
}

# (m, dt) of the reference runs
DEFAULT_GRID = {
    "lorenz": (200_000, 0.001),
    "rossler": (500_000, 0.001),
    "mackey_glass": (100_000, 0.001),
    "duffing": (1_000_000, 0.001),
    "double_pendulum": (250_000, 0.001),
    "magnetic_field": (100_000, 1.0),
}

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


class SimulationError(RuntimeError):
    """Integration failed (blow-up or implicit solve non-convergence)."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to reproduce one simulation.

    ``substeps`` subdivides ``dt`` for the stochastic dynamo only: the
    explicit Euler-Maruyama step is unstable at the unit output spacing, so
    the SDE is advanced with ``dt / substeps`` and sampled every ``dt``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    initial_condition: tuple = ()
    dt: float = 0.001
    m: int = 1000
    seed: int | None = None
    substeps: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system {self.kind!r}; choose from {KINDS}")
        params = {**DEFAULT_PARAMS[self.kind], **self.params}
        missing = set(DEFAULT_PARAMS[self.kind]) - set(params)
        if missing:
            raise ValueError(f"missing parameters {sorted(missing)}")
        object.__setattr__(self, "params", {k: float(v) for k, v in params.items()})
        ic = self.initial_condition or DEFAULT_IC[self.kind]
        ic = tuple(float(v) for v in np.atleast_1d(ic))
        if len(ic) != _STATE_DIM[self.kind]:
            raise ValueError(
                f"{self.kind} needs a {_STATE_DIM[self.kind]}-dimensional initial condition"
            )
        object.__setattr__(self, "initial_condition", ic)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.m) < 2:
            raise ValueError("m must be at least 2")
        object.__setattr__(self, "m", int(self.m))
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")
        object.__setattr__(self, "substeps", int(self.substeps))

    @property
    def state_dim(self) -> int:
        return _STATE_DIM[self.kind]


def default_spec(kind: str, **overrides) -> SystemSpec:
    """Reference configuration for ``kind``; ``kind='duffing_unforced'`` selects
    the unforced double-well parameters."""
    params = {}
    if kind == "duffing_unforced":
        kind = "duffing"
        params = dict(UNFORCED_DUFFING)
        overrides.setdefault("m", 360_000)
    m, dt = DEFAULT_GRID[kind]
    base = dict(kind=kind, params=params, dt=dt, m=m)
    if kind == "magnetic_field":
        base.update(seed=0, substeps=100)
    base.update(overrides)
    if "params" in overrides:
        base["params"] = {**params, **overrides["params"]}
    return SystemSpec(**base)


# -- right-hand sides on plain floats (hot loops) -----------------------------


def _lorenz(p):
    s, r, b = p["sigma"], p["rho"], p["beta"]

    def f(t, x, y, z):
        return s * (y - x), x * (r - z) - y, x * y - b * z

    return f


def _rossler(p):
    a, b, c = p["a"], p["b"], p["c"]

    def f(t, x, y, z):
        return -y - z, x + a * y, b + z * (x - c)

    return f


def _duffing(p):
    d, al, be, ga, om = p["delta"], p["alpha"], p["beta"], p["gamma"], p["omega"]

    def f(t, x, v):
        return v, -d * v - al * x - be * x * x * x + ga * math.cos(om * t)

    return f


def _mackey_glass(p):
    be, n, ga = p["beta"], p["n"], p["gamma"]

    def f(x, xd):
        return be * xd / (1.0 + xd**n) - ga * x

    return f


def _magnetic_drift(p):
    mu, nu = p["mu"], p["nu"]
    B1 = complex(p["B1_re"], p["B1_im"])
    B2 = complex(p["B2_re"], p["B2_im"])
    B3 = complex(p["B3_re"], p["B3_im"])
    B4 = complex(p["B4_re"], p["B4_im"])

    def f(A):
        Ab = A.conjugate()
        A2, Ab2 = A * A, Ab * Ab
        return mu * A + nu * Ab + B1 * A2 * A + B2 * A2 * Ab + B3 * A * Ab2 + B4 * Ab2 * Ab

    return f


def _pendulum_constants(p):
    a = (p["m1"] + p["m2"]) * p["l1"] ** 2
    b = p["m2"] * p["l2"] ** 2
    k = p["m2"] * p["l1"] * p["l2"]
    g1 = (p["m1"] + p["m2"]) * p["l1"] * p["g"]
    g2 = p["m2"] * p["l2"] * p["g"]
    return a, b, k, g1, g2


def _pendulum_rhs(p):
    a, b, k, g1, g2 = _pendulum_constants(p)

    def f(t, th1, th2, w1, w2):
        c, s = math.cos(th1 - th2), math.sin(th1 - th2)
        # M(q) qdd = rhs from the Euler-Lagrange equations
        r1 = -k * s * w2 * w2 - g1 * math.sin(th1)
        r2 = k * s * w1 * w1 - g2 * math.sin(th2)
        m12 = k * c
        det = a * b - m12 * m12
        return w1, w2, (b * r1 - m12 * r2) / det, (a * r2 - m12 * r1) / det

    return f


def rhs(spec: SystemSpec, state, t: float = 0.0, delayed_state=None) -> np.ndarray:
    """Vector field of ``spec`` at ``state``.

    For ``mackey_glass`` the delayed value ``x(t - tau)`` must be supplied.
    For ``magnetic_field`` this is the deterministic drift only (noise off).
    """
    x = tuple(float(v) for v in np.atleast_1d(state))
    if len(x) != spec.state_dim:
        raise ValueError(f"{spec.kind} state must have dimension {spec.state_dim}, got {len(x)}")
    p = spec.params
    if spec.kind == "lorenz":
        out = _lorenz(p)(t, *x)
    elif spec.kind == "rossler":
        out = _rossler(p)(t, *x)
    elif spec.kind == "duffing":
        out = _duffing(p)(t, *x)
    elif spec.kind == "mackey_glass":
        if delayed_state is None:
            raise ValueError("mackey_glass needs delayed_state = x(t - tau)")
        out = (_mackey_glass(p)(x[0], float(np.atleast_1d(delayed_state)[0])),)
    elif spec.kind == "double_pendulum":
        out = _pendulum_rhs(p)(t, *x)
    else:
        A = _magnetic_drift(p)(complex(x[0], x[1]))
        out = (A.real, A.imag)
    return np.array(out, dtype=float)


# -- integrators -----------------------------------------------------------------


def rk4(f, x0, t0: float, dt: float, m: int) -> np.ndarray:
    """Fixed-step classical RK4 for ``f(t, *x) -> tuple``; returns ``m`` samples."""
    n = len(x0)
    out = np.empty((m, n))
    x = [float(v) for v in x0]
    h, h2, h6 = dt, 0.5 * dt, dt / 6.0
    out[0] = x
    rng = range(n)
    for k in range(1, m):
        t = t0 + (k - 1) * dt
        k1 = f(t, *x)
        k2 = f(t + h2, *[x[i] + h2 * k1[i] for i in rng])
        k3 = f(t + h2, *[x[i] + h2 * k2[i] for i in rng])
        k4 = f(t + h, *[x[i] + h * k3[i] for i in rng])
        x = [x[i] + h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in rng]
        if not all(math.isfinite(v) for v in x):
            raise SimulationError("non-finite state", step=k)
        out[k] = x
    return out


def _rk4_3(f, x0, dt, m):
    # unrolled variant of rk4 for the 3-d autonomous flows (~3x faster)
    out = np.empty((m, 3))
    x, y, z = (float(v) for v in x0)
    h2, h6 = 0.5 * dt, dt / 6.0
    out[0] = (x, y, z)
    for k in range(1, m):
        a1, b1, c1 = f(0.0, x, y, z)
        a2, b2, c2 = f(0.0, x + h2 * a1, y + h2 * b1, z + h2 * c1)
        a3, b3, c3 = f(0.0, x + h2 * a2, y + h2 * b2, z + h2 * c2)
        a4, b4, c4 = f(0.0, x + dt * a3, y + dt * b3, z + dt * c3)
        x += h6 * (a1 + 2.0 * (a2 + a3) + a4)
        y += h6 * (b1 + 2.0 * (b2 + b3) + b4)
        z += h6 * (c1 + 2.0 * (c2 + c3) + c4)
        out[k] = (x, y, z)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise SimulationError("non-finite state", step=bad)
    return out


def simulate_delay(f, history: float, tau: float, dt: float, m: int) -> np.ndarray:
    """RK4 for ``x' = f(x, x(t - tau))`` with constant history for ``t <= 0``.

    Delayed values at full and half steps come from linear interpolation in
    the stored solution.
    """
    x = np.empty(m)
    x[0] = history
    lag = tau / dt

    def delayed(s):
        # value at grid position s (may be fractional or negative)
        if s <= 0.0:
            return history
        i = int(s)
        frac = s - i
        if frac == 0.0:
            return x[i]
        return x[i] + frac * (x[i + 1] - x[i])

    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(1, m):
        xk = x[k - 1]
        s = (k - 1) - lag
        d0, dh, d1 = delayed(s), delayed(s + 0.5), delayed(s + 1.0)
        k1 = f(xk, d0)
        k2 = f(xk + h2 * k1, dh)
        k3 = f(xk + h2 * k2, dh)
        k4 = f(xk + dt * k3, d1)
        xn = xk + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        if not math.isfinite(xn):
            raise SimulationError("non-finite state", step=k)
        x[k] = xn
    return x


def pendulum_energy(params, states) -> np.ndarray:
    """Total energy T + V for rows ``(theta1, theta2, omega1, omega2)``."""
    a, b, k, g1, g2 = _pendulum_constants({**DEFAULT_PARAMS["double_pendulum"], **params})
    s = np.atleast_2d(states)
    th1, th2, w1, w2 = s.T
    T = 0.5 * a * w1**2 + 0.5 * b * w2**2 + k * w1 * w2 * np.cos(th1 - th2)
    V = g1 * (1 - np.cos(th1)) + g2 * (1 - np.cos(th2))
    return T + V


def simulate_pendulum(params, x0, dt: float, m: int) -> np.ndarray:
    """Variational integrator from the trapezoidal discrete Lagrangian

        L_d(q0, q1) = dt/2 * [L(q0, v) + L(q1, v)],  v = (q1 - q0) / dt,

    in position-momentum form: solve ``p_k + D1 L_d(q_k, q_{k+1}) = 0`` for
    ``q_{k+1}`` by Newton, then ``p_{k+1} = D2 L_d(q_k, q_{k+1})``. Reported
    angular velocities are ``M(q)^-1 p`` (continuous Legendre map).
    """
    a, b, k, g1, g2 = _pendulum_constants(params)
    h = dt

    def dL(q1, q2, v1, v2):
        # (dL/dq1, dL/dq2, dL/dv1, dL/dv2)
        c, s = math.cos(q1 - q2), math.sin(q1 - q2)
        ks = k * s * v1 * v2
        return (
            -ks - g1 * math.sin(q1),
            ks - g2 * math.sin(q2),
            a * v1 + k * c * v2,
            b * v2 + k * c * v1,
        )

    def momentum(q1, q2, w1, w2):
        c = math.cos(q1 - q2)
        return a * w1 + k * c * w2, b * w2 + k * c * w1

    def velocity(q1, q2, p1, p2):
        m12 = k * math.cos(q1 - q2)
        det = a * b - m12 * m12
        return (b * p1 - m12 * p2) / det, (a * p2 - m12 * p1) / det

    out = np.empty((m, 4))
    q1, q2, w1, w2 = (float(v) for v in x0)
    p1, p2 = momentum(q1, q2, w1, w2)
    out[0] = (q1, q2, w1, w2)
    for step in range(1, m):
        # unknown is the displacement d = q_{k+1} - q_k, which keeps v = d / h
        # accurate once the angles have wound up over many revolutions
        d1, d2 = h * w1, h * w2
        for _ in range(NEWTON_MAXITER):
            v1, v2 = d1 / h, d2 / h
            n1, n2 = q1 + d1, q2 + d2
            A0 = dL(q1, q2, v1, v2)
            A1 = dL(n1, n2, v1, v2)
            # residual p_k + D1 L_d
            F1 = p1 + 0.5 * h * A0[0] - 0.5 * (A0[2] + A1[2])
            F2 = p2 + 0.5 * h * A0[1] - 0.5 * (A0[3] + A1[3])
            if abs(F1) <= NEWTON_TOL and abs(F2) <= NEWTON_TOL:
                break
            s0 = math.sin(q1 - q2)
            c0 = math.cos(q1 - q2)
            s1 = math.sin(q1 - q2 + d1 - d2)
            c1 = math.cos(q1 - q2 + d1 - d2)
            # mixed partials L_qv[i][j] = d^2 L / dq_i dv_j
            Q0 = ((-k * s0 * v2, -k * s0 * v1), (k * s0 * v2, k * s0 * v1))
            Q1 = ((-k * s1 * v2, -k * s1 * v1), (k * s1 * v2, k * s1 * v1))
            M0 = ((a, k * c0), (k * c0, b))
            M1 = ((a, k * c1), (k * c1, b))
            J = [
                [
                    0.5 * Q0[i][j] - 0.5 * ((M0[i][j] + M1[i][j]) / h + Q1[j][i])
                    for j in range(2)
                ]
                for i in range(2)
            ]
            det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
            d1 -= (J[1][1] * F1 - J[0][1] * F2) / det
            d2 -= (J[0][0] * F2 - J[1][0] * F1) / det
        else:
            raise SimulationError("Newton iteration did not converge", step=step)
        p1 = 0.5 * h * A1[0] + 0.5 * (A0[2] + A1[2])
        p2 = 0.5 * h * A1[1] + 0.5 * (A0[3] + A1[3])
        q1, q2 = n1, n2
        if not (math.isfinite(q1) and math.isfinite(q2)):
            raise SimulationError("non-finite state", step=step)
        w1, w2 = velocity(q1, q2, p1, p2)
        out[step] = (q1, q2, w1, w2)
    return out


def simulate_dynamo(params, x0, dt: float, m: int, seed, substeps: int = 1) -> np.ndarray:
    """Euler-Maruyama for ``dA = drift(A) dt + f(A, xi) sqrt(h)`` with
    ``f = (b1 xi1 + i b3 xi3) Re A + (b2 xi2 + i b4 xi4) Im A`` and
    ``xi_j ~ N(0, noise_std^2)`` independent per internal step ``h``.
    """
    drift = _magnetic_drift(params)
    b1, b2, b3, b4 = params["b1"], params["b2"], params["b3"], params["b4"]
    rng = np.random.default_rng(seed)
    h = dt / substeps
    sq = math.sqrt(h)
    std = params["noise_std"]
    out = np.empty((m, 2))
    A = complex(x0[0], x0[1])
    out[0] = (A.real, A.imag)
    chunk = max(1, 100_000 // substeps)
    noise = None
    for k in range(1, m):
        j = (k - 1) % chunk
        if j == 0:
            noise = (rng.standard_normal((chunk, substeps, 4)) * (std * sq)).tolist()
        for n1, n2, n3, n4 in noise[j]:
            re, im = A.real, A.imag
            A = A + drift(A) * h + complex(b1 * n1 * re + b2 * n2 * im, b3 * n3 * re + b4 * n4 * im)
        if not (math.isfinite(A.real) and math.isfinite(A.imag)):
            raise SimulationError("non-finite state", step=k)
        out[k] = (A.real, A.imag)
    return out


def simulate(spec: SystemSpec) -> Trajectory:
    """Integrate ``spec`` on its fixed grid and return the sampled trajectory."""
    p, x0, dt, m = spec.params, spec.initial_condition, spec.dt, spec.m
    if spec.kind == "lorenz":
        states = _rk4_3(_lorenz(p), x0, dt, m)
    elif spec.kind == "rossler":
        states = _rk4_3(_rossler(p), x0, dt, m)
    elif spec.kind == "duffing":
        states = rk4(_duffing(p), x0, 0.0, dt, m)
    elif spec.kind == "mackey_glass":
        states = simulate_delay(_mackey_glass(p), x0[0], p["tau"], dt, m)
    elif spec.kind == "double_pendulum":
        states = simulate_pendulum(p, x0, dt, m)
    else:
        states = simulate_dynamo(p, x0, dt, m, spec.seed, spec.substeps)
    return Trajectory(0.0, dt, states)


# -- measurements ----------------------------------------------------------------

_NAMED = {
    "lorenz": {"x": 0, "y": 1, "z": 2},
    "rossler": {"x": 0, "y": 1, "z": 2},
    "mackey_glass": {"x": 0},
    "duffing": {"x": 0, "v": 1},
    "double_pendulum": {"theta1": 0, "theta2": 1, "omega1": 2, "omega2": 3},
    "magnetic_field": {"Re(A)": 0, "Im(A)": 1, "re": 0, "im": 1},
}

DEFAULT_MEASUREMENT = {
    "lorenz": "x",
    "rossler": "x",
    "mackey_glass": "x",
    "duffing": "x",
    "double_pendulum": "sin(theta1)",
    "magnetic_field": "Re(A)",
}


def measure(traj: Trajectory, selector, kind: str | None = None) -> TimeSeries:
    """Apply a scalar observable sample-wise.

    ``selector`` is a component index, or a name: a state variable of
    ``kind`` (``"x"``, ``"Re(A)"``, ...), ``"sin(theta1)"`` or
    ``"cos(2theta1)"`` for the double pendulum, or ``"|A|"``.
    """
    s = traj.states
    if isinstance(selector, (int, np.integer)):
        if not 0 <= selector < traj.dim:
            raise ValueError(f"component {selector} out of range for dimension {traj.dim}")
        return traj.component(int(selector))
    name = str(selector).replace(" ", "")
    if name.isdigit():
        return measure(traj, int(name), kind)
    if name in ("sin(theta1)", "cos(2theta1)", "cos(2*theta1)"):
        if traj.dim != 4:
            raise ValueError(f"{selector!r} needs a double-pendulum trajectory")
        vals = np.sin(s[:, 0]) if name.startswith("sin") else np.cos(2 * s[:, 0])
        return TimeSeries(traj.t0, traj.dt, vals)
    if name == "|A|":
        if traj.dim != 2:
            raise ValueError("|A| needs a magnetic-field trajectory")
        return TimeSeries(traj.t0, traj.dt, np.hypot(s[:, 0], s[:, 1]))
    table = _NAMED.get(kind, {}) if kind else {}
    if not table:
        # fall back to the unique system whose names fit the dimension
        for k, names in _NAMED.items():
            if _STATE_DIM[k] == traj.dim and name in names:
                table = names
                break
    if name not in table or table[name] >= traj.dim:
        raise ValueError(f"invalid measurement selector {selector!r}")
    return traj.component(table[name])


__all__ = [
    "KINDS",
    "SystemSpec",
    "SimulationError",
    "default_spec",
    "rhs",
    "rk4",
    "simulate",
    "simulate_delay",
    "simulate_pendulum",
    "simulate_dynamo",
    "pendulum_energy",
    "measure",
    "DEFAULT_MEASUREMENT",
]
