"""Command-line driver: ``havok <subcommand> [flags]``.

Every subcommand writes plain CSV/text into ``--out-dir`` (17 significant
digits) and a ``key = value`` summary on stdout. Exit codes: 0 success,
1 validation failure, 2 usage/config/I-O error.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, model as hm, systems, transfer
from .embedding import build_hankel, decompose, energy_fraction, select_rank
from .timeseries import (
    CSVFormatError, TimeSeries, fmt, load_csv, load_trajectory_csv, write_csv,
)

SUBCOMMANDS = ("simulate", "embed", "fit", "reconstruct", "forcing", "eigs", "events", "pfsets", "repro")

# rows q and rank r per system (defaults reproduce the Lorenz configuration)
HAVOK_DEFAULTS = {
    "lorenz": (100, 15),
    "rossler": (100, 6),
    "mackey_glass": (100, 4),
    "duffing": (100, 5),
    "duffing_unforced": (100, 5),
    "double_pendulum": (100, 5),
    "magnetic_field": (100, 4),
}

DEFAULTS = {
    "system": "lorenz",
    "input": None,
    "column": None,
    "dt": None,
    "m": None,
    "q": None,
    "rank": None,
    "lambda": 0.0,
    "threshold": analysis.LORENZ_THRESHOLD,
    "horizon": 1.0,
    "debounce": analysis.DEFAULT_DEBOUNCE,
    "grid": transfer.DEFAULT_BOXES,
    "lag": None,
    "seed": None,
    "out_dir": "havok_out",
    "measure": None,
    "idealized": False,
    "model": None,
}


class UsageError(Exception):
    """Bad flags or config: exit status 2."""


def _int(text):
    return int(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _rank(text):
    t = str(text).strip().lower()
    return "auto" if t == "auto" else int(t)


CONVERTERS = {
    "system": str, "input": str, "column": str, "dt": float, "m": _int, "q": _int,
    "rank": _rank, "lambda": float, "threshold": float, "horizon": float,
    "debounce": float, "grid": _int, "lag": float, "seed": _int, "out_dir": str,
    "measure": str, "idealized": _bool, "model": str,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="havok", description="Delay-embedding linear models with intermittent forcing.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("target", nargs="?", help="system name (repro only)")
    add = p.add_argument
    add("--system", help="one of: " + ", ".join(HAVOK_DEFAULTS))
    add("--input", help="CSV file with a 't' column (optional) and data columns")
    add("--column", help="data column of --input (default: first non-t column)")
    add("--measure", help="observable of the simulated state, e.g. x, sin(theta1), Re(A)")
    add("--dt", type=float, help="sample spacing when --input has no t column")
    add("--m", type=int, help="number of simulated samples")
    add("--q", type=int, help="rows of the Hankel matrix")
    add("--rank", type=_rank, help="truncation rank r, or 'auto' for the hard threshold")
    add("--lambda", dest="lambda_", type=float, help="sparsity threshold of the regression (0: least squares)")
    add("--threshold", type=float, help="forcing activity threshold on v_r^2")
    add("--horizon", type=float, help="lead-time window (time units)")
    add("--debounce", type=float, help="minimum separation of switching events (time units)")
    add("--grid", type=int, help="boxes per dimension for the transfer operator")
    add("--lag", type=float, help="transfer-operator lag (default q*dt)")
    add("--seed", type=int, help="noise seed (stochastic systems)")
    add("--out-dir", dest="out_dir", help="directory for all outputs")
    add("--config", help="key = value file; flags override it")
    add("--idealized", action="store_const", const=True, help="eigs: use the integer-valued Lorenz model")
    add("--model", help="model file written by 'fit' (forcing, reconstruct, events, eigs)")
    return p


def read_config(path) -> dict:
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONVERTERS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            out[key] = CONVERTERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: bad value for {key}: {exc}") from None
    return out


def resolve(argv) -> dict:
    """Merge defaults < config file < flags."""
    ns = build_parser().parse_args(argv)
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            cfg.update(read_config(ns.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    flags = vars(ns)
    flags["lambda"] = flags.pop("lambda_")
    for key in CONVERTERS:
        if flags.get(key) is not None:
            cfg[key] = flags[key]
    cfg["command"] = ns.command
    if ns.target is not None:
        if ns.command != "repro":
            raise UsageError(f"unexpected argument {ns.target!r}")
        cfg["system"] = ns.target
    if cfg["input"] is None and cfg["system"] not in HAVOK_DEFAULTS:
        raise UsageError(f"unknown system {cfg['system']!r}")
    return cfg


# -- pipeline pieces -------------------------------------------------------------


def _spec(cfg):
    over = {}
    if cfg["m"] is not None:
        over["m"] = cfg["m"]
    if cfg["seed"] is not None:
        over["seed"] = cfg["seed"]
    return systems.default_spec(cfg["system"], **over)


def _kind(cfg):
    return "duffing" if cfg["system"] == "duffing_unforced" else cfg["system"]


def load_source(cfg):
    """``(trajectory or None, measured series, label)``."""
    if cfg["input"] is not None:
        ts = load_csv(cfg["input"], cfg["column"], dt=cfg["dt"])
        return None, ts, Path(cfg["input"]).name
    traj = systems.simulate(_spec(cfg))
    sel = cfg["measure"] or systems.DEFAULT_MEASUREMENT[_kind(cfg)]
    return traj, systems.measure(traj, sel, _kind(cfg)), cfg["system"]


def _qr(cfg, ts):
    q_def, r_def = HAVOK_DEFAULTS.get(cfg["system"], (100, None)) if cfg["input"] is None else (100, None)
    q = cfg["q"] if cfg["q"] is not None else q_def
    r = cfg["rank"] if cfg["rank"] is not None else (r_def or "auto")
    if q >= len(ts):
        raise hm.ModelError(f"series shorter than window ({len(ts)} samples, q={q})")
    if r == "auto":
        dec = decompose(build_hankel(ts, q))
        # the threshold counts rounding-level values on near-rank-deficient data
        r = max(min(select_rank(dec, "hard_threshold"), dec.numerical_rank), 2)
    return q, r


class Run:
    """Lazily computed pipeline stages shared by the subcommands."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg["out_dir"])
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def source(self):
        return self._get("source", lambda: load_source(self.cfg))

    @property
    def series(self) -> TimeSeries:
        return self.source[1]

    @property
    def fitted(self):
        def go():
            q, r = _qr(self.cfg, self.series)
            return hm.fit(self.series, q, r, self.cfg["lambda"], source=self.source[2])
        return self._get("fit", go)

    @property
    def model(self) -> hm.HavokModel:
        """Model from ``--model`` if given, otherwise fitted to the source."""
        if self.cfg["model"]:
            return self._get("loaded", lambda: hm.load_model(self.cfg["model"]))
        return self.fitted[0]

    @property
    def coordinates(self) -> np.ndarray:
        """Eigen time series of the source in the model's basis."""
        if self.cfg["model"]:
            return self._get("coords", lambda: hm.embed_series(self.model, self.series))
        return self.fitted[1].V

    @property
    def forcing(self) -> TimeSeries:
        return self._get("forcing", lambda: hm.extract_forcing(self.model, self.series))

    @property
    def activity(self):
        return self._get("act", lambda: analysis.activity(self.forcing, self.cfg["threshold"]))

    def path(self, name) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name


def _write_rows(path, header, rows):
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def _complex(z) -> str:
    return f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}i"


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(run: Run, summary):
    traj, ts, _ = run.source
    if traj is None:
        raise UsageError("simulate needs --system, not --input")
    names = [f"x{i + 1}" for i in range(traj.dim)]
    write_csv(run.path("trajectory.csv"), traj, names)
    write_csv(run.path("series.csv"), ts, ["value"])
    summary["samples"] = len(ts)
    summary["dt"] = fmt(ts.dt)


def cmd_embed(run: Run, summary):
    ts = run.series
    q, r = _qr(run.cfg, ts)
    dec = decompose(build_hankel(ts, q), n_components=r)
    _write_rows(
        run.path("singular_values.csv"), ["index", "sigma", "energy"],
        [(str(i + 1), s, e) for i, (s, e) in enumerate(zip(dec.full_sigma, dec.energy))],
    )
    _write_rows(run.path("modes.csv"), [f"u{j + 1}" for j in range(dec.r)], dec.U)
    t0 = ts.t0 + (q - 1) * ts.dt
    write_csv(run.path("coordinates.csv"), [TimeSeries(t0, ts.dt, dec.V[:, j]) for j in range(dec.r)],
              [f"v{j + 1}" for j in range(dec.r)])
    summary.update(q=q, r=dec.r, energy=fmt(energy_fraction(dec, dec.r)))


def cmd_fit(run: Run, summary):
    model, dec = run.fitted
    hm.save_model(model, run.path("model.txt"))
    _write_rows(run.path("A.csv"), [f"v{j + 1}" for j in range(model.r - 1)], model.A)
    _write_rows(run.path("B.csv"), ["b"], model.B)
    t0 = run.series.t0 + (model.q - 1) * run.series.dt
    write_csv(run.path("coordinates.csv"),
              [TimeSeries(t0, model.dt, dec.V[:, j]) for j in range(model.r)],
              [f"v{j + 1}" for j in range(model.r)])
    summary.update(q=model.q, r=model.r, energy=fmt(energy_fraction(dec, model.r)),
                   skewness=fmt(model.skewness()))


def _reconstruction(run: Run):
    model, V, forcing = run.model, run.coordinates, run.forcing
    sim = hm.simulate(model, forcing, V[0, : model.r - 1])
    return V, sim, forcing


def cmd_reconstruct(run: Run, summary):
    V, sim, forcing = _reconstruction(run)
    cols = [TimeSeries(forcing.t0, forcing.dt, sim[:, j]) for j in range(sim.shape[1])]
    write_csv(run.path("reduced_trajectory.csv"), cols, [f"v{j + 1}" for j in range(sim.shape[1])])
    summary["correlation_v1"] = fmt(np.corrcoef(V[:, 0], sim[:, 0])[0, 1])


def _write_histogram(run: Run, rep):
    _write_rows(
        run.path("histogram.csv"), ["bin_left", "bin_right", "density", "gaussian_density"],
        zip(rep.edges[:-1], rep.edges[1:], rep.density, rep.gaussian_density),
    )


def cmd_forcing(run: Run, summary):
    f, act = run.forcing, run.activity
    _write_rows(
        run.path("forcing.csv"), ["t", "v_r", "active"],
        [(t, v, str(int(a))) for t, v, a in zip(f.times, f.values, act.mask)],
    )
    rep = analysis.tail_report(f)
    summary.update(active_fraction=fmt(act.fraction), segments=len(act.segments),
                   kurtosis=fmt(rep.excess_kurtosis))


def cmd_eigs(run: Run, summary):
    cfg = run.cfg
    if cfg["idealized"]:
        model = hm.idealized_lorenz_model()
    elif cfg["model"]:
        model = hm.load_model(cfg["model"])
    else:
        model = run.model
    lam = hm.eigenvalues(model)
    _write_rows(run.path("eigenvalues.csv"), ["real", "imag"], [(z.real, z.imag) for z in lam])
    summary["eigenvalues"] = " ".join(_complex(z) for z in lam)
    summary["max_abs_real"] = fmt(np.max(np.abs(lam.real)))
    summary["skewness"] = fmt(model.skewness())


def cmd_events(run: Run, summary):
    cfg = run.cfg
    ev = analysis.detect_transitions(run.series, cfg["debounce"])
    stats = analysis.lead_time_stats(ev, run.activity, cfg["horizon"])
    _write_rows(
        run.path("events.csv"), ["t", "index", "direction"],
        [(t, str(int(i)), str(int(d))) for t, i, d in zip(ev.times, ev.indices, ev.directions)],
    )
    _write_rows(
        run.path("leads.csv"), ["t", "hit", "lead"],
        [(t, str(int(h)), "nan" if np.isnan(l) else fmt(l))
         for t, h, l in zip(ev.times, stats.hits, stats.leads)],
    )
    rep = analysis.tail_report(run.forcing)
    _write_histogram(run, rep)
    summary["events"] = len(ev)
    summary["hit_rate"] = "none" if stats.hit_rate is None else fmt(stats.hit_rate)
    summary["mean_lead"] = "none" if stats.mean_lead is None else fmt(stats.mean_lead)


def cmd_pfsets(run: Run, summary):
    cfg = run.cfg
    traj = run.source[0]
    if traj is None:
        traj = load_trajectory_csv(cfg["input"], dt=cfg["dt"])
    model = run.model
    lag = cfg["lag"] if cfg["lag"] is not None else model.q * model.dt
    grid = transfer.BoxGrid.around(traj, cfg["grid"])
    tm = transfer.ulam_matrix(traj, grid, lag)
    sets = transfer.almost_invariant_sets(transfer.reversibilize(tm), tm.pi)
    active = transfer.box_activity(tm, traj, run.activity.mask, offset=model.q - 1)
    rep = transfer.partition_overlap(tm, sets.labels, active)
    idx = grid.unravel(tm.boxes)
    ctr = grid.centers(tm.boxes)
    header = [f"i{d + 1}" for d in range(grid.dim)] + [f"c{d + 1}" for d in range(grid.dim)] + ["label", "active"]
    _write_rows(
        run.path("boxes.csv"), header,
        [[str(v) for v in ix] + list(c) + [str(int(l)), str(int(a))]
         for ix, c, l, a in zip(idx, ctr, sets.labels, active)],
    )
    summary.update(boxes=tm.n, lambda2=fmt(sets.lambda2), overlap=fmt(rep.score))
    if cfg["input"] is None and _kind(cfg) == "lorenz":
        lobes = transfer.lobe_labels(tm, sets.labels)
        summary["lobes_separated"] = str(bool(lobes[0] != lobes[1])).lower()


def cmd_repro(run: Run, summary):
    model, dec = run.fitted
    hm.save_model(model, run.path("model.txt"))
    write_csv(run.path("series.csv"), run.series, ["value"])
    summary.update(q=model.q, r=model.r, energy=fmt(energy_fraction(dec, model.r)),
                   skewness=fmt(model.skewness()))
    cmd_eigs(run, summary)
    V, sim, forcing = _reconstruction(run)
    cols = [TimeSeries(forcing.t0, forcing.dt, V[:, 0]), TimeSeries(forcing.t0, forcing.dt, sim[:, 0])]
    write_csv(run.path("reconstruction.csv"), cols, ["v1", "v1_model"])
    summary["correlation_v1"] = fmt(np.corrcoef(V[:, 0], sim[:, 0])[0, 1])
    cmd_forcing(run, summary)
    cmd_events(run, summary)
    if _kind(run.cfg) == "lorenz" and run.cfg["input"] is None:
        cmd_pfsets(run, summary)
    lines = [f"{k} = {v}" for k, v in summary.items()]
    run.path("summary.txt").write_text("\n".join(lines) + "\n")


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


@contextlib.contextmanager
def _threads():
    env = os.environ.get("HAVOK_THREADS")
    if env is None or env.strip() == "":
        yield
        return
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"HAVOK_THREADS must be an integer, got {env!r}") from None
    if n < 0:
        raise UsageError("HAVOK_THREADS must be >= 0")
    with threadpool_limits(limits=max(n, 1)):
        yield


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
        with _threads():
            r = Run(cfg)
            summary = {"command": cfg["command"]}
            COMMANDS[cfg["command"]](r, summary)
    except UsageError as exc:
        print(f"havok: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, CSVFormatError) as exc:
        print(f"havok: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"havok: {exc}", file=sys.stderr)
        return 1
    for k, v in summary.items():
        print(f"{k} = {v}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
