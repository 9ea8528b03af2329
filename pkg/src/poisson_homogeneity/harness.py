"""Power studies, the spike-alternative rate probe, presets and table caching.

Config files are JSON. Three kinds exist, one per CLI command:

calibrate
    ``{"tables": [{"name": ..., <CalibrationConfig fields>}, ...]}`` or a single
    CalibrationConfig object.
power
    ``{"L", "alpha", "seed", "replications", "procedures", "calibration",
    "families": [{"name", "parameter", "cells": [{"label", "intensity"}]}]}``
rate-probe
    ``{"alpha", "seed", "replications", "procedure", "preset", "beta",
    "cells": [{"L", "J", "D"}], "r_grid", "calibration", "theoretical_exponent"}``

Seeds: calibration streams are keyed by (calibration seed, purpose, procedure,
n, half, chunk); power streams by (seed, purpose, family, cell, chunk); rate
probe streams by (seed, purpose, cell, r index, chunk). See ``streams``.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import procedures as P
from . import streams
from .calibration import (
    CalibrationConfig,
    ModelSelection,
    Thresholding,
    calibrate,
    load_table,
    save_table,
)
from .errors import ConfigError, InvalidParameterError
from .intensity import Constant, from_dict
from .poisson import simulate_batch, simulate_piecewise_batch

log = logging.getLogger(__name__)

PAPER_L = 100
PAPER_ALPHA = 0.05
PAPER_MC_SAMPLES = 200_000
PAPER_REPLICATIONS = 20_000
DESK_MC_SAMPLES = 20_000
DESK_REPLICATIONS = 2_000
DEFAULT_SEED = 20_100_101

# estimated powers printed for the five alternative families (columns in order)
PAPER_TABLES = {
    "s1": {
        "parameter": "epsilon",
        "values": [0, 0.5, 0.6, 0.7, 0.8, 0.9, 1],
        P.MODEL_SELECTION: [0.05, 0.25, 0.39, 0.56, 0.73, 0.89, 0.98],
        P.THRESHOLDING: [0.05, 0.33, 0.52, 0.72, 0.87, 0.96, 1],
        P.KS: [0.05, 0.09, 0.13, 0.19, 0.27, 0.37, 0.48],
        P.LAPLACE: [0.05, 0.03, 0.03, 0.03, 0.03, 0.02, 0.02],
        P.Z: [0.05, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
    },
    "s2": {
        "parameter": "eta",
        "values": [0, 0.5, 1, 1.5, 2],
        P.MODEL_SELECTION: [0.05, 0.61, 0.87, 0.94, 0.97],
        P.THRESHOLDING: [0.05, 0.41, 0.64, 0.75, 0.80],
        P.KS: [0.05, 0.14, 0.25, 0.34, 0.39],
        P.LAPLACE: [0.05, 0.05, 0.06, 0.06, 0.06],
        P.Z: [0.05, 0.26, 0.39, 0.46, 0.51],
    },
    "s3": {
        "parameter": "epsilon",
        "values": [0, 0.2, 0.3, 0.4, 0.5, 0.6],
        P.MODEL_SELECTION: [0.05, 0.28, 0.65, 0.91, 0.99, 1],
        P.THRESHOLDING: [0.05, 0.20, 0.43, 0.71, 0.90, 0.98],
        P.KS: [0.05, 0.11, 0.21, 0.37, 0.56, 0.76],
        P.LAPLACE: [0.05, 0.01, 0.00, 0.00, 0.00, 0.00],
        P.Z: [0.05, 0.02, 0.02, 0.02, 0.02, 0.01],
    },
    "s4": {
        "parameter": "epsilon",
        "values": [0, 0.1, 0.2, 0.3, 0.4],
        P.MODEL_SELECTION: [0.05, 0.20, 0.69, 0.97, 1],
        P.THRESHOLDING: [0.05, 0.17, 0.62, 0.95, 1],
        P.KS: [0.05, 0.26, 0.77, 0.98, 1],
        P.LAPLACE: [0.05, 0.37, 0.82, 0.98, 1],
        P.Z: [0.05, 0.24, 0.57, 0.85, 0.97],
    },
    "s5": {
        "parameter": "beta,epsilon",
        "values": [(1.5, 0.2), (1.5, 0.6), (1.5, 1), (2, 0.2), (2, 0.6), (2, 1)],
        P.MODEL_SELECTION: [0.20, 0.49, 0.79, 0.24, 0.62, 1],
        P.THRESHOLDING: [0.18, 0.43, 0.69, 0.24, 0.62, 1],
        P.KS: [0.22, 0.56, 0.91, 0.24, 0.62, 1],
        P.LAPLACE: [0.24, 0.60, 0.98, 0.24, 0.62, 1],
        P.Z: [0.24, 0.61, 0.99, 0.24, 0.62, 1],
    },
}

S2_NORMALIZERS = {0.5: 2.27, 1: 3.54, 1.5: 4.81, 2: 6.08}


def family_intensity(family, value):
    """Intensity of a paper family at one parameter value; zero strength gives s0."""
    if family == "s5":
        beta, eps = value
        return from_dict({"variant": "s5", "beta": beta, "epsilon": eps})
    if value == 0:
        return Constant(1.0)
    key = "eta" if family == "s2" else "epsilon"
    return from_dict({"variant": family, key: value})


def _label(value):
    if isinstance(value, (tuple, list)):
        return "(" + ";".join(f"{v:g}" for v in value) + ")"
    return f"{value:g}"


# -- parameter presets --------------------------------------------------------

def simulation_procedures():
    """Model collection {1..6} with W_J = ln 6, and Jbar = 6."""
    return ModelSelection.uniform(range(1, 7)), Thresholding(6)


def theory_procedures(L):
    """J in {1..floor(log2(L^2 / (ln ln L)^3))} with W_J = ln|collection|; Jbar = floor(log2(L / ln L))."""
    if L <= math.e:
        raise ConfigError("theory preset needs L > e")
    top = max(1, int(math.floor(math.log2(L ** 2 / math.log(math.log(L)) ** 3))))
    jbar = max(1, int(math.floor(math.log2(L / math.log(L)))))
    return ModelSelection.uniform(range(1, top + 1)), Thresholding(jbar)


def default_n_range(L):
    """Covers N_L ~ Poisson(L) well beyond 4 standard deviations; other n are calibrated lazily."""
    half = math.ceil(6 * math.sqrt(L))
    return max(0, int(L) - half), int(L) + half


def calibration_preset(scale="paper", alpha=PAPER_ALPHA, L=PAPER_L, seed=1):
    mc = PAPER_MC_SAMPLES if scale == "paper" else DESK_MC_SAMPLES
    ms, th = simulation_procedures()
    tables = []
    for a, suffix in ((alpha, ""), (alpha / 2, "_half")):
        for proc in (ms, th):
            tables.append({
                "name": f"{proc.kind}{suffix}",
                "L": L, "alpha": a, "procedure": proc.to_dict(),
                "n_min": 40, "n_max": 160, "mc_samples": mc, "master_seed": seed,
            })
    return {"tables": tables}


def power_preset(families, scale="paper", procedures=None):
    reps = PAPER_REPLICATIONS if scale == "paper" else DESK_REPLICATIONS
    mc = PAPER_MC_SAMPLES if scale == "paper" else DESK_MC_SAMPLES
    ms, th = simulation_procedures()
    fams = []
    for fam in families:
        t = PAPER_TABLES[fam]
        fams.append({
            "name": fam,
            "parameter": t["parameter"],
            "cells": [{"label": _label(v), "intensity": family_intensity(fam, v).to_dict()}
                      for v in t["values"]],
        })
    return {
        "L": PAPER_L,
        "alpha": PAPER_ALPHA,
        "seed": DEFAULT_SEED,
        "replications": reps,
        "procedures": list(procedures or (P.MODEL_SELECTION, P.THRESHOLDING, P.KS, P.LAPLACE, P.Z)),
        "calibration": {
            "n_min": 40, "n_max": 160, "mc_samples": mc, "master_seed": 1,
            "model_selection": ms.to_dict(), "thresholding": th.to_dict(),
        },
        "families": fams,
    }


def level_preset(scale="paper"):
    cfg = power_preset([], scale, procedures=P.ALL_PROCEDURES)
    cfg["families"] = [{"name": "s0", "parameter": "none",
                        "cells": [{"label": "0", "intensity": Constant(1.0).to_dict()}]}]
    return cfg


def rate_probe_preset(preset="simulation"):
    return {
        "alpha": PAPER_ALPHA,
        "seed": DEFAULT_SEED,
        "replications": DESK_REPLICATIONS,
        "procedure": P.THRESHOLDING,
        "preset": preset,
        "beta": 0.2,
        "cells": [{"L": L, "J": 3, "D": 8} for L in (50, 100, 200, 400)],
        "r_grid": [round(0.05 * i, 2) for i in range(21)],
        "calibration": {"mc_samples": DESK_MC_SAMPLES, "master_seed": 1},
        "theoretical_exponent": None,
    }


def presets():
    out = {
        "paper-calibration": calibration_preset("paper"),
        "desk-calibration": calibration_preset("desk"),
        "paper-level": level_preset("paper"),
        "desk-level": level_preset("desk"),
        "paper-all": power_preset(list(PAPER_TABLES), "paper"),
        "desk-all": power_preset(list(PAPER_TABLES), "desk"),
        "rate-probe": rate_probe_preset("simulation"),
        "rate-probe-theory": rate_probe_preset("theory"),
    }
    for fam in PAPER_TABLES:
        out[f"paper-{fam}"] = power_preset([fam], "paper")
        out[f"desk-{fam}"] = power_preset([fam], "desk")
    return out


def load_config(name_or_path):
    """A preset name or a path to a JSON config file."""
    if os.path.exists(name_or_path):
        try:
            with open(name_or_path, encoding="utf-8") as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{name_or_path}: invalid JSON: {exc}") from None
    table = presets()
    if name_or_path in table:
        return copy.deepcopy(table[name_or_path])
    raise ConfigError(f"no config file or preset named {name_or_path!r}")


# -- table cache ----------------------------------------------------------------

class TableStore:
    """Quantile tables cached on disk by configuration fingerprint."""

    def __init__(self, directory, threads=1):
        self.directory = directory
        self.threads = threads
        self._memo = {}

    def path(self, config):
        return os.path.join(self.directory, f"{config.procedure.kind}_{config.fingerprint()}.json")

    def get(self, config):
        fp = config.fingerprint()
        if fp in self._memo:
            return self._memo[fp]
        path = self.path(config)
        if os.path.exists(path):
            table = load_table(path)
        else:
            log.info("calibrating %s table (%s)", config.procedure.kind, fp)
            table = calibrate(config, threads=self.threads)
            os.makedirs(self.directory, exist_ok=True)
            save_table(table, path)
        self._memo[fp] = table
        return table


def _calibration_configs(cal, L, alpha, ms=None, th=None):
    cal = dict(cal)
    ms = ms or ModelSelection.uniform(cal.get("model_selection", {}).get("models", range(1, 7)))
    if "model_selection" in cal and cal["model_selection"].get("weights", "uniform") != "uniform":
        ms = ModelSelection(cal["model_selection"]["models"], cal["model_selection"]["weights"])
    th = th or Thresholding(cal.get("thresholding", {}).get("max_level", 6))
    lo, hi = default_n_range(L)
    common = dict(
        L=L,
        alpha=alpha,
        n_min=int(cal.get("n_min", lo)),
        n_max=int(cal.get("n_max", hi)),
        mc_samples=int(cal.get("mc_samples", PAPER_MC_SAMPLES)),
        master_seed=int(cal.get("master_seed", 1)),
    )
    return CalibrationConfig(procedure=ms, **common), CalibrationConfig(procedure=th, **common)


def tables_for(procedures, cal, L, alpha, store, ms=None, th=None):
    """Tables needed by ``procedures``, keyed as :func:`procedures.run_batch` expects."""
    tables = {}
    if P.MODEL_SELECTION in procedures or P.THRESHOLDING in procedures:
        cms, cth = _calibration_configs(cal, L, alpha, ms, th)
        if P.MODEL_SELECTION in procedures:
            tables[P.MODEL_SELECTION] = store.get(cms)
        if P.THRESHOLDING in procedures:
            tables[P.THRESHOLDING] = store.get(cth)
    if P.COMBINED in procedures:
        hms, hth = _calibration_configs(cal, L, alpha / 2, ms, th)
        tables[P.COMBINED] = (store.get(hms), store.get(hth))
    return tables


def _fingerprints(tables):
    out = {}
    for name, t in sorted(tables.items()):
        out[name] = [x.fingerprint() for x in t] if isinstance(t, tuple) else t.fingerprint()
    return out


# -- power study ----------------------------------------------------------------

@dataclass
class PowerRow:
    family: str
    label: str
    intensity: str
    procedure: str
    replications: int
    rejections: int

    @property
    def power(self):
        return self.rejections / self.replications

    @property
    def mc_stderr(self):
        p = self.power
        return math.sqrt(p * (1 - p) / self.replications)


@dataclass
class PowerReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    HEADER = ["family", "label", "intensity", "procedure", "replications", "rejections",
              "power", "mc_stderr"]

    def lookup(self, family, label, procedure):
        for r in self.rows:
            if (r.family, r.label, r.procedure) == (family, label, procedure):
                return r
        raise KeyError((family, label, procedure))

    def families(self):
        return list(dict.fromkeys(r.family for r in self.rows))

    def to_csv(self, family=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            if family is None or r.family == family:
                w.writerow([r.family, r.label, r.intensity, r.procedure, r.replications,
                            r.rejections, repr(r.power), repr(r.mc_stderr)])
        return buf.getvalue()

    def to_wide_csv(self, family):
        """Paper layout: one row per procedure, one column per parameter value."""
        rows = [r for r in self.rows if r.family == family]
        labels = list(dict.fromkeys(r.label for r in rows))
        procs = list(dict.fromkeys(r.procedure for r in rows))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["procedure", *labels])
        for p in procs:
            vals = {r.label: r.power for r in rows if r.procedure == p}
            w.writerow([p, *(f"{vals[lab]:.4f}" for lab in labels)])
        return buf.getvalue()


def run_power(config, store, replications=None, seed=None):
    """Estimate rejection frequencies for every (family, cell, procedure)."""
    try:
        L = float(config.get("L", PAPER_L))
        alpha = float(config.get("alpha", PAPER_ALPHA))
        seed = int(config.get("seed", DEFAULT_SEED) if seed is None else seed)
        R = int(config.get("replications", PAPER_REPLICATIONS) if replications is None else replications)
        procs = list(config.get("procedures", [P.MODEL_SELECTION, P.THRESHOLDING, P.KS, P.LAPLACE, P.Z]))
        families = config["families"]
        cal = config.get("calibration", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid power config: {exc!r}") from None
    unknown = set(procs) - set(P.ALL_PROCEDURES)
    if unknown:
        raise ConfigError(f"unknown procedures {sorted(unknown)}")
    if R < 1:
        raise ConfigError("replications must be >= 1")
    tables = tables_for(procs, cal, L, alpha, store)

    rows = []
    for fam in families:
        name = fam["name"]
        for ci, cell in enumerate(fam["cells"]):
            try:
                spec = from_dict(cell["intensity"])
            except (InvalidParameterError, KeyError) as exc:
                raise ConfigError(f"family {name}, cell {ci}: {exc}") from None
            hits = dict.fromkeys(procs, 0)
            for c, size in streams.chunks(R):
                rng = streams.stream(seed, streams.POWER, streams.tag(name), ci, c)
                batch = simulate_batch(spec, L, size, rng)
                for p in procs:
                    hits[p] += P.run_batch(p, batch, alpha, tables).rejections
            for p in procs:
                rows.append(PowerRow(name, str(cell.get("label", ci)), spec.label(), p, R, hits[p]))
            log.info("power %s %s done", name, cell.get("label", ci))
    meta = {"L": L, "alpha": alpha, "seed": seed, "replications": R,
            "tables": _fingerprints(tables)}
    return PowerReport(rows, meta)


# -- rate probe -------------------------------------------------------------------

@dataclass
class RateRow:
    L: float
    J: int
    D: int
    r: float
    procedure: str
    replications: int
    rejections: int

    @property
    def power(self):
        return self.rejections / self.replications

    @property
    def mc_stderr(self):
        p = self.power
        return math.sqrt(p * (1 - p) / self.replications)


@dataclass
class RateProbeReport:
    rows: list
    r_star: dict
    slope: float
    theoretical_exponent: float = None
    target_power: float = 0.8

    HEADER = ["L", "J", "D", "r", "procedure", "replications", "rejections", "power", "mc_stderr"]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([repr(r.L), r.J, r.D, repr(r.r), r.procedure, r.replications,
                        r.rejections, repr(r.power), repr(r.mc_stderr)])
        return buf.getvalue()

    def summary_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "J", "D", "r_star", "target_power"])
        for (L, J, D), rs in self.r_star.items():
            w.writerow([repr(L), J, D, "" if rs is None else repr(rs), repr(self.target_power)])
        w.writerow([])
        w.writerow(["fitted_slope", "theoretical_exponent"])
        exp = self.theoretical_exponent
        w.writerow(["" if self.slope is None else repr(self.slope), "" if exp is None else repr(exp)])
        return buf.getvalue()


def spike_batch(J, D, r, L, R, rng):
    """R patterns, each from its own random spike alternative (D signed spikes at level J)."""
    M = 2 ** J
    if r ** 2 > D / M + 1e-15:
        raise ConfigError(f"r={r} violates r^2 <= D/2^J = {D / M}")
    cells = np.argsort(rng.random((R, M)), axis=1)[:, :D]
    xi = rng.choice(np.array([-1.0, 1.0]), size=(R, D))
    signs = np.zeros((R, M))
    np.put_along_axis(signs, cells, xi, axis=1)
    height = r * math.sqrt(M / D)
    levels = np.empty((R, 2 * M))
    levels[:, 0::2] = 1 + height * signs
    levels[:, 1::2] = 1 - height * signs
    return simulate_piecewise_batch(np.linspace(0, 1, 2 * M + 1), np.maximum(levels, 0.0), L, rng)


def locate_r_star(r_grid, powers, target):
    """Smallest grid r reaching ``target`` power, by bisection on the running maximum."""
    mono = np.maximum.accumulate(np.asarray(powers, dtype=float))
    i = int(np.searchsorted(mono, target, side="left"))
    return float(r_grid[i]) if i < len(r_grid) else None


def fit_slope(r_star):
    pts = [(L, rs) for (L, _J, _D), rs in r_star.items() if rs]
    if len({L for L, _ in pts}) < 2:
        return None
    x = np.log([L for L, _ in pts])
    y = np.log([rs for _, rs in pts])
    return float(np.polyfit(x, y, 1)[0])


def run_rate_probe(config, store, replications=None, seed=None):
    try:
        alpha = float(config.get("alpha", PAPER_ALPHA))
        seed = int(config.get("seed", DEFAULT_SEED) if seed is None else seed)
        R = int(config.get("replications", DESK_REPLICATIONS) if replications is None else replications)
        procedure = config.get("procedure", P.THRESHOLDING)
        preset = config.get("preset", "simulation")
        beta = float(config.get("beta", 0.2))
        cells = config["cells"]
        r_grid = sorted(float(r) for r in config["r_grid"])
        cal = config.get("calibration", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid rate-probe config: {exc!r}") from None
    if procedure not in P.ALL_PROCEDURES:
        raise ConfigError(f"unknown procedure {procedure!r}")
    if preset not in ("simulation", "theory"):
        raise ConfigError("preset must be 'simulation' or 'theory'")

    rows, r_star = [], {}
    for ci, cell in enumerate(cells):
        L, J, D = float(cell["L"]), int(cell["J"]), int(cell["D"])
        if not 1 <= D <= 2 ** J:
            raise ConfigError(f"cell {ci}: need 1 <= D <= 2^J")
        feasible = [r for r in r_grid if r ** 2 <= D / 2 ** J]
        if not feasible:
            raise ConfigError(f"cell {ci}: every r violates r^2 <= D/2^J")
        ms, th = simulation_procedures() if preset == "simulation" else theory_procedures(L)
        tables = tables_for([procedure], cal, L, alpha, store, ms, th)
        powers = []
        for ri, r in enumerate(feasible):
            hits = 0
            for c, size in streams.chunks(R):
                rng = streams.stream(seed, streams.RATE_PROBE, ci, ri, c)
                batch = spike_batch(J, D, r, L, size, rng)
                hits += P.run_batch(procedure, batch, alpha, tables).rejections
            row = RateRow(L, J, D, r, procedure, R, hits)
            rows.append(row)
            powers.append(row.power)
        r_star[(L, J, D)] = locate_r_star(feasible, powers, 1 - beta)
        log.info("rate probe L=%g J=%d D=%d r*=%s", L, J, D, r_star[(L, J, D)])
    return RateProbeReport(rows, r_star, fit_slope(r_star), config.get("theoretical_exponent"), 1 - beta)


# -- calibrate command -------------------------------------------------------------

def calibration_configs(config):
    """``[(name, CalibrationConfig)]`` from a calibrate-command config."""
    entries = config.get("tables") if isinstance(config, dict) and "tables" in config else [config]
    out = []
    for i, entry in enumerate(entries):
        entry = dict(entry)
        name = entry.pop("name", None)
        entry.pop("level_check_samples", None)
        cfg = CalibrationConfig.from_dict(entry)
        out.append((name or f"{cfg.procedure.kind}_{i}", cfg))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ConfigError("table names must be unique")
    return out
