"""Experiment configs, runs with incremental CSV rows, and parameter sweeps."""
import csv
import hashlib
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import continuum as cont
from . import floquet as flq
from . import green as grn
from . import scales as scl
from ._rng import mix_seed
from .disorder import DisorderSpec
from .errors import ValidationError
from .lattice import Box, HoppingKernel, laplacian, load_kernel
from .spectra import TailPoint, estimate_ids, lifschitz_box_side, summarize_tail

KINDS = ("ids", "floquet", "green", "ldp", "continuum")
ROWS = "rows.csv"
SUMMARY = "summary.json"
SENTINEL = "INCOMPLETE"

try:
    VERSION = metadata.version("dilutelab")
except metadata.PackageNotFoundError:  # running from a source tree
    VERSION = "0+unknown"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment. ``threads`` and ``output`` do not enter the hash."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    replicas: int = 1
    threads: int = None
    output: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"experiment kind must be one of {KINDS}")
        if int(self.replicas) < 0:
            raise ValidationError("replicas must be nonnegative")
        if not isinstance(self.params, dict):
            raise ValidationError("params must be a mapping")

    def identity(self):
        return {"kind": self.kind, "params": self.params, "seed": int(self.seed),
                "replicas": int(self.replicas)}

    @property
    def hash(self):
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"kind", "params", "seed", "replicas", "threads", "output"}
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        if "kind" not in data:
            raise ValidationError("config needs a 'kind'")
        return cls(data["kind"], dict(data.get("params", {})), int(data.get("seed", 0)),
                   int(data.get("replicas", 1)), data.get("threads"), data.get("output"))

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path):
        path = Path(path)
        cfg = cls.from_json(path.read_text())
        kernel = cfg.params.get("kernel")
        if isinstance(kernel, str) and kernel.endswith(".json") and not Path(kernel).is_absolute():
            params = dict(cfg.params, kernel=str((path.parent / kernel).resolve()))
            cfg = replace(cfg, params=params)
        return cfg

    def with_params(self, **updates):
        return replace(self, params={**self.params, **updates})


@dataclass
class ExperimentRecord:
    config_hash: str
    timestamp: str
    rows: list
    summary: dict
    version: str
    directory: Path = None


# ---------------------------------------------------------------------------
# parameter parsing


def kernel_from(value, d=1):
    if value is None or value == "laplacian":
        return laplacian(d)
    if isinstance(value, dict):
        return HoppingKernel.from_dict(value)
    if isinstance(value, str):
        return load_kernel(value)
    raise ValidationError(f"cannot interpret kernel {value!r}")


def spec_from(params):
    law = params.get("law", "bernoulli")
    data = {"law": law, "rho": params.get("rho", 0.0)}
    for key in ("mollifier", "mollifier_support", "edges", "weights", "holder"):
        if key in params:
            data[key] = params[key]
    return DisorderSpec.from_dict(data)


def _floats(value, default=None):
    if value is None:
        return default
    if isinstance(value, str):
        return [float(x) for x in value.split(",") if x.strip()]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(x) for x in value]


def _ints(value, default=None):
    v = _floats(value, default)
    return None if v is None else [int(x) for x in v]


def _energies(p, rho, alpha):
    es = _floats(p.get("energies"))
    if es is None:
        if alpha is None:
            raise ValidationError("give 'energies' or 'alpha'")
        es = [rho ** alpha]
    return es


# ---------------------------------------------------------------------------
# runners: each yields (header, row iterator, summary callback)


def _run_ids(cfg):
    p = cfg.params
    d = int(p.get("d", 1))
    kernel = kernel_from(p.get("kernel"), d)
    spec = spec_from(p)
    alpha = p.get("alpha")
    energies = sorted(_energies(p, spec.rho, alpha))
    if "half_side" in p:
        side = 2 * int(p["half_side"]) + 1
    elif alpha is not None:
        side = lifschitz_box_side(spec.rho, alpha, d)
    else:
        raise ValidationError("give 'half_side' or 'alpha'")
    box = Box.centered(kernel.dimension, (side - 1) // 2)
    reps = cfg.replicas
    if "total_sites" in p:
        reps = math.ceil(int(p["total_sites"]) / box.size)
    header = ["E", "estimate", "ci", "replicas", "box_side", "seed"]
    state = {}

    def rows():
        if reps == 0:
            return
        curve = estimate_ids(kernel, spec, box, energies, reps, cfg.seed, cfg.threads)
        state["hits"] = [int(x) for x in curve.total_counts]
        for e, v, c in zip(curve.energies, curve.values, curve.ci):
            yield [float(e), float(v), float(c), reps, side, cfg.seed]

    def summary():
        return {"rho": spec.rho, "box_side": side, "sites": reps * box.size,
                "total_counts": state.get("hits", []), "energy_shift": kernel.energy_shift}

    return header, rows(), summary


def _run_floquet(cfg):
    p = cfg.params
    d = int(p.get("d", 1))
    kernel = kernel_from(p.get("kernel"), d)
    spec = spec_from(p)
    N = int(p.get("N", 4))
    res = int(p.get("resolution", 3))
    energies = sorted(_energies(p, spec.rho, p.get("alpha")))
    header = ["E", "ids_estimate", "ci"]
    state = {}

    def rows():
        if cfg.replicas == 0:
            return
        per = flq.periodic_ids(kernel, spec, N, res, energies, cfg.replicas, cfg.seed, cfg.threads)
        for e, v, c in zip(per.energies, per.values, per.ci):
            yield [float(e), float(v), float(c)]
        ev = float(p.get("event_energy", energies[0]))
        prob = flq.prob_omega_event(kernel, spec, ev, N, res, cfg.replicas, cfg.seed, cfg.threads)
        state["event"] = {"energy": ev, "frequency": prob.estimate, "ci": prob.ci,
                          "hits": prob.hits, "trials": prob.trials,
                          "upper_bound_only": prob.upper_bound_only}

    def summary():
        return {"N": N, "resolution": res, "cell_side": 2 * N + 1, "event": state.get("event")}

    return header, rows(), summary


def _run_green(cfg):
    p = cfg.params
    d = int(p.get("d", 1))
    kernel = kernel_from(p.get("kernel"), d)
    spec = spec_from(p)
    energy = float(p.get("energy", 0.0))
    eps_list = _floats(p.get("eps"), [1e-3])
    s = float(p.get("s", 0.5))
    dist = _ints(p.get("distances"), list(range(0, 21)))
    box = Box.centered(d, int(p.get("half_side", 2 * max(dist) + kernel.radius)))
    alpha = p.get("alpha")
    header = ["eps", "distance", "moment", "ci"]
    state = {"fits": []}

    def rows():
        if cfg.replicas == 0:
            return
        for eps in eps_list:
            prof = grn.moment_profile(kernel, spec, box, energy, eps, s, dist, cfg.replicas,
                                      cfg.seed, cfg.threads)
            for r, m, c in zip(prof.distances, prof.mean, prof.ci):
                yield [eps, int(r), float(m), float(c)]
            try:
                fit, used = grn.fit_profile(prof.distances, prof.mean, prof.ci)
                state["fits"].append({"eps": eps, "slope": fit.slope, "intercept": fit.intercept,
                                      "r2": fit.r2, "points": int(used.sum())})
            except ValidationError as exc:
                state["fits"].append({"eps": eps, "refused": str(exc)})
        if all(k in p for k in ("D", "c", "L")):
            delta = grn.delta_rate(spec.rho, alpha, energy) if alpha is not None else float(p.get("delta", 0.0))
            val = grn.fm_criterion_lhs(kernel, spec, int(p["L"]), energy, s, delta, float(p["D"]),
                                       float(p["c"]), int(p.get("xi_degree", 1)), eps_list[0],
                                       cfg.replicas, cfg.seed, threads=cfg.threads)
            state["criterion"] = {"value": val.value, "satisfied": val.satisfied,
                                  "delta": delta, "shells": val.shells}

    def summary():
        return {"energy": energy, "s": s, "box_side": box.side, "fits": state["fits"],
                "criterion": state.get("criterion")}

    return header, rows(), summary


def _run_ldp(cfg):
    p = cfg.params
    spec = spec_from(p)
    plan = scl.build_scale_plan(spec.rho, float(p.get("alpha", 5.0)), float(p.get("alpha_p", 3.0)),
                                float(p.get("gamma", 1.0)), int(p.get("d", 1)))
    R = int(p["R"]) if "R" in p else plan.R
    header = ["event", "R", "threshold", "frequency", "ci", "upper_bound_only", "chernoff", "exact"]
    events = []
    for sign, key in (("+", "C_plus"), ("-", "C_minus")):
        C = float(p.get(key, p.get("C", 1.0)))
        thr = p.get("threshold_plus" if sign == "+" else "threshold_minus")
        ev = scl.OmegaEvent(sign, R, C, plan.eps, spec.rho, None if thr is None else float(thr))
        events.append(ev)

    def rows():
        for ev in events:
            if cfg.replicas:
                freq = scl.omega_pm_probability(spec, None, ev.sign, ev.C, cfg.replicas, cfg.seed,
                                                threshold=ev.threshold, R=R, threads=cfg.threads).frequency
                f, c, ub = freq.estimate, freq.ci, freq.upper_bound_only
            else:
                f = c = float("nan")
                ub = False
            bound = scl.chernoff_bound(spec, R, ev.threshold, ev.side).bound
            exact = scl.exact_bernoulli_tail(R, spec.rho, ev.threshold, ev.side) \
                if spec.law == "bernoulli" else float("nan")
            yield [ev.sign, R, ev.threshold, f, c, ub, bound, exact]

    def summary():
        return {"plan": {"N": plan.N, "L": plan.L, "K": plan.K, "Lp": plan.Lp, "Kp": plan.Kp,
                         "eps": plan.eps, "R": plan.R, "degenerate": plan.degenerate,
                         "threshold_ok": plan.threshold_ok, "chain_ok": plan.chain_ok,
                         "trace": list(plan.trace)}}

    return header, rows(), summary


def _run_continuum(cfg):
    p = cfg.params
    d = int(p.get("d", 1))
    mode = p.get("mode", "none")
    rho = float(p.get("rho", 0.0))
    bump_name = p.get("bump", "box")
    bump_args = p.get("bump_args", {})
    if bump_name == "radial":
        bump_args = {"d": d, **bump_args}
    bump = cont.BUMPS[bump_name](**bump_args) if mode != "none" else None
    bg = cont.PeriodicBackground(int(p.get("q", 3)), p.get("background", "zero"),
                                 float(p.get("background_amplitude", 0.0)))
    alpha = p.get("alpha")
    energies = sorted(_energies(p, rho, alpha))
    length = p.get("length")
    if length is None:
        if alpha is None:
            raise ValidationError("give 'length' or 'alpha'")
        length = float(lifschitz_box_side(rho, alpha, d))
    spec = spec_from(p) if mode == "bernoulli" else None
    model = cont.ContinuumModel(d, float(length), float(p.get("mesh", 0.25)), mode, rho, bump, bg, spec)
    header = ["E", "estimate", "ci", "replicas", "box_side", "seed"]
    state = {}

    def rows():
        if cfg.replicas == 0:
            return
        c = cont.continuum_ids(model, energies, cfg.replicas, cfg.seed, cfg.threads)
        state["total_counts"] = [int(x) for x in np.rint(c.per_replica * model.volume).sum(axis=0)]
        for e, v, ci in zip(c.energies, c.values, c.ci):
            yield [float(e), float(v), float(ci), cfg.replicas, model.length, cfg.seed]

    def summary():
        return {"volume": model.volume, "grid_points": model.size,
                "total_counts": state.get("total_counts", [])}

    return header, rows(), summary


RUNNERS = {"ids": _run_ids, "floquet": _run_floquet, "green": _run_green, "ldp": _run_ldp,
           "continuum": _run_continuum}


# ---------------------------------------------------------------------------
# execution


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(config, output=None):
    """Run ``config``; rows stream to ``rows.csv``, ``summary.json`` is written last.

    While running, an ``INCOMPLETE`` marker sits next to the rows; it is
    removed only after the summary is in place.
    """
    out = Path(output or config.output or f"runs/{config.kind}-{config.hash}")
    out.mkdir(parents=True, exist_ok=True)
    header, rows, summarize = RUNNERS[config.kind](config)
    sentinel = out / SENTINEL
    sentinel.write_text(f"{config.hash}\n")
    (out / SUMMARY).unlink(missing_ok=True)
    written = []
    with open(out / ROWS, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header + ["config_hash"])
        fh.flush()
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row] + [config.hash])
            fh.flush()
            written.append(row)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    summary = {"config_hash": config.hash, "kind": config.kind, "version": VERSION,
               "timestamp": stamp, "rows": len(written), "config": config.identity(),
               "columns": header, **summarize()}
    (out / SUMMARY).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    sentinel.unlink()
    return ExperimentRecord(config.hash, stamp, written, summary, VERSION, out)


def read_rows(directory):
    with open(Path(directory) / ROWS, newline="") as fh:
        return list(csv.DictReader(fh))


def _point_seed(seed, point):
    blob = json.dumps(point, sort_keys=True, separators=(",", ":")).encode()
    return mix_seed(seed, int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")) >> 1


def expand_grid(template, grid, seed_mode="derive"):
    """Cartesian product of ``grid`` applied to ``template.params``."""
    if seed_mode not in ("derive", "shared"):
        raise ValidationError("seed_mode must be 'derive' or 'shared'")
    keys = list(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        seed = template.seed if seed_mode == "shared" else _point_seed(template.seed, point)
        configs.append((point, replace(template, params={**template.params, **point}, seed=seed)))
    return configs


def sweep(template, grid, output, seed_mode="derive"):
    """Run every grid point under ``output`` and write ``manifest.json``.

    Identical expanded configs would share an output directory; such grids
    are refused before anything runs.
    """
    out = Path(output)
    configs = expand_grid(template, grid, seed_mode)
    paths = [out / f"{cfg.kind}-{cfg.hash}" for _, cfg in configs]
    if len(set(paths)) != len(paths):
        raise ValidationError("grid produces colliding output paths (duplicate grid points)")
    out.mkdir(parents=True, exist_ok=True)
    records, manifest = [], []
    for (point, cfg), path in zip(configs, paths):
        rec = run(cfg, path)
        records.append(rec)
        manifest.append({"point": point, "seed": cfg.seed, "config_hash": cfg.hash,
                         "path": path.name})
    (out / "manifest.json").write_text(json.dumps(_jsonable(
        {"template_hash": template.hash, "grid": grid, "seed_mode": seed_mode, "runs": manifest}),
        indent=2, sort_keys=True) + "\n")
    return records


def aggregate_tail(records, alpha, d=1):
    """Tail diagnostics from an ``ids`` sweep over ``rho`` (one energy per run)."""
    pts = []
    for rec in records:
        row = rec.rows[0]
        s = rec.summary
        rho = s["rho"]
        sites = s["sites"]
        hits = s["total_counts"][0]
        if hits == 0:
            pts.append(TailPoint(rho, row[0], 3.0 / sites, 0.0, True, row[3], row[4], sites, 0))
        else:
            pts.append(TailPoint(rho, row[0], row[1], row[2], False, row[3], row[4], sites, hits))
    pts.sort(key=lambda p: -p.rho)
    return summarize_tail(pts, alpha, alpha <= 2 * (d + 1) / d)
