"""Command-line entry point: ``dilutelab {ids,floquet,green,ldp,continuum,sweep}``."""
import argparse
import json
import sys
from pathlib import Path

from .errors import CapacityError, DiluteLabError, ValidationError
from .experiment import ExperimentConfig, run, sweep

EXIT_OK, EXIT_FAILED, EXIT_VALIDATION, EXIT_CAPACITY = 0, 1, 2, 3

# flag -> (params key, type); type None marks a comma-separated number list
_COMMON = {
    "law": ("law", str), "rho": ("rho", float), "alpha": ("alpha", float),
    "energies": ("energies", None), "mollifier": ("mollifier", str),
}
_FLAGS = {
    "ids": {**_COMMON, "kernel": ("kernel", str), "d": ("d", int), "half_side": ("half_side", int),
            "total_sites": ("total_sites", int)},
    "floquet": {**_COMMON, "kernel": ("kernel", str), "d": ("d", int), "N": ("N", int),
                "resolution": ("resolution", int), "event_energy": ("event_energy", float)},
    "green": {**_COMMON, "kernel": ("kernel", str), "d": ("d", int), "energy": ("energy", float),
              "eps": ("eps", None), "s": ("s", float), "distances": ("distances", None),
              "half_side": ("half_side", int), "D": ("D", float), "c": ("c", float),
              "xi_degree": ("xi_degree", int), "L": ("L", int)},
    "ldp": {"law": ("law", str), "rho": ("rho", float), "alpha": ("alpha", float),
            "alpha_p": ("alpha_p", float), "gamma": ("gamma", float), "d": ("d", int),
            "C": ("C", float), "C_plus": ("C_plus", float), "C_minus": ("C_minus", float),
            "R": ("R", int), "threshold_plus": ("threshold_plus", float),
            "threshold_minus": ("threshold_minus", float)},
    "continuum": {**_COMMON, "d": ("d", int), "length": ("length", float), "mesh": ("mesh", float),
                  "mode": ("mode", str), "bump": ("bump", str), "q": ("q", int),
                  "background": ("background", str)},
}


def _add_common(p):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--replicas", type=int, help="Monte Carlo replicas (samples for ldp)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="thread budget (wins over DILUTELAB_THREADS)")
    p.add_argument("--output", "-o", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="dilutelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, flags in _FLAGS.items():
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        _add_common(p)
        for flag, (_, typ) in flags.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ or str)
    p = sub.add_parser("sweep", help="Cartesian parameter sweep over a config template")
    _add_common(p)
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="grid axis; repeat for more axes")
    p.add_argument("--shared-seed", action="store_true",
                   help="use the template seed at every point instead of deriving one")
    return parser


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config(args, kind):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if kind and cfg.kind != kind:
            raise ValidationError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}")
    else:
        if not kind:
            raise ValidationError("sweep needs --config")
        cfg = ExperimentConfig(kind)
    params = dict(cfg.params)
    for flag, (key, typ) in _FLAGS.get(kind or cfg.kind, {}).items():
        val = getattr(args, flag, None)
        if val is not None:
            params[key] = val if typ else _number_list(val, int if key == "distances" else float)
    updates = {"params": params}
    for key in ("seed", "replicas", "threads", "output"):
        val = getattr(args, key)
        if val is not None:
            updates[key] = val
    data = {**cfg.to_dict(), **updates}
    return ExperimentConfig.from_dict(data)


def _number_list(text, typ):
    try:
        return [typ(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"cannot parse number list {text!r}") from exc


def _parse_grid(items):
    grid = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"grid axis {item!r} must look like KEY=V1,V2")
        key, vals = item.split("=", 1)
        grid[key.strip()] = [_parse_value(v) for v in vals.split(",")]
    if not grid:
        raise ValidationError("sweep needs at least one --grid axis")
    return grid


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            cfg = _config(args, None)
            out = args.output or cfg.output or f"runs/sweep-{cfg.hash}"
            recs = sweep(cfg, _parse_grid(args.grid), out,
                         seed_mode="shared" if args.shared_seed else "derive")
            print(f"{len(recs)} runs -> {Path(out) / 'manifest.json'}")
        else:
            cfg = _config(args, args.command)
            rec = run(cfg)
            print(f"{len(rec.rows)} rows -> {rec.directory} (config {rec.config_hash})")
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValidationError, KeyError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DiluteLabError as exc:  # numerical failure mid-run; rows so far stay on disk
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
