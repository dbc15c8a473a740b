"""Batch front end: every subcommand writes files under --out and prints a short summary.

Exit status: 0 all checks pass, 1 checked and false, 2 invalid input, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

from . import fan as fanmod
from .bott import SpecError, build_fan, loads_spec
from .divisors import format_intersection_table, intersection_table, picard_rank
from .logfano import (
    ClassificationLimitError,
    LogFanoPair,
    PairError,
    classification_table,
    classification_to_json,
    classify,
    pair_certificate,
)
from .snc import (
    ModelError,
    SearchLimitError,
    build_xn,
    dss_check,
    dumps_model,
    is_maximal_model,
    model_dual_complex,
    model_isomorphism,
    search_maximal_dss,
    snc_fano_check,
)

EXIT_OK, EXIT_FALSE, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


class InvalidInput(Exception):
    pass


def _env_int(name: str, default: int | None) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise InvalidInput(f"{name}={raw!r} is not an integer") from None


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _dump(data) -> str:
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def _read_spec(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from None
    try:
        return loads_spec(text)
    except SpecError as exc:
        raise InvalidInput(f"{path}: {exc}") from None


def _parse_labels(text: str) -> list[tuple[int, int]]:
    """'1:0,2:0' -> [(1, 0), (2, 0)]."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        try:
            i, k = item.split(":")
            out.append((int(i), int(k)))
        except ValueError:
            raise InvalidInput(f"bad boundary label {item!r}; expected stage:k") from None
    return out


# --- subcommands --------------------------------------------------------------

def cmd_fan(args) -> int:
    spec = _read_spec(args.spec)
    fan = build_fan(spec)
    report = fanmod.validate_fan(fan, seed=args.seed)
    _write(args.out, "fan.json", fanmod.dumps(fan))
    _write(args.out, "walls.txt", format_intersection_table(fan))
    table = intersection_table(fan)
    table["validation"] = report.checks
    table["labels"] = [list(l) for l in fan.labels]
    table["rays"] = [list(r) for r in fan.rays]
    _write(args.out, "intersection_table.json", _dump(table))
    print(f"fan: {fan.n_rays} rays, {len(fan.max_cones)} maximal cones, "
          f"picard rank {picard_rank(fan)}, valid {report.ok}")
    return EXIT_OK if report.ok else EXIT_FALSE


def cmd_check(args) -> int:
    spec = _read_spec(args.spec)
    fan = build_fan(spec)
    try:
        pair = LogFanoPair.from_labels(fan, _parse_labels(args.boundary))
    except (fanmod.FanError, PairError) as exc:
        raise InvalidInput(str(exc)) from None
    cert = pair_certificate(pair)
    cert["spec"] = spec.to_dict()
    _write(args.out, "certificate.json", _dump(cert))
    ok = cert["log_fano"] and cert.get("structure_report", {}).get("ok", cert["log_fano"])
    line = f"log_fano {cert['log_fano']}, maximal {cert['maximal']}, rho {cert['rho']}"
    if cert.get("tau") is not None:
        line += f", tau {cert['tau']}"
    if not cert["log_fano"]:
        line += f", failing walls {cert['failing_walls']}"
    print(line)
    return EXIT_OK if ok else EXIT_FALSE


def cmd_classify(args) -> int:
    if args.dim is None or args.bound is None:
        raise InvalidInput("classify needs --dim and --bound")
    if args.dim < 1 or args.bound < 0:
        raise InvalidInput("need --dim >= 1 and --bound >= 0")
    try:
        entries = classify(args.dim, args.bound, workers=args.workers)
    except ClassificationLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_FALSE
    _write(args.out, "classification.json", classification_to_json(args.dim, args.bound, entries))
    _write(args.out, "classification.txt", classification_table(entries))
    bad = sum(1 for e in entries if not e.structure["ok"])
    print(f"classify n={args.dim} A={args.bound}: {len(entries)} entries, "
          f"{len(entries) - bad} pass the structure report")
    return EXIT_OK if bad == 0 else EXIT_FALSE


def cmd_maxdeg(args) -> int:
    if args.dim is None or args.dim < 1:
        raise InvalidInput("maxdeg needs --dim >= 1")
    model = build_xn(args.dim)
    report = dss_check(model)
    certs = [pair_certificate(p) for p in model.components]
    summary = {
        "components": model.size,
        "double_intersections": len(model.gluings),
        "dual_complex_dimension": model_dual_complex(model).dimension,
        "maximal": is_maximal_model(model),
        "snc_fano": snc_fano_check(model),
        "dss": report.ok,
    }
    _write(args.out, "model.json", dumps_model(model))
    _write(args.out, "dss.json", report.to_json())
    _write(args.out, "components.json", _dump({"summary": summary, "certificates": certs}))
    print(f"X^{args.dim}: {model.size} components, {len(model.gluings)} double intersections, "
          f"dss {report.ok}, snc Fano {summary['snc_fano']}")
    if not report.ok:
        print(f"d-semistability fails on {report.failures()}", file=sys.stderr)
    return EXIT_OK if report.ok and summary["snc_fano"] and summary["maximal"] else EXIT_FALSE


def cmd_search(args) -> int:
    if args.dim is None or args.bound is None:
        raise InvalidInput("search needs --dim and --bound")
    try:
        res = search_maximal_dss(args.dim, args.bound, use_dss=not args.no_dss)
    except SearchLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_FALSE
    ref = build_xn(args.dim)
    models = []
    for m in res.models:
        models.append({"model": json.loads(dumps_model(m)),
                       "isomorphic_to_xn": model_isomorphism(m, ref) is not None})
    data = {"dimension": args.dim, "twist_bound": args.bound, "dss_filter": not args.no_dss,
            "exhaustive": res.exhaustive,
            "scope": "exhaustive" if res.exhaustive else "within searched window",
            "count": len(models), "log": res.log, "models": models}
    _write(args.out, "search.json", _dump(data))
    print(f"search n={args.dim} A={args.bound}: {len(models)} model(s) ({data['scope']})")
    unique = len(models) == 1 and models[0]["isomorphic_to_xn"]
    return EXIT_OK if unique or args.no_dss else EXIT_FALSE


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None,
                        help="output directory (env BOTTFANO_OUT, default ./out)")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for randomized sanity oracles (env BOTTFANO_SEED)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (env BOTTFANO_WORKERS, default 1)")
    common.add_argument("--dim", type=int, default=None, help="dimension n (env BOTTFANO_DIM)")
    common.add_argument("--bound", type=int, default=None,
                        help="twist bound A (env BOTTFANO_BOUND)")

    p = argparse.ArgumentParser(prog="bottfano", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fan", parents=[common], help="build a fan and its intersection table")
    f.add_argument("spec")
    f.set_defaults(func=cmd_fan)
    c = sub.add_parser("check", parents=[common], help="certificate for a (spec, boundary) pair")
    c.add_argument("spec")
    c.add_argument("--boundary", required=True, help="ray labels, e.g. 1:0,2:0")
    c.set_defaults(func=cmd_check)
    k = sub.add_parser("classify", parents=[common], help="classify maximal log Fano pairs")
    k.set_defaults(func=cmd_classify)
    m = sub.add_parser("maxdeg", parents=[common], help="build and verify X^n")
    m.set_defaults(func=cmd_maxdeg)
    s = sub.add_parser("search", parents=[common], help="search maximal d-semistable models")
    s.add_argument("--no-dss", action="store_true", help="disable the d-semistability filter")
    s.set_defaults(func=cmd_search)
    return p


def _apply_env(args):
    args.dim = args.dim if args.dim is not None else _env_int("BOTTFANO_DIM", None)
    args.bound = args.bound if args.bound is not None else _env_int("BOTTFANO_BOUND", None)
    args.seed = args.seed if args.seed is not None else _env_int("BOTTFANO_SEED", 0)
    args.workers = args.workers if args.workers is not None else _env_int("BOTTFANO_WORKERS", 1)
    if args.out is None:
        args.out = Path(os.environ.get("BOTTFANO_OUT") or "out")
    if args.workers < 1:
        raise InvalidInput("--workers must be >= 1")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        _apply_env(args)
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ModelError as exc:
        print(f"model construction failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
