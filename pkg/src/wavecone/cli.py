"""wavecone command line: every subcommand prints one JSON run report.

    wavecone gallery curl --d 3 --m 2 -o op.json
    wavecone ell -i op.json [--height H --samples N --seed S]
    wavecone member -i op.json -e vec.json
    wavecone sharp -i op.json --cert cert.json -n 128 -o mu/
    wavecone residual -i op.json -m mu/ --seed S
    wavecone dim-estimate -m mu/ --scales 8
    wavecone mask -i op.json -m mu/ -o mask/
    wavecone pipeline -i op.json -n 128 --seed S
    wavecone verify-appendix --dmax 5 --samples 200
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    RESIDUAL_CENTERS,
    RESIDUAL_RADII,
    box_dimension,
    detect_invariance,
    invariance_defect,
    pointwise_invariance_dim,
    residual_profile,
    wave_cone_mask,
)
from .ell import EllCertificate, EllConfig, ell
from .exact import as_vector, format_fraction
from .exterior import lemma_ab_oracle
from .measures import VectorGridMeasure, load_measure, save_measure, sharp_measure
from .operators import FirstOrderOperator, make_gallery, wave_cone_member

SCHEMA = 1
MIN_PIPELINE_N = 16
DETECT_TOL = 0.05

log = logging.getLogger("wavecone")


class CommandError(Exception):
    pass


class Report:
    """Accumulates inputs, results and per-phase timings for one command."""

    def __init__(self, command: str, seed: int):
        self.command = command
        self.seed = seed
        self.inputs: dict = {}
        self.files: dict = {}
        self.results: dict = {}
        self.timings: dict = {}

    def add_file(self, path) -> Path:
        path = Path(path)
        if path.is_dir():
            h = hashlib.sha256()
            for f in sorted(p for p in path.iterdir() if p.is_file()):
                h.update(f.name.encode())
                h.update(f.read_bytes())
            self.files[str(path)] = h.hexdigest()
        else:
            if not path.exists():
                raise CommandError(f"no such file: {path}")
            self.files[str(path)] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except CommandError:
            raise
        except (ValueError, ArithmeticError, KeyError, OSError) as exc:
            raise CommandError(f"stage {name}: {exc}") from exc
        finally:
            self.timings[name] = round((time.perf_counter() - t0) * 1000, 3)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "version": __version__,
            "command": self.command,
            "inputs": {**self.inputs, "files": self.files},
            "seed": self.seed,
            "results": self.results,
            "timings": self.timings,
        }


# ---------------------------------------------------------------------------
# input helpers


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: malformed JSON ({exc})") from exc


def _load_operator(report: Report, path) -> FirstOrderOperator:
    path = report.add_file(path)
    try:
        return FirstOrderOperator.from_json(_read_json(path))
    except ValueError as exc:
        raise CommandError(f"{path}: {exc}") from exc


def _load_vector(report: Report, path) -> tuple:
    path = report.add_file(path)
    data = _read_json(path)
    if isinstance(data, dict):
        if "e" not in data:
            raise CommandError(f"{path}: missing field 'e'")
        data = data["e"]
    try:
        return as_vector(data)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise CommandError(f"{path}: field 'e' is not a rational vector ({exc})") from exc


def _load_measure(report: Report, path):
    path = report.add_file(path)
    try:
        return load_measure(path)
    except FileNotFoundError as exc:
        raise CommandError(f"{path}: missing measure file {Path(exc.filename).name}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CommandError(f"{path}: {exc}") from exc


def _vector_measure(mu, command: str) -> VectorGridMeasure:
    if not isinstance(mu, VectorGridMeasure):
        raise CommandError(f"{command} needs a measure with a polar field (header lacks 'dimE')")
    return mu


def _principal_only(op: FirstOrderOperator) -> FirstOrderOperator:
    zero = tuple(tuple(0 for _ in row) for row in op.p0)
    return dataclasses.replace(op, p0=zero, gallery=None)


def _ell_config(args) -> EllConfig:
    return EllConfig(lattice_height=args.height, random_samples=args.samples, descent_restarts=args.restarts, seed=args.seed)


# ---------------------------------------------------------------------------
# commands


def cmd_gallery(args, report: Report):
    params = {k: getattr(args, k) for k in ("d", "m", "k") if getattr(args, k) is not None}
    report.inputs.update(family=args.family, **params)
    with report.phase("build"):
        op = make_gallery(args.family, **params)
    report.results = {"operator": op.to_json(), "analytic_ell": op.analytic_ell}
    return op.to_json()


def cmd_ell(args, report: Report):
    op = _load_operator(report, args.input)
    cfg = _ell_config(args)
    report.inputs.update(label=op.label, height=args.height, samples=args.samples, restarts=args.restarts)
    with report.phase("ell"):
        cert = ell(op, cfg)
    report.results = {"operator": op.label, "certificate": cert.to_json()}
    return cert.to_json()


def cmd_member(args, report: Report):
    op = _load_operator(report, args.input)
    e = _load_vector(report, args.e)
    report.inputs.update(label=op.label, e=[format_fraction(x) for x in e])
    with report.phase("member"):
        rep = wave_cone_member(op, e)
    report.results = {"operator": op.label, **rep.to_json()}
    return None


def cmd_sharp(args, report: Report):
    op = _load_operator(report, args.input)
    cert_path = report.add_file(args.cert)
    try:
        cert = EllCertificate.from_json(_read_json(cert_path))
    except KeyError as exc:
        raise CommandError(f"{cert_path}: certificate lacks field {exc}") from exc
    report.inputs.update(label=op.label, n=args.n, h=_width(args))
    with report.phase("verify_certificate"):
        cert.verify(op)
    with report.phase("sharp_measure"):
        mu = sharp_measure(op, cert, args.n, _width(args))
    if args.output is None:
        raise CommandError("sharp needs -o DIR for the measure files")
    with report.phase("write"):
        save_measure(mu, args.output)
    report.results = {
        "ell": cert.value,
        "witness": [format_fraction(x) for x in cert.witness],
        "measure_dir": str(args.output),
        "d": mu.base.d,
        "n": mu.base.n,
        "h": mu.base.h,
        "total_mass": mu.base.total,
        "supported_cells": int((mu.base.mass > 0).sum()),
    }
    return None


def _residual_block(op, mu, seed: int) -> dict:
    prof = residual_profile(op, mu, seed)
    out = {
        "value": max(r for _, r in prof),
        "seed": seed,
        "test_family": {
            "profile": "(1 - t^2)^3",
            "radii_fraction_of_half_side": list(RESIDUAL_RADII),
            "centers_per_radius": RESIDUAL_CENTERS,
        },
        "per_test": [{"center": list(phi.center), "radius": phi.radius, "residual": r} for phi, r in prof],
    }
    if any(x != 0 for row in op.p0 for x in row):
        # the plane measure only annihilates the principal part
        out["principal_part_value"] = max(r for _, r in residual_profile(_principal_only(op), mu, seed))
    return out


def cmd_residual(args, report: Report):
    op = _load_operator(report, args.input)
    mu = _vector_measure(_load_measure(report, args.measure), "residual")
    report.inputs.update(label=op.label, n=mu.base.n, h=mu.base.h)
    with report.phase("weak_residual"):
        report.results = {"operator": op.label, "residual": _residual_block(op, mu, args.seed)}
    return None


def cmd_dim_estimate(args, report: Report):
    mu = _load_measure(report, args.measure)
    base = mu.base if isinstance(mu, VectorGridMeasure) else mu
    report.inputs.update(scales=args.scales, mass_threshold=args.threshold, n=base.n, h=base.h)
    with report.phase("box_dimension"):
        bd = box_dimension(base, args.scales, args.threshold)
    report.results = {"box_dimension": bd.to_json(), "total_mass": base.total}
    return None


def cmd_mask(args, report: Report):
    op = _load_operator(report, args.input)
    mu = _vector_measure(_load_measure(report, args.measure), "mask")
    report.inputs.update(label=op.label, n=mu.base.n, h=mu.base.h, rationalization_denominator=1000)
    with report.phase("wave_cone_mask"):
        mask = wave_cone_mask(op, mu)
    with report.phase("pointwise_invariance_dim"):
        dims = pointwise_invariance_dim(op, mu)
    supported = mu.base.mass > 0
    n_sup = int(supported.sum())
    res = {
        "operator": op.label,
        "supported_cells": n_sup,
        "marked_cells": int(mask.sum()),
        "marked_fraction": float(mask.sum() / n_sup) if n_sup else 0.0,
        "min_invariance_dim": int(dims[supported].min()) if n_sup else None,
        "invariance_dim_histogram": {str(k): int(v) for k, v in zip(*np.unique(dims[supported], return_counts=True))},
    }
    if mask.any():
        with report.phase("masked_box_dimension"):
            try:
                res["masked_box_dimension"] = box_dimension(mu.base.restricted(mask), args.scales).to_json()
            except ValueError as exc:
                res["masked_box_dimension"] = {"skipped": str(exc)}
    if args.output is not None:
        out = Path(args.output)
        with report.phase("write"):
            out.mkdir(parents=True, exist_ok=True)
            header = {"d": mu.base.d, "n": mu.base.n, "h": mu.base.h, "origin": list(mu.base.origin), "dtype": "u8"}
            (out / "header.json").write_text(json.dumps(header, indent=1))
            mask.astype(np.uint8).tofile(out / "mask.u8")
        res["mask_dir"] = str(out)
    report.results = res
    return None


def cmd_pipeline(args, report: Report):
    op = _load_operator(report, args.input)
    if args.n < MIN_PIPELINE_N:
        raise CommandError("grid too coarse for requested scales")
    cfg = _ell_config(args)
    report.inputs.update(label=op.label, n=args.n, h=_width(args), scales=args.scales, detect_tol=DETECT_TOL)
    res: dict = {"operator": op.label}
    with report.phase("ell"):
        cert = ell(op, cfg)
        cert.verify(op)
    res["ell"] = cert.to_json()
    with report.phase("sharp_measure"):
        if cert.value == 0:
            raise CommandError("stage sharp_measure: ell = 0 gives no plane measure")
        mu = sharp_measure(op, cert, args.n, _width(args))
        if mu.base.total <= 0:
            raise ValueError("sharp measure has no mass on the grid")
    res["measure"] = {"d": mu.base.d, "n": mu.base.n, "h": mu.base.h, "total_mass": mu.base.total}
    with report.phase("weak_residual"):
        res["residual"] = _residual_block(op, mu, args.seed)
        if not math.isfinite(res["residual"]["value"]):
            raise ValueError("residual is not finite")
    with report.phase("detect_invariance"):
        space = detect_invariance(mu.base, DETECT_TOL, args.seed)
        defect = invariance_defect(mu.base, space, args.seed) if space.dim else 0.0
        if defect > DETECT_TOL:
            raise ValueError(f"detected subspace has defect {defect} above tolerance")
    res["invariance"] = {
        "detected": space.to_json(),
        "defect": defect,
        "tol": DETECT_TOL,
        "expected": cert.invariance_space.to_json(),
    }
    with report.phase("box_dimension"):
        bd = box_dimension(mu.base, args.scales)
    res["box_dimension"] = bd.to_json()
    res["checks"] = {
        "detected_dim_at_least_ell": space.dim >= cert.value,
        "box_estimate_within_0.2": bd.estimate is not None and abs(bd.estimate - cert.value) <= 0.2,
        "residual_below_0.05": res["residual"]["value"] < 0.05,
    }
    report.results = res
    return None


def cmd_verify_appendix(args, report: Report):
    if not 1 <= args.dmax <= 6:
        raise CommandError(f"--dmax must lie in 1..6, got {args.dmax}")
    report.inputs.update(dmax=args.dmax, samples=args.samples)
    rows = []
    with report.phase("lemma_ab_oracle"):
        for d in range(1, args.dmax + 1):
            for m in range(1, d + 1):
                rows.append(lemma_ab_oracle(d, m, args.samples, args.seed).to_json())
    report.results = {"all_passed": all(r["passed"] for r in rows), "cases": rows}
    return None


# ---------------------------------------------------------------------------
# plumbing


def _width(args):
    return getattr(args, "width", None)


def _table(obj, prefix: str = "") -> list[str]:
    if isinstance(obj, dict):
        lines = []
        for k, v in obj.items():
            lines += _table(v, f"{prefix}.{k}" if prefix else str(k))
        return lines
    if isinstance(obj, list) and obj and any(isinstance(x, (dict, list)) for x in obj):
        lines = []
        for i, v in enumerate(obj):
            lines += _table(v, f"{prefix}[{i}]")
        return lines
    return [f"{prefix:48s} {json.dumps(obj)}"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavecone", description="Wave cones, minimal symbol ranks and sharp plane measures.")
    p.add_argument("--version", action="version", version=f"wavecone {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_help="write the report (or artifact) here"):
        sp.add_argument("--format", choices=("json", "table"), default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-o", "--output", default=None, help=output_help)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    def ell_flags(sp):
        sp.add_argument("--height", type=int, default=None, help="exhaust the projective lattice of this height")
        sp.add_argument("--samples", type=int, default=16, help="random structured candidates")
        sp.add_argument("--restarts", type=int, default=4, help="numerical descent restarts")

    sp = common(sub.add_parser("gallery", help="write a gallery operator as JSON"), "operator JSON path")
    sp.add_argument("family", choices=("curl", "div", "ext_derivative", "boundary"))
    sp.add_argument("--d", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_gallery)

    sp = common(sub.add_parser("ell", help="certified minimal symbol rank"), "certificate JSON path")
    sp.add_argument("-i", "--input", required=True)
    ell_flags(sp)
    sp.set_defaults(func=cmd_ell)

    sp = common(sub.add_parser("member", help="wave cone membership of a vector"))
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-e", required=True, help="JSON list of rationals, or {\"e\": [...]}")
    sp.set_defaults(func=cmd_member)

    sp = common(sub.add_parser("sharp", help="build the sharp plane measure"), "measure directory")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--cert", required=True)
    sp.add_argument("-n", type=int, default=128)
    sp.add_argument("--width", type=float, default=None, help="cell width (default 2/n)")
    sp.add_argument("--report", default=None, help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_sharp)

    sp = common(sub.add_parser("residual", help="weak residual of P(D)mu = 0"))
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-m", "--measure", required=True)
    sp.set_defaults(func=cmd_residual)

    sp = common(sub.add_parser("dim-estimate", help="box-counting dimension"))
    sp.add_argument("-m", "--measure", required=True)
    sp.add_argument("--scales", type=int, default=8)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.set_defaults(func=cmd_dim_estimate)

    sp = common(sub.add_parser("mask", help="wave cone mask and pointwise invariance dimension"), "mask directory")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-m", "--measure", required=True)
    sp.add_argument("--scales", type=int, default=8)
    sp.add_argument("--report", default=None, help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_mask)

    sp = common(sub.add_parser("pipeline", help="ell, sharp measure, residual, invariance, dimension"))
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-n", type=int, default=128)
    sp.add_argument("--width", type=float, default=None)
    sp.add_argument("--scales", type=int, default=8)
    ell_flags(sp)
    sp.set_defaults(func=cmd_pipeline)

    sp = common(sub.add_parser("verify-appendix", help="annihilator lemmas by brute force"))
    sp.add_argument("--dmax", type=int, default=5)
    sp.add_argument("--samples", type=int, default=200)
    sp.set_defaults(func=cmd_verify_appendix)
    return p


# commands whose -o names an artifact rather than the report
_ARTIFACT_COMMANDS = {"gallery", "ell"}
_DIRECTORY_COMMANDS = {"sharp", "mask"}


def run(argv=None) -> tuple[int, dict | None]:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="wavecone: %(message)s")
    report = Report(args.command, args.seed)
    try:
        artifact = args.func(args, report)
    except CommandError as exc:
        print(f"wavecone: error: {exc}", file=sys.stderr)
        return 2, None
    except (ValueError, ArithmeticError, KeyError, OSError) as exc:
        print(f"wavecone: error: {exc}", file=sys.stderr)
        return 2, None
    out = report.to_json()
    if args.format == "table":
        text = "\n".join(_table(out)) + "\n"
    else:
        text = json.dumps(out, indent=1) + "\n"
    if args.command in _ARTIFACT_COMMANDS and args.output:
        Path(args.output).write_text(json.dumps(artifact, indent=1) + "\n")
        sys.stdout.write(text)
    elif args.command in _DIRECTORY_COMMANDS:
        if args.report:
            Path(args.report).write_text(text)
        else:
            sys.stdout.write(text)
    elif args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0, out


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
