"""Command line front-end.

Subcommands: ``generate``, ``validate``, ``tomography``, ``shot-noise-study``
and ``compare``. Mode labels in every file and message are 1-based.

Any flag can also be set through an environment variable named
``MZTOMO_<FLAG>`` (upper case, dashes as underscores), e.g.
``MZTOMO_SHOTS=10000``. Explicit flags win over the environment.

Exit codes:
    0   success
    1   unclassified tomography error
    2   bad command line usage
    3   invalid device (validation failed)
    4   file I/O failure
    5   incomplete probe plan
    6   ambiguous (duplicated) probe plan
    7   unrecoverable row (opaque input mode)
    8   probe kind incompatible with the device
    9   invalid probe setting or run configuration
    10  dimension mismatch
    11  mode label out of range
    12  malformed measurement record
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .algebra import frobenius_distance, haar_random_unitary, random_bogoliubov
from .devices import (
    BogoliubovDevice,
    LossModel,
    LossyDevice,
    UnitaryDevice,
    device_from_dict,
    load_device,
    matrix_from_json,
    save_device,
    validate,
)
from .errors import InvalidDeviceError, InvalidSettingError, TomographyError
from .interferometer import write_records
from .tomography import DeviceKind, plan_probes, reconstruct, run_plan

ENV_PREFIX = "MZTOMO_"
EXIT_USAGE = 2
EXIT_IO = 4


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def parse_alpha(text: str) -> complex:
    """``"re,im"`` or a bare real number."""
    parts = [t.strip() for t in str(text).split(",")]
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"alpha must be 're,im', got {text!r}")


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_ints(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --------------------------------------------------------------------------
# Device construction
# --------------------------------------------------------------------------


def generate_device(kind: str, n: int, seed: Optional[int], max_squeeze: float = 0.5, eta=None):
    """Random device of ``kind`` (``unitary`` or ``bogoliubov``), lossy if ``eta`` is given."""
    if kind == "unitary":
        device = UnitaryDevice(haar_random_unitary(n, seed))
    elif kind == "bogoliubov":
        device = BogoliubovDevice(*random_bogoliubov(n, max_squeeze, seed))
    else:
        raise InvalidSettingError(f"unknown device kind {kind!r}")
    if eta is not None:
        device = LossyDevice(device, LossModel(eta))
    return device


@dataclass
class RunConfig:
    device_path: Optional[Path]
    kind: Optional[str]
    n: Optional[int]
    device_seed: Optional[int]
    max_squeeze: float
    eta: Optional[list]
    alpha: complex
    shots: int
    seed: Optional[int]
    out: Path
    jobs: int = 1
    emit_records: bool = True
    emit_report: bool = True
    emit_csv: bool = False

    def __post_init__(self):
        if self.shots < 0:
            raise InvalidSettingError(f"shots must be >= 0, got {self.shots}")
        if self.shots > 0 and self.seed is None:
            raise InvalidSettingError("--seed is required when --shots > 0")
        if self.device_path is None and (self.kind is None or self.n is None):
            raise InvalidSettingError("give --device, or --kind and --n to generate one")

    def load(self):
        if self.device_path is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return load_device(self.device_path)
        seed = self.device_seed if self.device_seed is not None else self.seed
        return generate_device(self.kind, self.n, seed, self.max_squeeze, self.eta)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        return cls(
            device_path=Path(args.device) if args.device else None,
            kind=args.kind,
            n=args.n,
            device_seed=args.device_seed,
            max_squeeze=args.max_squeeze,
            eta=args.eta,
            alpha=args.alpha,
            shots=args.shots,
            seed=args.seed,
            out=Path(args.out),
            jobs=args.jobs,
            emit_records=not getattr(args, "no_records", False),
            emit_csv=getattr(args, "csv", False),
        )


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_generate(kind, n, seed, max_squeeze, eta, out) -> dict:
    device = generate_device(kind, n, seed, max_squeeze, eta)
    report = validate(device)
    if not report.ok:
        raise InvalidDeviceError("generated device failed validation")
    save_device(device, out)
    summary = {"path": str(out), "kind": device.kind, "n": device.n}
    summary.update(report.to_dict())
    summary["residuals"] = _residuals(device)
    return summary


def _residuals(device) -> dict:
    inner = device.inner if isinstance(device, LossyDevice) else device
    ident = np.eye(inner.n)
    out = {"unitarity": float(np.max(np.abs(inner.u @ inner.u.conj().T - inner.v @ inner.v.conj().T - ident)))}
    if isinstance(inner, BogoliubovDevice):
        uvt = inner.u @ inner.v.T
        out["uvt_symmetry"] = float(np.max(np.abs(uvt - uvt.T)))
    return out


def cmd_validate(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    device = device_from_dict(data, check=False)
    summary = {"path": str(path), "kind": device.kind, "n": device.n}
    summary.update(validate(device).to_dict())
    summary["residuals"] = _residuals(device)
    return summary


def cmd_tomography(config: RunConfig) -> dict:
    device = config.load()
    kind = DeviceKind.of(device)
    plan = plan_probes(kind, device.n, config.alpha, config.shots)
    records = run_plan(device, plan, seed=config.seed, jobs=config.jobs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = reconstruct(records, kind, config.alpha, n=device.n, truth=device)

    config.out.mkdir(parents=True, exist_ok=True)
    files = {}
    if config.emit_records:
        files["records"] = str(config.out / "records.jsonl")
        write_records(records, files["records"])
    if config.emit_report:
        files["report"] = str(config.out / "report.json")
        report.write_json(files["report"])
    if config.emit_csv:
        files["csv"] = str(config.out / "errors.csv")
        report.write_error_csv(files["csv"], device)
    return {
        "kind": kind.value,
        "n": device.n,
        "settings_used": report.settings_used,
        "total_shots": report.total_shots,
        "frobenius_error_u": report.frobenius_error_u,
        "frobenius_error_v": report.frobenius_error_v,
        "eta_max_error": report.eta_max_error,
        "files": files,
    }


def loglog_slope(shots: Sequence[float], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(shots, float)), np.log(np.asarray(values, float)), 1)
    return float(slope)


def shot_noise_study(device, shot_grid, alpha=1.0, seed=0, repeats: int = 10, jobs: int = 1):
    """Per-entry RMSE of the reconstructed ``U`` at each shot count.

    Returns ``(rows, slope)`` where each row is ``(shots, rmse, std_error)``,
    both averaged over ``repeats`` independent runs, and ``slope`` is the
    least-squares log-log slope of RMSE against shots.
    """
    grid = [int(m) for m in shot_grid]
    if len(grid) < 3:
        raise InvalidSettingError(f"shot grid needs at least 3 points, got {len(grid)}")
    if any(m <= 0 for m in grid):
        raise InvalidSettingError("shot grid entries must be positive; shots=0 is the exact branch")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidSettingError("shot grid must be strictly ascending")
    if repeats < 1:
        raise InvalidSettingError("repeats must be >= 1")

    kind = DeviceKind.of(device)
    seeds = np.random.SeedSequence(seed).spawn(len(grid) * repeats)
    rows = []
    for gi, m in enumerate(grid):
        plan = plan_probes(kind, device.n, alpha, m)
        rmse, se = [], []
        for r in range(repeats):
            child = seeds[gi * repeats + r]
            records = run_plan(device, plan, seed=child, jobs=jobs)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = reconstruct(records, kind, alpha, n=device.n)
            rmse.append(math.sqrt(np.mean(np.abs(report.u_hat - device.u) ** 2)))
            se.append(float(np.mean(report.u_std_error)))
        rows.append((m, float(np.mean(rmse)), float(np.mean(se))))
    return rows, loglog_slope([r[0] for r in rows], [r[1] for r in rows])


def cmd_shot_noise_study(config: RunConfig, shot_grid, repeats: int = 10) -> dict:
    device = config.load()
    seed = config.seed if config.seed is not None else 0
    rows, slope = shot_noise_study(device, shot_grid, config.alpha, seed, repeats, config.jobs)
    path = config.out
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "shot_noise.csv"
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shots", "rmse", "std_error"])
        w.writerows(rows)
        fh.write(f"# loglog_slope,{slope!r}\n")
    return {"path": str(path), "slope": slope, "rows": [list(r) for r in rows]}


def _load_matrices(path):
    """``(U, V)`` from a device file or a reconstruction report."""
    data = json.loads(Path(path).read_text())
    if "u_hat" in data:
        v = data.get("v_hat")
        return matrix_from_json(data["u_hat"], "u_hat"), None if v is None else matrix_from_json(v, "v_hat")
    device = device_from_dict(data, check=False)
    inner = device.inner if isinstance(device, LossyDevice) else device
    return inner.u, inner.v if isinstance(inner, BogoliubovDevice) else None


def cmd_compare(path_a, path_b) -> dict:
    ua, va = _load_matrices(path_a)
    ub, vb = _load_matrices(path_b)
    out = {"frobenius_u": frobenius_distance(ua, ub)}
    if va is not None or vb is not None:
        va = np.zeros_like(ua) if va is None else va
        vb = np.zeros_like(ub) if vb is None else vb
        out["frobenius_v"] = frobenius_distance(va, vb)
    return out


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _int_or_none(v):
    return None if v in (None, "") else int(v, 0) if isinstance(v, str) else int(v)


def _add_device_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--device", default=_env("device"), help="device JSON file")
    p.add_argument("--kind", choices=["unitary", "bogoliubov"], default=_env("kind"),
                   help="generate a random device of this kind instead of loading one")
    p.add_argument("--n", type=int, default=_env("n"), help="mode count for a generated device")
    p.add_argument("--device-seed", type=_int_or_none, default=_env("device_seed"),
                   help="seed for the generated device (defaults to --seed)")
    p.add_argument("--max-squeeze", type=float, default=_env("max_squeeze", "0.5"))
    p.add_argument("--eta", type=parse_floats, default=_env("eta"),
                   help="comma-separated amplitude transmissivities (intensity transmission is eta^2)")


def _add_probe_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=parse_alpha, default=_env("alpha", "1,0"), help="coherent amplitude 're,im'")
    p.add_argument("--shots", type=int, default=_env("shots", "0"), help="shots per setting; 0 = exact")
    p.add_argument("--seed", type=_int_or_none, default=_env("seed"), help="sampling seed")
    p.add_argument("--jobs", type=int, default=_env("jobs", "1"), help="worker threads for probe simulation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mztomo", description="Mach-Zehnder probe tomography of optical devices")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random device file")
    g.add_argument("--kind", choices=["unitary", "bogoliubov"], default=_env("kind", "unitary"))
    g.add_argument("--n", type=int, default=_env("n"), required=_env("n") is None)
    g.add_argument("--seed", type=_int_or_none, default=_env("seed"))
    g.add_argument("--max-squeeze", type=float, default=_env("max_squeeze", "0.5"))
    g.add_argument("--eta", type=parse_floats, default=_env("eta"),
                   help="comma-separated amplitude transmissivities; makes the device lossy")
    g.add_argument("--out", default=_env("out", "device.json"))

    v = sub.add_parser("validate", help="check a device file's invariants")
    v.add_argument("--device", default=_env("device"), required=_env("device") is None)

    t = sub.add_parser("tomography", help="plan, simulate, reconstruct and score")
    _add_device_source(t)
    _add_probe_flags(t)
    t.add_argument("--out", default=_env("out", "out"), help="output directory")
    t.add_argument("--csv", action="store_true", help="also write per-entry errors as CSV")
    t.add_argument("--no-records", action="store_true", help="skip the records JSONL file")

    s = sub.add_parser("shot-noise-study", help="RMSE of U versus shots per setting")
    _add_device_source(s)
    _add_probe_flags(s)
    s.add_argument("--shot-grid", type=parse_ints, default=_env("shot_grid", "100,10000,1000000"))
    s.add_argument("--repeats", type=int, default=_env("repeats", "10"))
    s.add_argument("--out", default=_env("out", "shot_noise.csv"), help="CSV path or directory")

    c = sub.add_parser("compare", help="Frobenius distance between two device or report files")
    c.add_argument("a")
    c.add_argument("b")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            if args.eta is not None and len(args.eta) != args.n:
                raise InvalidSettingError(f"--eta has {len(args.eta)} values, --n is {args.n}")
            result = cmd_generate(args.kind, args.n, args.seed, args.max_squeeze, args.eta, args.out)
            code = 0
        elif args.command == "validate":
            result = cmd_validate(args.device)
            code = 0 if result["valid"] else InvalidDeviceError.exit_code
        elif args.command == "tomography":
            result = cmd_tomography(RunConfig.from_args(args))
            code = 0
        elif args.command == "shot-noise-study":
            result = cmd_shot_noise_study(RunConfig.from_args(args), args.shot_grid, args.repeats)
            code = 0
        else:
            result = cmd_compare(args.a, args.b)
            code = 0
    except TomographyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result, indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
