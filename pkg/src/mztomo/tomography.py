"""Probe scheduling and linear-inversion reconstruction of U, V and eta."""

from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .algebra import frobenius_distance, is_unitary
from .devices import matrix_to_json
from .errors import (
    AmbiguousPlanError,
    ClampWarning,
    IncompletePlanError,
    InvalidDimensionError,
    InvalidRecordError,
    InvalidSettingError,
    LowAmplitudeWarning,
    ProtocolMismatchError,
    UnrecoverableRowError,
)
from .interferometer import (
    PHASES,
    MeasurementRecord,
    ProbeKind,
    ProbeSetting,
    sample_observable,
)

__all__ = [
    "DeviceKind",
    "ProbePlan",
    "ReconstructionReport",
    "plan_probes",
    "plan_size",
    "run_plan",
    "reconstruct_unitary",
    "reconstruct_bogoliubov",
    "estimate_losses",
    "reconstruct_lossy",
    "reconstruct",
    "DEFLATION_THRESHOLD",
]

DEFLATION_THRESHOLD = 1e-6
LOW_ALPHA = 0.1


class DeviceKind(str, enum.Enum):
    UNITARY = "unitary"
    BOGOLIUBOV = "bogoliubov"
    LOSSY_UNITARY = "lossy_unitary"
    LOSSY_BOGOLIUBOV = "lossy_bogoliubov"

    @property
    def lossy(self) -> bool:
        return self in (DeviceKind.LOSSY_UNITARY, DeviceKind.LOSSY_BOGOLIUBOV)

    @property
    def bogoliubov(self) -> bool:
        return self in (DeviceKind.BOGOLIUBOV, DeviceKind.LOSSY_BOGOLIUBOV)

    @classmethod
    def of(cls, device) -> "DeviceKind":
        return cls(device.kind)


@dataclass(frozen=True)
class ProbePlan:
    kind: DeviceKind
    n: int
    settings: tuple
    alpha: complex
    shots: int

    def __len__(self) -> int:
        return len(self.settings)


def plan_size(kind, n: int) -> int:
    """Closed-form number of settings in a plan."""
    kind = DeviceKind(kind)
    size = 2 * n * n
    if kind.bogoliubov:
        size *= 2
    if kind.lossy:
        size += n
    return size


def _matrix_block(kind: ProbeKind, n: int, alpha: complex, shots: int) -> list:
    return [
        ProbeSetting(kind, p, q, phi, alpha, shots)
        for p in range(1, n + 1)
        for q in range(1, n + 1)
        for phi in PHASES
    ]


def plan_probes(kind, n: int, alpha: complex = 1.0, shots: int = 0) -> ProbePlan:
    """Enumerate the settings needed to characterize an ``n``-mode device.

    Ordering is fixed: loss settings first (lossy kinds), then the matrix
    settings p-major, then q, then phi = 0 before phi = pi/2. Bogoliubov plans
    put the single-photon block before the coherent block.
    """
    kind = DeviceKind(kind)
    if n < 1:
        raise InvalidDimensionError(f"mode count must be >= 1, got {n}")
    alpha = complex(alpha)
    if alpha == 0:
        raise InvalidSettingError("alpha must be non-zero")
    if shots < 0:
        raise InvalidSettingError(f"shots must be >= 0, got {shots}")

    settings = []
    if kind.lossy:
        loss_kind = ProbeKind.LOSS_SINGLE_PHOTON if kind.bogoliubov else ProbeKind.LOSS_COHERENT
        settings += [ProbeSetting(loss_kind, p, 1, 0.0, alpha, shots) for p in range(1, n + 1)]
    if kind.bogoliubov:
        settings += _matrix_block(ProbeKind.SINGLE_PHOTON, n, alpha, shots)
    settings += _matrix_block(ProbeKind.COHERENT, n, alpha, shots)
    return ProbePlan(kind, n, tuple(settings), alpha, shots)


def run_plan(device, plan: ProbePlan, seed=None, jobs: int = 1) -> list[MeasurementRecord]:
    """Simulate every setting of ``plan`` on ``device``.

    Each setting gets its own child of ``SeedSequence(seed)``, so the records
    do not depend on ``jobs`` or on execution order.
    """
    if plan.n != device.n:
        raise InvalidDimensionError(f"plan is for {plan.n} modes, device has {device.n}")
    if plan.shots > 0 and seed is None:
        raise InvalidSettingError("a seed is required for sampled runs")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed if seed is not None else 0)
    children = [
        np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,)) for i in range(len(plan.settings))
    ]

    def one(i):
        return sample_observable(device, plan.settings[i], np.random.default_rng(children[i]))

    if jobs <= 1:
        return [one(i) for i in range(len(plan.settings))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(plan.settings))))


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass
class ReconstructionReport:
    u_hat: np.ndarray
    u_std_error: np.ndarray
    v_hat: Optional[np.ndarray] = None
    v_std_error: Optional[np.ndarray] = None
    eta_hat: Optional[np.ndarray] = None
    eta_std_error: Optional[np.ndarray] = None
    frobenius_error_u: Optional[float] = None
    frobenius_error_v: Optional[float] = None
    eta_max_error: Optional[float] = None
    settings_used: int = 0
    total_shots: int = 0
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.u_hat.shape[0]

    def score(self, device) -> "ReconstructionReport":
        """Fill in the error metrics against a ground-truth device."""
        self.frobenius_error_u = frobenius_distance(self.u_hat, device.u)
        if self.v_hat is not None:
            self.frobenius_error_v = frobenius_distance(self.v_hat, device.v)
        if self.eta_hat is not None:
            self.eta_max_error = float(np.max(np.abs(self.eta_hat - device.eta)))
        return self

    def to_dict(self) -> dict:
        def opt_matrix(m):
            return None if m is None else matrix_to_json(m)

        def opt_vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "n": self.n,
            "u_hat": matrix_to_json(self.u_hat),
            "u_std_error": self.u_std_error.tolist(),
            "v_hat": opt_matrix(self.v_hat),
            "v_std_error": None if self.v_std_error is None else self.v_std_error.tolist(),
            "eta_hat": opt_vec(self.eta_hat),
            "eta_std_error": opt_vec(self.eta_std_error),
            "frobenius_error_u": self.frobenius_error_u,
            "frobenius_error_v": self.frobenius_error_v,
            "eta_max_error": self.eta_max_error,
            "settings_used": self.settings_used,
            "total_shots": self.total_shots,
            "warnings": list(self.warnings),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_error_csv(self, path, device) -> None:
        """Per-entry absolute errors with 1-based mode labels."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["matrix", "p", "q", "estimate_re", "estimate_im", "abs_error", "std_error"])
            blocks = [("U", self.u_hat, device.u, self.u_std_error)]
            if self.v_hat is not None:
                blocks.append(("V", self.v_hat, device.v, self.v_std_error))
            for name, est, truth, se in blocks:
                for (p, q), z in np.ndenumerate(est):
                    w.writerow([name, p + 1, q + 1, float(z.real), float(z.imag),
                                float(abs(z - truth[p, q])), float(se[p, q])])


# --------------------------------------------------------------------------
# Record bookkeeping
# --------------------------------------------------------------------------


def _index(records: Sequence[MeasurementRecord], kind: ProbeKind) -> dict:
    table = {}
    for rec in records:
        s = rec.setting
        if s.kind is not kind:
            continue
        if s.key in table:
            raise AmbiguousPlanError(f"duplicate setting {s.kind.value} p={s.p} q={s.q} phi={s.phi}")
        table[s.key] = rec
    return table


def _infer_n(records: Sequence[MeasurementRecord]) -> int:
    if not records:
        raise IncompletePlanError("no measurement records supplied")
    return max(max(r.setting.p, r.setting.q if not r.setting.kind.is_loss else 1) for r in records)


def _phase_pairs(table: dict, kind: ProbeKind, n: int):
    """Complex ``D_0 + i D_{pi/2}`` per entry, with its standard errors."""
    z = np.empty((n, n), dtype=np.complex128)
    se = np.empty((n, n), dtype=np.complex128)
    for p in range(1, n + 1):
        for q in range(1, n + 1):
            pair = []
            for phi in PHASES:
                rec = table.get((kind.value, p, q, phi))
                if rec is None:
                    label = "0" if phi == 0 else "pi/2"
                    raise IncompletePlanError(f"missing {kind.value} setting p={p} q={q} phi={label}")
                pair.append(rec)
            z[p - 1, q - 1] = complex(pair[0].observable, pair[1].observable)
            se[p - 1, q - 1] = complex(pair[0].std_error, pair[1].std_error)
    return z, se


def _check_extra(table: dict, n: int, kind: ProbeKind) -> None:
    for key in table:
        p, q = key[1], key[2]
        if p > n or q > n:
            raise InvalidRecordError(f"{kind.value} record p={p} q={q} exceeds mode count {n}")


def _alpha(records, alpha) -> complex:
    if alpha is not None:
        return complex(alpha)
    for rec in records:
        if rec.setting.kind is ProbeKind.COHERENT:
            return rec.setting.alpha
    return 1.0 + 0.0j


def _check_alpha(records, alpha: complex) -> None:
    for rec in records:
        if rec.setting.kind.is_coherent and rec.setting.alpha != alpha:
            raise InvalidRecordError(
                f"record p={rec.setting.p} q={rec.setting.q} used alpha={rec.setting.alpha}, expected {alpha}"
            )


def _shots(records) -> int:
    return int(sum(r.setting.shots for r in records))


# --------------------------------------------------------------------------
# Reconstruction
# --------------------------------------------------------------------------


def _unitary_block(records, alpha: complex, n: int, row_scale: np.ndarray):
    table = _index(records, ProbeKind.COHERENT)
    _check_extra(table, n, ProbeKind.COHERENT)
    z, se = _phase_pairs(table, ProbeKind.COHERENT, n)
    scale = abs(alpha) ** 2 * row_scale[:, None]
    return z / scale, np.abs(se) / scale, len(table)


def reconstruct_unitary(records, alpha=None, n: Optional[int] = None, truth=None) -> ReconstructionReport:
    """Invert coherent intensity differences into ``U``.

    ``U_pq = (D_0 + i D_{pi/2}) / |alpha|^2`` where ``D_phi`` is the observed
    difference at phase ``phi``. The raw estimate is returned; no projection
    onto the unitary group is applied.
    """
    records = list(records)
    alpha = _alpha(records, alpha)
    _check_alpha(records, alpha)
    n = n or _infer_n(records)
    u_hat, u_se, used = _unitary_block(records, alpha, n, np.ones(n))
    report = ReconstructionReport(u_hat, u_se, settings_used=used, total_shots=_shots(records))
    if truth is not None:
        report.score(truth)
    return report


def _bogoliubov_blocks(records, alpha: complex, n: int, row_scale: np.ndarray, report_warnings: list):
    if abs(alpha) < LOW_ALPHA:
        msg = f"|alpha| = {abs(alpha):.3g} < {LOW_ALPHA}; V estimates will be noise dominated"
        warnings.warn(msg, LowAmplitudeWarning, stacklevel=3)
        report_warnings.append(msg)

    single = _index(records, ProbeKind.SINGLE_PHOTON)
    coherent = _index(records, ProbeKind.COHERENT)
    _check_extra(single, n, ProbeKind.SINGLE_PHOTON)
    _check_extra(coherent, n, ProbeKind.COHERENT)

    s, s_se = _phase_pairs(single, ProbeKind.SINGLE_PHOTON, n)
    u_hat = s / row_scale[:, None]
    u_se = np.abs(s_se) / row_scale[:, None]

    c, c_se = _phase_pairs(coherent, ProbeKind.COHERENT, n)
    ac = alpha.conjugate()
    beta = c / (ac * row_scale[:, None])
    beta_se = np.abs(c_se) / (abs(alpha) * row_scale[:, None])
    v_hat = np.conj((beta - alpha * u_hat) / ac)
    v_se = np.sqrt(beta_se**2 + abs(alpha) ** 2 * u_se**2) / abs(alpha)
    return u_hat, u_se, v_hat, v_se, len(single) + len(coherent)


def reconstruct_bogoliubov(records, alpha=None, n: Optional[int] = None, truth=None) -> ReconstructionReport:
    """Recover ``U`` from single-photon probes, then ``V`` from coherent probes.

    The single-photon block gives ``U_pq = S_0 + i S_{pi/2}`` directly. The
    coherent block gives ``beta_pq = (C_0 + i C_{pi/2}) / alpha^*`` and
    ``V_pq = conj((beta_pq - alpha U_pq) / alpha^*)``.
    """
    records = list(records)
    alpha = _alpha(records, alpha)
    _check_alpha(records, alpha)
    n = n or _infer_n(records)
    notes: list = []
    u_hat, u_se, v_hat, v_se, used = _bogoliubov_blocks(records, alpha, n, np.ones(n), notes)
    report = ReconstructionReport(
        u_hat, u_se, v_hat=v_hat, v_std_error=v_se, settings_used=used, total_shots=_shots(records), warnings=notes
    )
    if truth is not None:
        report.score(truth)
    return report


def estimate_losses(records, n: Optional[int] = None, report_warnings: Optional[list] = None):
    """Transmissivity per input mode from loss-probe records.

    Returns ``(eta_hat, eta_std_error)``. Coherent probes give
    ``sqrt(I / |alpha|^2)``; single-photon probes give ``sqrt(P)``. Estimates
    above one are clamped with a :class:`ClampWarning`.
    """
    loss = [r for r in records if r.setting.kind.is_loss]
    kinds = {r.setting.kind for r in loss}
    if len(kinds) > 1:
        raise AmbiguousPlanError("loss records mix coherent and single-photon probes")
    table = {}
    for rec in loss:
        if rec.setting.p in table:
            raise AmbiguousPlanError(f"duplicate loss setting for mode {rec.setting.p}")
        table[rec.setting.p] = rec
    n = n or (max(table) if table else 0)
    if n < 1:
        raise IncompletePlanError("no loss-estimation records supplied")

    eta = np.empty(n)
    eta_se = np.empty(n)
    for p in range(1, n + 1):
        rec = table.get(p)
        if rec is None:
            raise IncompletePlanError(f"missing loss setting for mode {p}")
        scale = abs(rec.setting.alpha) ** 2 if rec.setting.kind is ProbeKind.LOSS_COHERENT else 1.0
        fraction = rec.observable / scale
        if fraction < 0:
            if rec.std_error == 0:
                raise InvalidRecordError(f"negative transmitted intensity {rec.observable} for mode {p}")
            msg = f"mode {p}: negative transmission estimate {fraction:.3g} clamped to 0"
            warnings.warn(msg, ClampWarning, stacklevel=2)
            if report_warnings is not None:
                report_warnings.append(msg)
            fraction = 0.0
        elif fraction > 1:
            msg = f"mode {p}: transmission estimate {fraction:.6g} exceeds 1, clamped"
            warnings.warn(msg, ClampWarning, stacklevel=2)
            if report_warnings is not None:
                report_warnings.append(msg)
            fraction = 1.0
        eta[p - 1] = math.sqrt(fraction)
        se = rec.std_error / scale
        eta_se[p - 1] = se / (2 * eta[p - 1]) if eta[p - 1] > 0 else math.sqrt(se)
    return eta, eta_se


def reconstruct_lossy(
    records,
    alpha=None,
    kind="lossy_unitary",
    n: Optional[int] = None,
    threshold: float = DEFLATION_THRESHOLD,
    truth=None,
) -> ReconstructionReport:
    """Estimate the transmissivities, then reconstruct with each row deflated.

    Row ``p`` of ``U`` (and of ``V``) is divided by the estimated ``eta_p``.
    A mode whose estimate is at or below ``threshold`` raises
    :class:`UnrecoverableRowError` naming that (1-based) mode.
    """
    kind = DeviceKind(kind)
    if kind is DeviceKind.UNITARY:
        kind = DeviceKind.LOSSY_UNITARY
    elif kind is DeviceKind.BOGOLIUBOV:
        kind = DeviceKind.LOSSY_BOGOLIUBOV
    records = list(records)
    alpha = _alpha(records, alpha)
    _check_alpha(records, alpha)
    matrix_records = [r for r in records if not r.setting.kind.is_loss]
    n = n or _infer_n(matrix_records)
    expected_loss = ProbeKind.LOSS_SINGLE_PHOTON if kind.bogoliubov else ProbeKind.LOSS_COHERENT
    if any(r.setting.kind.is_loss and r.setting.kind is not expected_loss for r in records):
        raise ProtocolMismatchError(f"{kind.value} reconstruction expects {expected_loss.value} loss probes")

    notes: list = []
    eta_hat, eta_se = estimate_losses(records, n=n, report_warnings=notes)
    for p, e in enumerate(eta_hat, start=1):
        if e <= threshold:
            raise UnrecoverableRowError(p, float(e), threshold)

    loss_count = n
    if kind.bogoliubov:
        u_hat, u_se, v_hat, v_se, used = _bogoliubov_blocks(matrix_records, alpha, n, eta_hat, notes)
    else:
        u_hat, u_se, used = _unitary_block(matrix_records, alpha, n, eta_hat)
        v_hat = v_se = None
    report = ReconstructionReport(
        u_hat,
        u_se,
        v_hat=v_hat,
        v_std_error=v_se,
        eta_hat=eta_hat,
        eta_std_error=eta_se,
        settings_used=used + loss_count,
        total_shots=_shots(records),
        warnings=notes,
    )
    if truth is not None:
        report.score(truth)
    return report


def reconstruct(records, kind, alpha=None, n: Optional[int] = None, truth=None) -> ReconstructionReport:
    """Dispatch to the reconstruction matching ``kind``."""
    kind = DeviceKind(kind)
    if kind.lossy:
        return reconstruct_lossy(records, alpha, kind, n=n, truth=truth)
    if kind.bogoliubov:
        return reconstruct_bogoliubov(records, alpha, n=n, truth=truth)
    return reconstruct_unitary(records, alpha, n=n, truth=truth)


def exact_unitarity_ok(report: ReconstructionReport, tol: float = 1e-8) -> bool:
    return is_unitary(report.u_hat, tol)
