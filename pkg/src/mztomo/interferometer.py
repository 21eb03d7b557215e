"""Probe experiments through the modified Mach-Zehnder interferometer.

Mode ``p`` of the device sits in the lower arm, between two identical 50:50
beamsplitters ``(1/sqrt2)[[1, i], [i, 1]]``. A phase ``e^{i phi}`` sits in
the upper (reference) arm. Detector ``b~1`` minus detector ``b~0`` is the
observable for the interferometric probe kinds. The two loss kinds skip the
interferometer: light is sent straight into input mode ``p`` and every
accessible output is summed.

Three routes compute the same quantities:

* :func:`expected_observable` evaluates the closed forms.
* :func:`oracle_observable` pushes mode-operator coefficients through the
  explicit element chain and never uses a closed form.
* :func:`sample_observable` draws finite-shot detector counts.

Single-photon probes of Bogoliubov devices follow the usual simplification
that the output vacuum is annihilated by every ``b_j``. The spontaneous pair
background a real squeezer would emit is not modelled, so the propagated
one-photon weights need not sum to one.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .devices import BogoliubovDevice, LossyDevice, UnitaryDevice
from .errors import (
    InvalidModeError,
    InvalidRecordError,
    InvalidSettingError,
    ProtocolMismatchError,
    SamplingCostWarning,
)

__all__ = [
    "ProbeKind",
    "ProbeSetting",
    "MeasurementRecord",
    "PHASES",
    "BEAMSPLITTER",
    "expected_observable",
    "oracle_observable",
    "detector_weights",
    "sample_observable",
    "record_to_dict",
    "record_from_dict",
    "write_records",
    "read_records",
]

PHASES = (0.0, math.pi / 2)
BEAMSPLITTER = np.array([[1, 1j], [1j, 1]], dtype=np.complex128) / math.sqrt(2.0)

# per-detector mean photon number above which Poisson sampling gets expensive
POISSON_WARN_MEAN = 1e6


class ProbeKind(str, enum.Enum):
    COHERENT = "coherent"
    SINGLE_PHOTON = "single_photon"
    LOSS_COHERENT = "loss_coherent"
    LOSS_SINGLE_PHOTON = "loss_single_photon"

    @property
    def is_coherent(self) -> bool:
        return self in (ProbeKind.COHERENT, ProbeKind.LOSS_COHERENT)

    @property
    def is_loss(self) -> bool:
        return self in (ProbeKind.LOSS_COHERENT, ProbeKind.LOSS_SINGLE_PHOTON)


@dataclass(frozen=True)
class ProbeSetting:
    """One experiment. Mode labels ``p`` and ``q`` are 1-based."""

    kind: ProbeKind
    p: int
    q: int = 1
    phi: float = 0.0
    alpha: complex = 1.0 + 0.0j
    shots: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProbeKind(self.kind))
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.phi not in PHASES:
            raise InvalidSettingError(f"phi must be exactly 0 or pi/2, got {self.phi!r}")
        if self.shots < 0:
            raise InvalidSettingError(f"shots must be >= 0, got {self.shots}")
        if self.kind.is_coherent and self.alpha == 0:
            raise InvalidSettingError("coherent probes need a non-zero alpha")

    @property
    def key(self) -> tuple:
        """Identity of the setting within a plan (shots excluded)."""
        if self.kind.is_loss:
            return (self.kind.value, self.p)
        return (self.kind.value, self.p, self.q, self.phi)


@dataclass
class MeasurementRecord:
    setting: ProbeSetting
    observable: float
    std_error: float = 0.0
    raw_counts: Optional[dict] = field(default=None)


# --------------------------------------------------------------------------
# Compatibility checks
# --------------------------------------------------------------------------


def _phase_factor(phi: float) -> complex:
    """``e^{i phi}``, exact for the two admissible phases."""
    return 1.0 + 0.0j if phi == 0 else 1j


def _inner(device):
    return device.inner if isinstance(device, LossyDevice) else device


def _check(device, setting: ProbeSetting) -> None:
    n = device.n
    if not 1 <= setting.p <= n:
        raise InvalidModeError(f"input mode p={setting.p} out of range 1..{n}")
    if not setting.kind.is_loss and not 1 <= setting.q <= n:
        raise InvalidModeError(f"output mode q={setting.q} out of range 1..{n}")
    inner = _inner(device)
    if not isinstance(inner, (UnitaryDevice, BogoliubovDevice)):
        raise ProtocolMismatchError(f"unsupported device type {type(device).__name__}")
    if setting.kind is ProbeKind.LOSS_COHERENT and isinstance(inner, BogoliubovDevice):
        # the summed output intensity mixes U and V rows; it does not isolate eta
        raise ProtocolMismatchError("coherent loss probes apply to unitary devices only")


# --------------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------------


def _beta(device, p: int, q: int, alpha: complex) -> complex:
    """``eta_p (alpha U_pq + alpha^* V_pq^*)`` for 0-based p, q."""
    inner = _inner(device)
    b = alpha * inner.u[p, q]
    if isinstance(inner, BogoliubovDevice):
        b += alpha.conjugate() * inner.v[p, q].conjugate()
    return device.eta[p] * b


def expected_observable(device, setting: ProbeSetting) -> float:
    """Closed-form expectation of the observable for ``setting``.

    coherent:
        ``Re[e^{-i phi} alpha^* beta_pq]`` with
        ``beta_pq = eta_p (alpha U_pq + alpha^* V_pq^*)``. For ``V = 0`` this
        is ``|alpha|^2 Re[e^{-i phi} eta_p U_pq]``.
    single_photon:
        ``Re[e^{-i phi} eta_p U_pq]``.
    loss_coherent:
        ``eta_p^2 |alpha|^2``.
    loss_single_photon:
        ``eta_p^2``.

    Lossless devices use ``eta_p = 1``.
    """
    _check(device, setting)
    p, q = setting.p - 1, setting.q - 1
    eta_p = float(device.eta[p])
    alpha = setting.alpha
    rot = _phase_factor(setting.phi).conjugate()
    kind = setting.kind

    if kind is ProbeKind.COHERENT:
        return float((rot * alpha.conjugate() * _beta(device, p, q, alpha)).real)
    if kind is ProbeKind.SINGLE_PHOTON:
        return float((rot * eta_p * _inner(device).u[p, q]).real)
    if kind is ProbeKind.LOSS_COHERENT:
        return eta_p**2 * abs(alpha) ** 2
    return eta_p**2


def detector_weights(device, setting: ProbeSetting) -> dict:
    """Closed-form mean detector readings for one probe.

    Interferometric kinds return ``{"b0", "b1", "other"}``: mean photon
    numbers for coherent probes, one-photon weights for single photons.
    Loss kinds return ``{"accessible", "lost"}``.
    """
    _check(device, setting)
    p, q = setting.p - 1, setting.q - 1
    inner = _inner(device)
    eta_p = float(device.eta[p])
    ephi = _phase_factor(setting.phi)
    kind = setting.kind

    if kind is ProbeKind.COHERENT:
        alpha = setting.alpha
        beta = _beta(device, p, q, alpha)
        b0 = abs(ephi * alpha - beta) ** 2 / 4
        b1 = abs(ephi * alpha + beta) ** 2 / 4
        # remaining lower-arm outputs j != q and the loss ancilla
        row = alpha * inner.u[p] + (alpha.conjugate() * inner.v[p].conj() if isinstance(inner, BogoliubovDevice) else 0)
        rest = eta_p**2 * (np.sum(np.abs(row) ** 2) - abs(row[q]) ** 2) / 2
        rest += (1 - eta_p**2) * abs(alpha) ** 2 / 2
        return {"b0": b0, "b1": b1, "other": float(rest)}
    if kind is ProbeKind.SINGLE_PHOTON:
        upq = eta_p * inner.u[p, q]
        b0 = abs(ephi - upq) ** 2 / 4
        b1 = abs(ephi + upq) ** 2 / 4
        row_norm = float(np.sum(np.abs(inner.u[p]) ** 2))
        rest = (eta_p**2 * (row_norm - abs(inner.u[p, q]) ** 2) + 1 - eta_p**2) / 2
        return {"b0": b0, "b1": b1, "other": float(rest)}
    if kind is ProbeKind.LOSS_COHERENT:
        total = abs(setting.alpha) ** 2
        return {"accessible": eta_p**2 * total, "lost": (1 - eta_p**2) * total}
    return {"accessible": eta_p**2, "lost": 1 - eta_p**2}


# --------------------------------------------------------------------------
# Propagation oracle
# --------------------------------------------------------------------------
#
# Global mode layout: index 0 is the reference arm, 1..N the device modes and
# N+1..2N the loss ancillas. Every element is a map a^dagger = A c^dagger + B c
# on this space. An operator sum_k x_k a_k^dagger + y_k a_k then becomes
# x' = A^T x + B^H y, y' = B^T x + A^H y in terms of the next stage's modes.


def _propagate(x, y, a, b):
    return a.T @ x + b.conj().T @ y, b.T @ x + a.conj().T @ y


def _two_mode(dim: int, i: int, j: int, m2: np.ndarray) -> np.ndarray:
    a = np.eye(dim, dtype=np.complex128)
    a[np.ix_([i, j], [i, j])] = m2
    return a


def _stages(device, setting: ProbeSetting):
    n = device.n
    dim = 2 * n + 1
    p, q = setting.p, setting.q
    inner = _inner(device)
    zero = np.zeros((dim, dim), dtype=np.complex128)

    stages = []
    if not setting.kind.is_loss:
        stages.append((_two_mode(dim, 0, p, BEAMSPLITTER), zero))
        phase = np.eye(dim, dtype=np.complex128)
        phase[0, 0] = _phase_factor(setting.phi)
        stages.append((phase, zero))

    loss = np.eye(dim, dtype=np.complex128)
    for i, eta in enumerate(device.eta, start=1):
        t = math.sqrt(max(1.0 - eta**2, 0.0))
        loss = loss @ _two_mode(dim, i, n + i, np.array([[eta, -t], [t, eta]]))
    stages.append((loss, zero))

    dev_a = np.eye(dim, dtype=np.complex128)
    dev_b = np.zeros((dim, dim), dtype=np.complex128)
    dev_a[1 : n + 1, 1 : n + 1] = inner.u
    if isinstance(inner, BogoliubovDevice):
        dev_b[1 : n + 1, 1 : n + 1] = inner.v
    stages.append((dev_a, dev_b))

    if not setting.kind.is_loss:
        stages.append((_two_mode(dim, 0, q, BEAMSPLITTER), zero))
    return dim, stages


def _output_operator(device, setting: ProbeSetting, x0: np.ndarray, y0: np.ndarray):
    _, stages = _stages(device, setting)
    x, y = x0, y0
    for a, b in stages:
        x, y = _propagate(x, y, a, b)
    return x, y


def oracle_observable(device, setting: ProbeSetting, return_amplitudes: bool = False):
    """Observable from explicit element-by-element propagation.

    Coherent probes propagate the displacement generator
    ``alpha a~^dagger - alpha^* a~``; the output displacement of each mode is
    its creation coefficient and the intensity is its modulus squared.
    Single photons propagate the creation operator and read the one-photon
    amplitudes from its creation part. Single-photon loss probes split the
    commutator ``[a_p, a_p^dagger] = 1`` across output modes; the accessible
    share ``sum_j |x_j|^2 - |y_j|^2`` is the detection weight.

    With ``return_amplitudes`` the creation coefficients over the global mode
    layout are returned as well.
    """
    _check(device, setting)
    n = device.n
    dim = 2 * n + 1
    kind = setting.kind
    x0 = np.zeros(dim, dtype=np.complex128)
    y0 = np.zeros(dim, dtype=np.complex128)
    inject = setting.p if kind.is_loss else 0  # a~0 shares index 0 before BS1
    if kind.is_coherent:
        x0[inject] = setting.alpha
        y0[inject] = -setting.alpha.conjugate()
    else:
        x0[inject] = 1.0

    x, y = _output_operator(device, setting, x0, y0)
    accessible = slice(1, n + 1)
    if kind is ProbeKind.LOSS_COHERENT:
        value = float(np.sum(np.abs(x[accessible]) ** 2))
    elif kind is ProbeKind.LOSS_SINGLE_PHOTON:
        value = float(np.sum(np.abs(x[accessible]) ** 2 - np.abs(y[accessible]) ** 2))
    else:
        # b~0 lands on index 0, b~1 on index q
        value = float(abs(x[setting.q]) ** 2 - abs(x[0]) ** 2)
    if return_amplitudes:
        return value, x
    return value


# --------------------------------------------------------------------------
# Finite-shot sampler
# --------------------------------------------------------------------------


def _stats(diff_sum: float, sq_sum: float, shots: int) -> tuple[float, float]:
    mean = diff_sum / shots
    if shots < 2:
        return mean, 0.0
    var = max(sq_sum - shots * mean**2, 0.0) / (shots - 1)
    return mean, math.sqrt(var / shots)


def _poisson_support(lam: float) -> np.ndarray:
    """Probabilities of counts 0..K, K chosen so the dropped tail is < 1e-15."""
    if lam == 0:
        return np.array([1.0])
    k_max = int(lam + 12 * math.sqrt(lam) + 40)
    k = np.arange(k_max + 1)
    log_pmf = k * math.log(lam) - lam - np.array([math.lgamma(x + 1) for x in k])
    pmf = np.exp(log_pmf)
    return pmf / pmf.sum()


_HISTOGRAM_MAX_CELLS = 200_000


def _poisson_difference(rng: np.random.Generator, lam0: float, lam1: float, shots: int):
    """Totals, sum and sum of squares of per-shot ``n1 - n0`` counts.

    When the joint count table is small compared with ``shots`` the table
    itself is drawn multinomially; this has exactly the distribution of
    ``shots`` independent per-shot draws.
    """
    pmf0, pmf1 = _poisson_support(lam0), _poisson_support(lam1)
    cells = len(pmf0) * len(pmf1)
    if cells <= _HISTOGRAM_MAX_CELLS and cells < shots:
        table = rng.multinomial(shots, np.outer(pmf0, pmf1).ravel()).reshape(len(pmf0), len(pmf1))
        k0 = np.arange(len(pmf0))[:, None]
        k1 = np.arange(len(pmf1))[None, :]
        d = k1 - k0
        t0 = int(np.sum(table * k0))
        t1 = int(np.sum(table * k1))
        return (t0, t1), float(t1 - t0), float(np.sum(table * d * d))
    n0 = rng.poisson(lam0, size=shots)
    n1 = rng.poisson(lam1, size=shots)
    d = (n1 - n0).astype(float)
    return (int(n0.sum()), int(n1.sum())), float(d.sum()), float(np.dot(d, d))


def _poisson_single(rng: np.random.Generator, lam: float, shots: int):
    """Total and sum of squares of per-shot Poisson counts."""
    pmf = _poisson_support(lam)
    if len(pmf) <= _HISTOGRAM_MAX_CELLS and len(pmf) < shots:
        hist = rng.multinomial(shots, pmf)
        k = np.arange(len(pmf))
        return int(np.sum(hist * k)), float(np.sum(hist * k * k))
    n = rng.poisson(lam, size=shots).astype(float)
    return int(n.sum()), float(np.dot(n, n))


def sample_observable(device, setting: ProbeSetting, seed=None) -> MeasurementRecord:
    """Finite-shot estimate of the observable.

    Coherent probes: per shot, every detector count is Poisson with the
    detector's exact mean (the accessible outputs are pooled for loss
    probes, whose sum is again Poisson). Single-photon probes: per shot, one categorical
    draw over the normalised one-photon weights. For Bogoliubov devices those
    weights sum to ``W > 1`` and the frequency difference is rescaled by
    ``W``; for unitary devices ``W = 1``.

    ``setting.shots == 0`` returns the exact value with zero standard error.
    """
    if setting.shots < 0:
        raise InvalidSettingError(f"shots must be >= 0, got {setting.shots}")
    if setting.shots == 0:
        return MeasurementRecord(setting, expected_observable(device, setting), 0.0, None)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = setting.shots
    weights = detector_weights(device, setting)
    kind = setting.kind

    if kind.is_coherent:
        names = ["b0", "b1"] if kind is ProbeKind.COHERENT else ["accessible"]
        for name in names:
            if weights[name] > POISSON_WARN_MEAN:
                warnings.warn(
                    f"detector {name} mean {weights[name]:.3g} photons per shot makes Poisson sampling slow",
                    SamplingCostWarning,
                    stacklevel=2,
                )
        if kind is ProbeKind.COHERENT:
            totals, diff_sum, sq_sum = _poisson_difference(rng, weights["b0"], weights["b1"], m)
            counts = {"b0": totals[0], "b1": totals[1]}
        else:
            total, sq_sum = _poisson_single(rng, weights["accessible"], m)
            diff_sum = total
            counts = {"accessible": total}
        mean, se = _stats(diff_sum, sq_sum, m)
        return MeasurementRecord(setting, float(mean), float(se), counts)

    names = list(weights)
    w = np.array([weights[k] for k in names], dtype=float)
    total = float(w.sum())
    tallies = rng.multinomial(m, w / total)
    counts = {k: int(c) for k, c in zip(names, tallies)}
    if kind is ProbeKind.SINGLE_PHOTON:
        # per-shot value is +1, -1 or 0
        diff_sum = counts["b1"] - counts["b0"]
        sq_sum = counts["b1"] + counts["b0"]
    else:
        diff_sum = sq_sum = counts["accessible"]
    mean, se = _stats(diff_sum, sq_sum, m)
    return MeasurementRecord(setting, float(total * mean), float(total * se), counts)


# --------------------------------------------------------------------------
# JSON-lines serialization
# --------------------------------------------------------------------------


def record_to_dict(record: MeasurementRecord) -> dict:
    s = record.setting
    return {
        "setting": {
            "kind": s.kind.value,
            "p": s.p,
            "q": s.q,
            "phi": s.phi,
            "alpha": [s.alpha.real, s.alpha.imag],
            "shots": s.shots,
        },
        "observable": record.observable,
        "std_error": record.std_error,
        "raw_counts": record.raw_counts,
    }


def record_from_dict(data: dict) -> MeasurementRecord:
    try:
        s = data["setting"]
        re, im = s.get("alpha", [1.0, 0.0])
        setting = ProbeSetting(
            kind=ProbeKind(s["kind"]),
            p=int(s["p"]),
            q=int(s.get("q", 1)),
            phi=float(s.get("phi", 0.0)),
            alpha=complex(re, im),
            shots=int(s.get("shots", 0)),
        )
        return MeasurementRecord(
            setting,
            float(data["observable"]),
            float(data.get("std_error", 0.0)),
            data.get("raw_counts"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSettingError):
            raise
        raise InvalidRecordError(f"malformed measurement record: {exc}") from exc


def write_records(records: Iterable[MeasurementRecord], path) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), sort_keys=True) + "\n")


def read_records(path) -> list[MeasurementRecord]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(record_from_dict(json.loads(line)))
    return out
