"""Device models: unitary, Bogoliubov and lossy embeddings of either.

Loss sits on the input side only. Each input mode ``i`` passes through a
fictitious beamsplitter of amplitude transmissivity ``eta[i]`` that couples it
to an inaccessible ancilla mode ``N + i``; the intensity transmission is
``eta[i]**2``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .algebra import DEFAULT_TOL, as_complex_matrix
from .errors import InvalidDeviceError, InvalidDimensionError, OpaqueModeWarning

__all__ = [
    "UnitaryDevice",
    "BogoliubovDevice",
    "LossModel",
    "LossyDevice",
    "Violation",
    "ValidationReport",
    "embed_lossy_unitary",
    "embed_lossy_bogoliubov",
    "validate",
    "device_to_dict",
    "device_from_dict",
    "save_device",
    "load_device",
    "matrix_to_json",
    "matrix_from_json",
]


@dataclass(frozen=True, eq=False)
class UnitaryDevice:
    """Passive linear device, ``a_i^dagger = U_ij b_j^dagger``."""

    u: np.ndarray

    def __post_init__(self):
        u = as_complex_matrix(self.u, "u")
        if u.shape[0] != u.shape[1]:
            raise InvalidDimensionError(f"u must be square, got {u.shape}")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def v(self) -> np.ndarray:
        return np.zeros_like(self.u)

    @property
    def eta(self) -> np.ndarray:
        return np.ones(self.n)

    kind = "unitary"


@dataclass(frozen=True, eq=False)
class BogoliubovDevice:
    """Quadratic device, ``a_i^dagger = U_ij b_j^dagger + V_ij b_j``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = as_complex_matrix(self.u, "u")
        v = as_complex_matrix(self.v, "v")
        if u.shape[0] != u.shape[1] or u.shape != v.shape:
            raise InvalidDimensionError(f"u and v must be square and equal-shaped, got {u.shape}, {v.shape}")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def eta(self) -> np.ndarray:
        return np.ones(self.n)

    kind = "bogoliubov"


@dataclass(frozen=True, eq=False)
class LossModel:
    """Per-input-mode amplitude transmissivities."""

    eta: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(eta)):
            raise InvalidDeviceError("eta contains non-finite entries")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def eta_tilde(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.eta**2, 0.0, None))


@dataclass(frozen=True, eq=False)
class LossyDevice:
    inner: Union[UnitaryDevice, BogoliubovDevice]
    loss: LossModel

    def __post_init__(self):
        if not isinstance(self.loss, LossModel):
            object.__setattr__(self, "loss", LossModel(self.loss))
        if len(self.loss.eta) != self.inner.n:
            raise InvalidDimensionError(
                f"eta has {len(self.loss.eta)} entries but the device has {self.inner.n} modes"
            )

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def u(self) -> np.ndarray:
        return self.inner.u

    @property
    def v(self) -> np.ndarray:
        return self.inner.v

    @property
    def eta(self) -> np.ndarray:
        return self.loss.eta

    @property
    def kind(self) -> str:
        return "lossy_" + self.inner.kind


Device = Union[UnitaryDevice, BogoliubovDevice, LossyDevice]


def _lossy_parts(d: LossyDevice, inner_type):
    if not isinstance(d, LossyDevice):
        raise TypeError(f"expected a LossyDevice, got {type(d).__name__}")
    if not isinstance(d.inner, inner_type):
        raise TypeError(f"expected a {inner_type.__name__} inner device, got {type(d.inner).__name__}")
    n = d.n
    eta = np.diag(d.loss.eta).astype(np.complex128)
    eta_t = np.diag(d.loss.eta_tilde).astype(np.complex128)
    return n, eta, eta_t


def embed_lossy_unitary(d: LossyDevice) -> np.ndarray:
    r"""The :math:`2N\times 2N` unitary ``[[eta U, -eta~], [eta~ U, eta]]``."""
    n, eta, eta_t = _lossy_parts(d, UnitaryDevice)
    ident = np.eye(n, dtype=np.complex128)
    return np.block([[eta @ d.u, -eta_t @ ident], [eta_t @ d.u, eta @ ident]])


def embed_lossy_bogoliubov(d: LossyDevice) -> tuple[np.ndarray, np.ndarray]:
    """Creation block ``A`` and annihilation block ``B`` of the 2N-mode map.

    ``a^dagger = A c^dagger + B c`` with ``c = (b_1..b_N, a'_{N+1}..a'_{2N})``.
    """
    n, eta, eta_t = _lossy_parts(d, BogoliubovDevice)
    ident = np.eye(n, dtype=np.complex128)
    zero = np.zeros((n, n), dtype=np.complex128)
    a = np.block([[eta @ d.u, -eta_t @ ident], [eta_t @ d.u, eta @ ident]])
    b = np.block([[eta @ d.v, zero], [eta_t @ d.v, zero]])
    return a, b


@dataclass(frozen=True)
class Violation:
    invariant: str
    residual: float
    message: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "valid": self.ok,
            "violations": [
                {"invariant": v.invariant, "residual": v.residual, "message": v.message}
                for v in self.violations
            ],
            "warnings": list(self.warnings),
        }


def validate(device, tol: float = DEFAULT_TOL, allow_nonphysical: bool = False) -> ValidationReport:
    """Check every device invariant and report the residual of each violation.

    An empty report (``report.ok``) means the device is valid. Opaque
    input modes (``eta == 0``) are legal but recorded under ``warnings``.

    ``allow_nonphysical`` skips the ``U V^T`` symmetry check for Bogoliubov
    devices, which only the commutator constraint strictly requires.
    """
    report = ValidationReport()
    inner = device.inner if isinstance(device, LossyDevice) else device
    n = inner.n
    ident = np.eye(n)

    if isinstance(inner, UnitaryDevice):
        res = float(np.max(np.abs(inner.u @ inner.u.conj().T - ident)))
        if res > tol:
            report.violations.append(Violation("unitarity", res, "max |U U^dagger - I|"))
    elif isinstance(inner, BogoliubovDevice):
        u, v = inner.u, inner.v
        res = float(np.max(np.abs(u @ u.conj().T - v @ v.conj().T - ident)))
        if res > tol:
            report.violations.append(
                Violation("bogoliubov_constraint", res, "max |U U^dagger - V V^dagger - I|")
            )
        if not allow_nonphysical:
            uvt = u @ v.T
            res = float(np.max(np.abs(uvt - uvt.T)))
            if res > tol:
                report.violations.append(Violation("uvt_symmetry", res, "max |U V^T - (U V^T)^T|"))
    else:
        raise TypeError(f"unsupported device type {type(device).__name__}")

    if isinstance(device, LossyDevice):
        eta = device.loss.eta
        out_of_range = np.maximum(eta - 1.0, 0.0) + np.maximum(-eta, 0.0)
        if np.any(out_of_range > 0):
            report.violations.append(
                Violation("eta_range", float(np.max(out_of_range)), "eta must lie in [0, 1]")
            )
        for i in np.flatnonzero(eta == 0.0):
            report.warnings.append(f"mode {i + 1} is opaque (eta = 0); its row cannot be reconstructed")
    return report


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidDeviceError(f"{name} must be a nested array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def device_to_dict(device) -> dict:
    inner = device.inner if isinstance(device, LossyDevice) else device
    out = {"kind": inner.kind, "n": inner.n, "u": matrix_to_json(inner.u)}
    if isinstance(inner, BogoliubovDevice):
        out["v"] = matrix_to_json(inner.v)
    if isinstance(device, LossyDevice):
        out["eta"] = [float(x) for x in device.loss.eta]
    return out


def device_from_dict(data: dict, check: bool = True, tol: float = DEFAULT_TOL, allow_nonphysical: bool = False):
    """Build a device from its JSON form; validates unless ``check`` is false."""
    try:
        kind = data["kind"]
        n = int(data["n"])
        u = matrix_from_json(data["u"], "u")
    except KeyError as exc:
        raise InvalidDeviceError(f"device file is missing field {exc.args[0]!r}") from exc
    if u.shape != (n, n):
        raise InvalidDeviceError(f"u has shape {u.shape}, expected ({n}, {n})")
    if kind == "unitary":
        device = UnitaryDevice(u)
    elif kind == "bogoliubov":
        if "v" not in data:
            raise InvalidDeviceError("bogoliubov device file is missing field 'v'")
        v = matrix_from_json(data["v"], "v")
        if v.shape != (n, n):
            raise InvalidDeviceError(f"v has shape {v.shape}, expected ({n}, {n})")
        device = BogoliubovDevice(u, v)
    else:
        raise InvalidDeviceError(f"unknown device kind {kind!r}")
    if data.get("eta") is not None:
        device = LossyDevice(device, LossModel(data["eta"]))

    if check:
        report = validate(device, tol=tol, allow_nonphysical=allow_nonphysical)
        if not report.ok:
            details = "; ".join(f"{v.invariant} residual {v.residual:.3g}" for v in report.violations)
            raise InvalidDeviceError(f"invalid device: {details}")
        for msg in report.warnings:
            warnings.warn(msg, OpaqueModeWarning, stacklevel=2)
    return device


def save_device(device, path) -> None:
    Path(path).write_text(json.dumps(device_to_dict(device), indent=2, sort_keys=True) + "\n")


def load_device(path, check: bool = True, **kwargs):
    return device_from_dict(json.loads(Path(path).read_text()), check=check, **kwargs)
