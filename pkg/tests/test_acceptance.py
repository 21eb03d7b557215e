"""Exit criteria for the package, one test per criterion.

Each test prints a single PASS/FAIL line (visible without ``-s``).
"""

import itertools
import math
import time

import numpy as np
import pytest

from mztomo.algebra import haar_random_unitary, is_unitary, random_bogoliubov
from mztomo.cli import shot_noise_study
from mztomo.devices import BogoliubovDevice, LossyDevice, UnitaryDevice, embed_lossy_unitary
from mztomo.errors import UnrecoverableRowError
from mztomo.interferometer import PHASES, ProbeKind, ProbeSetting, expected_observable, oracle_observable
from mztomo.tomography import (
    DeviceKind,
    plan_probes,
    reconstruct,
    reconstruct_bogoliubov,
    reconstruct_lossy,
    reconstruct_unitary,
    run_plan,
)


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail

    return emit


def exact(device, kind, alpha=1.0):
    plan = plan_probes(kind, device.n, alpha)
    return plan, run_plan(device, plan)


def test_ac1_unitary_round_trip(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, counts_ok = 0.0, True
    for i in range(20):
        n = 2 + i % 7
        d = UnitaryDevice(haar_random_unitary(n, rng))
        plan, recs = exact(d, "unitary", complex(*rng.uniform(0.3, 2, 2)))
        counts_ok &= len(plan) == 2 * n * n
        worst = max(worst, reconstruct_unitary(recs, truth=d).frobenius_error_u)
    elapsed = time.perf_counter() - start
    verdict(
        "AC1 unitary round-trip",
        worst < 1e-9 and counts_ok and elapsed < 5,
        f"max Frobenius error {worst:.2e} (<1e-9), 2N^2 settings {counts_ok}, {elapsed:.2f}s (<5s)",
    )


def test_ac2_phase_completeness(verdict):
    thetas = [0.0, math.pi / 4, math.pi / 2, math.pi]
    worst = 0.0
    for theta in thetas:
        d = UnitaryDevice([[np.exp(1j * theta)]])
        worst = max(worst, np.max(np.abs(reconstruct_unitary(exact(d, "unitary")[1]).u_hat - d.u)))
    d = UnitaryDevice(np.diag(np.exp(1j * np.array(thetas))))
    worst = max(worst, np.max(np.abs(reconstruct_unitary(exact(d, "unitary", 0.8 + 0.6j)[1]).u_hat - d.u)))
    verdict("AC2 phase completeness", worst < 1e-12, f"max entrywise error {worst:.2e} (<1e-12)")


def test_ac3_bogoliubov_round_trip(verdict):
    rng = np.random.default_rng(7)
    worst_u = worst_v = 0.0
    for i in range(10):
        n = 1 + i % 4
        d = BogoliubovDevice(*random_bogoliubov(n, rng.uniform(0.2, 1.0), rng))
        report = reconstruct_bogoliubov(exact(d, "bogoliubov", complex(*rng.uniform(0.5, 1.5, 2)))[1], truth=d)
        worst_u = max(worst_u, report.frobenius_error_u)
        worst_v = max(worst_v, report.frobenius_error_v)

    reduction = 0.0
    u = haar_random_unitary(3, 3)
    alpha = 1.1 - 0.7j
    for p, q, phi in itertools.product(range(1, 4), range(1, 4), PHASES):
        s = ProbeSetting(ProbeKind.COHERENT, p, q, phi, alpha)
        eq10 = abs(alpha) ** 2 * (np.exp(-1j * phi) * u[p - 1, q - 1]).real
        reduction = max(reduction, abs(expected_observable(BogoliubovDevice(u, np.zeros((3, 3))), s) - eq10))
    verdict(
        "AC3 Bogoliubov round-trip",
        worst_u < 1e-9 and worst_v < 1e-9 and reduction < 1e-12,
        f"U error {worst_u:.2e}, V error {worst_v:.2e} (<1e-9); V=0 reduction {reduction:.2e} (<1e-12)",
    )


def test_ac4_lossy_round_trip(verdict):
    rng = np.random.default_rng(11)
    eta_err = mat_err = 0.0
    for kind in ("lossy_unitary", "lossy_bogoliubov"):
        for n in (1, 2, 3, 4):
            eta = rng.uniform(0.3, 1.0, n)
            inner = (
                BogoliubovDevice(*random_bogoliubov(n, 0.8, rng))
                if kind == "lossy_bogoliubov"
                else UnitaryDevice(haar_random_unitary(n, rng))
            )
            d = LossyDevice(inner, eta)
            report = reconstruct_lossy(exact(d, kind, 0.9 + 0.4j)[1], kind=kind, truth=d)
            eta_err = max(eta_err, report.eta_max_error)
            mat_err = max(mat_err, report.frobenius_error_u, report.frobenius_error_v or 0.0)

    raised = []
    for kind, inner in (("lossy_unitary", UnitaryDevice(haar_random_unitary(3, 1))),
                        ("lossy_bogoliubov", BogoliubovDevice(*random_bogoliubov(3, 0.5, 1)))):
        try:
            reconstruct_lossy(exact(LossyDevice(inner, [0.9, 0.0, 0.6]), kind)[1], kind=kind)
        except UnrecoverableRowError as exc:
            raised.append(exc.mode == 2)
        else:
            raised.append(False)
    verdict(
        "AC4 lossy round-trip",
        eta_err < 1e-10 and mat_err < 1e-9 and all(raised),
        f"eta error {eta_err:.2e} (<1e-10), matrix error {mat_err:.2e} (<1e-9), opaque row raises {raised}",
    )


def test_ac5_oracle_equivalence(verdict):
    rng = np.random.default_rng(5)
    worst, count = 0.0, 0
    for n in (1, 2, 3):
        u = haar_random_unitary(n, rng)
        bu, bv = random_bogoliubov(n, 1.0, rng)
        eta = rng.uniform(0.3, 1.0, n)
        devices = [UnitaryDevice(u), BogoliubovDevice(bu, bv),
                   LossyDevice(UnitaryDevice(u), eta), LossyDevice(BogoliubovDevice(bu, bv), eta)]
        alpha = complex(*rng.normal(size=2))
        for d in devices:
            bog = isinstance(getattr(d, "inner", d), BogoliubovDevice)
            settings = [ProbeSetting(k, p, q, phi, alpha)
                        for k in (ProbeKind.COHERENT, ProbeKind.SINGLE_PHOTON)
                        for p, q, phi in itertools.product(range(1, n + 1), range(1, n + 1), PHASES)]
            loss_kind = ProbeKind.LOSS_SINGLE_PHOTON if bog else ProbeKind.LOSS_COHERENT
            settings += [ProbeSetting(loss_kind, p, 1, 0.0, alpha) for p in range(1, n + 1)]
            if not bog:
                settings += [ProbeSetting(ProbeKind.LOSS_SINGLE_PHOTON, p) for p in range(1, n + 1)]
            for s in settings:
                worst = max(worst, abs(expected_observable(d, s) - oracle_observable(d, s)))
                count += 1
    verdict("AC5 oracle equivalence", worst < 1e-12, f"{count} settings, max |closed form - oracle| {worst:.2e} (<1e-12)")


def test_ac6_shot_noise_scaling(verdict):
    d = UnitaryDevice(haar_random_unitary(4, 2024))
    start = time.perf_counter()
    rows, slope = shot_noise_study(d, [10**2, 10**4, 10**6], alpha=2.0, seed=6, repeats=10)
    elapsed = time.perf_counter() - start
    verdict(
        "AC6 shot-noise scaling",
        abs(slope + 0.5) <= 0.05 and elapsed < 60,
        f"log-log slope {slope:.4f} (-0.5 +/- 0.05) over 10 seeds, {elapsed:.2f}s (<60s)",
    )


def test_ac7_embedding_unitarity(verdict):
    rng = np.random.default_rng(77)
    failures = 0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        d = LossyDevice(UnitaryDevice(haar_random_unitary(n, rng)), rng.uniform(0, 1, n))
        failures += not is_unitary(embed_lossy_unitary(d), 1e-10)
    verdict("AC7 embedding unitarity", failures == 0, f"{50 - failures}/50 embeddings unitary at 1e-10")


def test_ac8_measurement_count(verdict):
    mismatches = []
    for n in range(1, 17):
        expected = {
            DeviceKind.UNITARY: 2 * n * n,
            DeviceKind.BOGOLIUBOV: 4 * n * n,
            DeviceKind.LOSSY_UNITARY: 2 * n * n + n,
            DeviceKind.LOSSY_BOGOLIUBOV: 4 * n * n + n,
        }
        for kind, count in expected.items():
            if len(plan_probes(kind, n)) != count:
                mismatches.append((kind.value, n))
    verdict("AC8 measurement-count audit", not mismatches, f"n = 1..16, all kinds, mismatches {mismatches}")
