import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_devices
from mztomo.algebra import frobenius_distance, haar_random_unitary, is_unitary, random_bogoliubov
from mztomo.devices import BogoliubovDevice, LossyDevice, UnitaryDevice
from mztomo.errors import (
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
from mztomo.interferometer import MeasurementRecord, ProbeKind, ProbeSetting, expected_observable
from mztomo.tomography import (
    DeviceKind,
    estimate_losses,
    plan_probes,
    plan_size,
    reconstruct,
    reconstruct_bogoliubov,
    reconstruct_lossy,
    reconstruct_unitary,
    run_plan,
)

HALF_PI = math.pi / 2


def exact_records(device, alpha=1.0):
    return run_plan(device, plan_probes(DeviceKind.of(device), device.n, alpha))


# ---------------------------------------------------------------- planning


def test_plan_sizes():
    assert len(plan_probes("unitary", 3)) == 18
    assert len(plan_probes("bogoliubov", 2)) == 16
    assert len(plan_probes("lossy_unitary", 4)) == 36


@pytest.mark.parametrize("kind", list(DeviceKind))
@pytest.mark.parametrize("n", [1, 2, 5])
def test_plan_size_closed_form(kind, n):
    assert len(plan_probes(kind, n)) == plan_size(kind, n)


def test_plan_ordering():
    plan = plan_probes("lossy_bogoliubov", 2, alpha=0.5)
    kinds = [s.kind for s in plan.settings]
    assert kinds[:2] == [ProbeKind.LOSS_SINGLE_PHOTON] * 2
    assert kinds[2:10] == [ProbeKind.SINGLE_PHOTON] * 8
    assert kinds[10:] == [ProbeKind.COHERENT] * 8
    assert [(s.p, s.q, s.phi) for s in plan.settings[2:6]] == [(1, 1, 0.0), (1, 1, HALF_PI), (1, 2, 0.0), (1, 2, HALF_PI)]
    assert plan_probes("lossy_unitary", 2).settings[0].kind is ProbeKind.LOSS_COHERENT


def test_plan_errors():
    with pytest.raises(InvalidDimensionError):
        plan_probes("unitary", 0)
    with pytest.raises(InvalidSettingError):
        plan_probes("unitary", 2, alpha=0)


def test_run_plan_requires_seed_for_sampling():
    d = UnitaryDevice(np.eye(2))
    with pytest.raises(InvalidSettingError):
        run_plan(d, plan_probes("unitary", 2, shots=10))


def test_run_plan_jobs_independent():
    d = make_devices(2, 3)[3]
    plan = plan_probes("lossy_bogoliubov", 2, 1.0, shots=500)
    a = run_plan(d, plan, seed=9, jobs=1)
    b = run_plan(d, plan, seed=9, jobs=4)
    c = run_plan(d, plan, seed=np.random.SeedSequence(9))
    assert [r.observable for r in a] == [r.observable for r in b] == [r.observable for r in c]


# ---------------------------------------------------------------- unitary


def test_identity_round_trip():
    report = reconstruct_unitary(exact_records(UnitaryDevice(np.eye(2))))
    np.testing.assert_array_equal(report.u_hat, np.eye(2))


def test_haar5_round_trip():
    d = UnitaryDevice(haar_random_unitary(5, 3))
    report = reconstruct_unitary(exact_records(d, 0.6 + 0.8j), truth=d)
    assert report.frobenius_error_u < 1e-10
    assert report.settings_used == 50
    assert is_unitary(report.u_hat, 1e-8)


def test_phase_shifter_records():
    alpha = 1.7
    recs = [
        MeasurementRecord(ProbeSetting(ProbeKind.COHERENT, 1, 1, 0.0, alpha), 0.0),
        MeasurementRecord(ProbeSetting(ProbeKind.COHERENT, 1, 1, HALF_PI, alpha), alpha**2),
    ]
    assert reconstruct_unitary(recs).u_hat[0, 0] == pytest.approx(1j, abs=1e-15)


def test_missing_setting():
    recs = exact_records(UnitaryDevice(haar_random_unitary(2, 0)))
    with pytest.raises(IncompletePlanError, match="p=1 q=2 phi=pi/2"):
        reconstruct_unitary(recs[:3] + recs[4:], n=2)


def test_duplicate_setting():
    recs = exact_records(UnitaryDevice(haar_random_unitary(2, 0)))
    with pytest.raises(AmbiguousPlanError):
        reconstruct_unitary(recs + recs[:1])


def test_mixed_alpha_rejected():
    recs = exact_records(UnitaryDevice(haar_random_unitary(2, 0)))
    recs[0] = MeasurementRecord(ProbeSetting(ProbeKind.COHERENT, 1, 1, 0.0, 2.0), 0.0)
    with pytest.raises(InvalidRecordError):
        reconstruct_unitary(recs)


def test_phase_completeness():
    u = haar_random_unitary(3, 10)
    d = np.diag(np.exp(1j * np.array([0.3, -1.2, 2.0])))
    ua = reconstruct_unitary(exact_records(UnitaryDevice(u))).u_hat
    ub = reconstruct_unitary(exact_records(UnitaryDevice(d @ u))).u_hat
    assert frobenius_distance(ua, ub) == pytest.approx(frobenius_distance(u, d @ u), abs=1e-9)
    assert frobenius_distance(ua, ub) > 0.1


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(list(DeviceKind)))
def test_round_trip_property(n, seed, kind):
    rng = np.random.default_rng(seed)
    u, v = random_bogoliubov(n, 1.0, rng) if kind.bogoliubov else (haar_random_unitary(n, rng), None)
    d = BogoliubovDevice(u, v) if kind.bogoliubov else UnitaryDevice(u)
    if kind.lossy:
        d = LossyDevice(d, rng.uniform(0.2, 1.0, n))
    alpha = complex(*rng.uniform(0.3, 2.0, 2))
    report = reconstruct(exact_records(d, alpha), kind, truth=d)
    assert report.frobenius_error_u < 1e-9
    if kind.bogoliubov:
        assert report.frobenius_error_v < 1e-9
    assert report.settings_used == plan_size(kind, n)


# ---------------------------------------------------------------- bogoliubov


def test_bogoliubov_v_zero():
    u = haar_random_unitary(3, 4)
    report = reconstruct_bogoliubov(exact_records(BogoliubovDevice(u, np.zeros((3, 3)))))
    assert np.max(np.abs(report.v_hat)) < 1e-12
    assert frobenius_distance(report.u_hat, u) < 1e-12


def test_single_mode_squeezer():
    d = BogoliubovDevice([[math.cosh(0.5)]], [[math.sinh(0.5)]])
    report = reconstruct_bogoliubov(exact_records(d, 1.0))
    assert report.u_hat[0, 0] == pytest.approx(math.cosh(0.5), abs=1e-10)
    assert report.v_hat[0, 0] == pytest.approx(math.sinh(0.5), abs=1e-10)


def test_random_bogoliubov_round_trip():
    d = BogoliubovDevice(*random_bogoliubov(3, 0.8, 21))
    report = reconstruct_bogoliubov(exact_records(d, 0.8 - 0.5j), truth=d)
    assert report.frobenius_error_u < 1e-9 and report.frobenius_error_v < 1e-9


def test_low_alpha_warning():
    d = BogoliubovDevice(*random_bogoliubov(2, 0.5, 1))
    with pytest.warns(LowAmplitudeWarning):
        report = reconstruct_bogoliubov(exact_records(d, 0.05))
    assert report.warnings


# ---------------------------------------------------------------- losses


def test_estimate_losses_examples():
    recs = [MeasurementRecord(ProbeSetting(ProbeKind.LOSS_COHERENT, 1), 0.64),
            MeasurementRecord(ProbeSetting(ProbeKind.LOSS_COHERENT, 2), 1.0)]
    eta, _ = estimate_losses(recs)
    np.testing.assert_allclose(eta, [0.8, 1.0], atol=1e-15)


def test_estimate_losses_alpha_scaling():
    recs = [MeasurementRecord(ProbeSetting(ProbeKind.LOSS_COHERENT, 1, alpha=2.0), 0.64 * 4)]
    assert estimate_losses(recs)[0][0] == pytest.approx(0.8)


def test_estimate_losses_clamp():
    recs = [MeasurementRecord(ProbeSetting(ProbeKind.LOSS_COHERENT, 1), 1.02, std_error=0.01)]
    with pytest.warns(ClampWarning):
        eta, _ = estimate_losses(recs)
    assert eta[0] == 1.0


def test_estimate_losses_clamp_from_noisy_run():
    # a lossless mode probed with few shots overshoots one about half the time
    d = LossyDevice(UnitaryDevice(np.eye(1)), [1.0])
    plan = plan_probes("lossy_unitary", 1, 1.0, shots=50)
    clamped = 0
    for seed in range(20):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            eta, _ = estimate_losses(run_plan(d, plan, seed=seed))
        assert eta[0] <= 1.0
        clamped += any(issubclass(w.category, ClampWarning) for w in caught)
    assert clamped > 0


def test_estimate_losses_negative():
    with pytest.raises(InvalidRecordError):
        estimate_losses([MeasurementRecord(ProbeSetting(ProbeKind.LOSS_SINGLE_PHOTON, 1), -0.1)])
    with pytest.warns(ClampWarning):
        eta, _ = estimate_losses([MeasurementRecord(ProbeSetting(ProbeKind.LOSS_SINGLE_PHOTON, 1), -0.1, 0.05)])
    assert eta[0] == 0.0


def test_estimate_losses_coverage():
    with pytest.raises(IncompletePlanError):
        estimate_losses([MeasurementRecord(ProbeSetting(ProbeKind.LOSS_SINGLE_PHOTON, 2), 0.5)])
    rec = MeasurementRecord(ProbeSetting(ProbeKind.LOSS_SINGLE_PHOTON, 1), 0.5)
    with pytest.raises(AmbiguousPlanError):
        estimate_losses([rec, rec])


def test_lossy_unitary_round_trip():
    d = LossyDevice(UnitaryDevice(haar_random_unitary(4, 6)), [1, 0.9, 0.5, 0.7])
    report = reconstruct_lossy(exact_records(d), kind="lossy_unitary", truth=d)
    assert report.eta_max_error < 1e-12
    assert report.frobenius_error_u < 1e-9


def test_opaque_row_unrecoverable():
    d = LossyDevice(UnitaryDevice(haar_random_unitary(3, 6)), [1, 0.0, 0.7])
    with pytest.raises(UnrecoverableRowError) as err:
        reconstruct_lossy(exact_records(d), kind="lossy_unitary")
    assert err.value.mode == 2


def test_lossy_bogoliubov_round_trip():
    d = LossyDevice(BogoliubovDevice(*random_bogoliubov(2, 0.8, 2)), [0.8, 0.6])
    report = reconstruct_lossy(exact_records(d, 1.2 + 0.4j), kind="lossy_bogoliubov", truth=d)
    assert report.eta_max_error < 1e-9
    assert report.frobenius_error_u < 1e-9 and report.frobenius_error_v < 1e-9


def test_lossy_wrong_loss_probe():
    d = LossyDevice(UnitaryDevice(haar_random_unitary(2, 6)), [1, 0.7])
    with pytest.raises(ProtocolMismatchError):
        reconstruct_lossy(exact_records(d), kind="lossy_bogoliubov")


# ---------------------------------------------------------------- sampling


def test_rmse_scaling():
    d = UnitaryDevice(haar_random_unitary(3, 2))
    grid = [10**2, 10**4, 10**6]
    rmse = []
    for m in grid:
        plan = plan_probes("unitary", 3, 2.0, m)
        errs = [
            math.sqrt(np.mean(np.abs(reconstruct_unitary(run_plan(d, plan, seed=s)).u_hat - d.u) ** 2))
            for s in range(10)
        ]
        rmse.append(np.mean(errs))
    slope = np.polyfit(np.log(grid), np.log(rmse), 1)[0]
    assert abs(slope + 0.5) <= 0.05


def test_sampled_report_std_errors():
    d = make_devices(2, 5)[3]
    plan = plan_probes("lossy_bogoliubov", 2, 1.0, 20000)
    report = reconstruct(run_plan(d, plan, seed=1), "lossy_bogoliubov", truth=d)
    assert np.all(report.u_std_error > 0) and np.all(report.v_std_error > 0)
    assert np.all(report.eta_std_error > 0)
    assert report.total_shots == 20000 * len(plan)
    # errors are consistent with the reported standard errors
    assert np.max(np.abs(report.u_hat - d.u) / report.u_std_error) < 6


def test_report_json_and_csv(tmp_path):
    d = make_devices(2, 5)[1]
    report = reconstruct(exact_records(d), "bogoliubov", truth=d)
    report.write_json(tmp_path / "r.json")
    report.write_error_csv(tmp_path / "e.csv", d)
    import json

    data = json.loads((tmp_path / "r.json").read_text())
    assert data["settings_used"] == 16 and data["frobenius_error_u"] < 1e-9
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("matrix,p,q")
    assert len(lines) == 1 + 2 * 4
    assert lines[1].startswith("U,1,1,")
