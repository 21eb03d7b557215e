"""Mach-Zehnder probe tomography of linear and Bogoliubov optical devices."""

from .algebra import frobenius_distance, haar_random_unitary, is_unitary, polar_unitary, random_bogoliubov
from .devices import (
    BogoliubovDevice,
    LossModel,
    LossyDevice,
    UnitaryDevice,
    embed_lossy_bogoliubov,
    embed_lossy_unitary,
    load_device,
    save_device,
    validate,
)
from .interferometer import (
    MeasurementRecord,
    ProbeKind,
    ProbeSetting,
    expected_observable,
    oracle_observable,
    sample_observable,
)
from .tomography import (
    DeviceKind,
    ProbePlan,
    ReconstructionReport,
    estimate_losses,
    plan_probes,
    reconstruct,
    reconstruct_bogoliubov,
    reconstruct_lossy,
    reconstruct_unitary,
    run_plan,
)

__version__ = "0.1.0"
