import numpy as np
import pytest

import hybridid as hi


@pytest.fixture(scope="session")
def thermostat_case():
    """Noiseless 500-step thermostat run plus a pinned solver config."""
    data, truth, modes = hi.generate_benchmark("thermostat", steps=500)
    cfg = hi.SolverConfig(epsilon=1e-6, lambda_w=0.5)
    return data, truth, modes, cfg


@pytest.fixture(scope="session")
def thermostat_identified(thermostat_case):
    data, truth, modes, cfg = thermostat_case
    models, seg = hi.identify_subsystems(data, truth.dictionary_spec, cfg)
    rules = hi.infer_transitions(seg, data, truth.psi_spec, lambda_v=0.05)
    model = hi.HybridModel(models, rules, truth.dictionary_spec, truth.psi_spec,
                           data.sample_period)
    return model, seg


def lstsq_fit(Phi, Y):
    """Independent plain least-squares oracle."""
    return np.linalg.lstsq(np.asarray(Phi, float), np.asarray(Y, float), rcond=None)[0]
