import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from mvrecon.baseforecast import ForecasterSpec
from mvrecon.simulate import (
    PHI,
    SCENARIOS,
    SIGMA_MATRICES,
    V_MATRICES,
    ScenarioSpec,
    builtin_scenario,
    draw_noise,
    replicate_rng,
    run_study,
    simulate_replicate,
    simulate_var1_errors,
)


def test_scenario_numbering():
    assert SCENARIOS[1] == (1, 1) and SCENARIOS[5] == (2, 2) and SCENARIOS[9] == (3, 3)
    assert SCENARIOS[4] == (2, 1) and SCENARIOS[3] == (1, 3)
    s = builtin_scenario(6)
    np.testing.assert_array_equal(s.V, V_MATRICES[2])
    np.testing.assert_array_equal(s.Sigma, SIGMA_MATRICES[3])
    assert (s.T, s.H, s.period, s.replications) == (108, 12, 4, 1000)
    with pytest.raises(ValueError, match="1..9"):
        builtin_scenario(10)


def test_sigma_layout():
    S = SIGMA_MATRICES[2]
    assert S[0, 1] == 0.7 and S[2, 4] == 0.7 and S[1, 2] == 0.0
    assert SIGMA_MATRICES[3][3, 4] == -0.4
    np.testing.assert_array_equal(PHI, [[0.7, 0.2], [0.2, 0.7]])


def test_noise_kronecker_covariance_small():
    spec = builtin_scenario(5)
    E = draw_noise(spec, 20_000, replicate_rng(1, 0))
    flat = E.reshape(len(E), -1)  # index i*m + j
    emp = flat.T @ flat / len(flat)
    np.testing.assert_allclose(emp, np.kron(spec.Sigma, spec.V), atol=0.06)


def test_var1_stationary_covariance():
    spec = builtin_scenario(1)
    eta = simulate_var1_errors(spec, 40_000, replicate_rng(2, 0))
    x = eta[:, 0, :]
    G0 = np.cov(x.T)
    np.testing.assert_allclose(G0, solve_discrete_lyapunov(PHI, spec.V), rtol=0.08)


def test_replicates_are_reproducible_and_distinct():
    spec = builtin_scenario(2, seed=11)
    a = simulate_replicate(spec, replicate=3)
    b = simulate_replicate(spec, replicate_rng(11, 3), replicate=3)
    c = simulate_replicate(spec, replicate=4)
    np.testing.assert_array_equal(a.panel.data, b.panel.data)
    assert not np.array_equal(a.panel.data, c.panel.data)
    assert a.panel.data.shape == (120, 8, 2)
    assert ((a.alphas >= 0) & (a.alphas <= 4)).all()
    assert a.panel.check_coherent(spec.hierarchy) < 1e-12


def test_spec_yaml_roundtrip_and_hash(tmp_path):
    spec = builtin_scenario(9, seed=5, replications=3)
    spec.dump(tmp_path / "s.yaml")
    back = ScenarioSpec.load(tmp_path / "s.yaml")
    assert back.spec_hash() == spec.spec_hash()
    assert spec.replace(seed=6).spec_hash() != spec.spec_hash()


@pytest.mark.parametrize("change, msg", [
    ({"Phi": np.eye(2)}, "spectral radius"),
    ({"V": np.array([[1.0, 2.0], [2.0, 1.0]])}, "positive definite"),
    ({"Sigma": np.eye(4)}, "bottom nodes"),
])
def test_invalid_specs(change, msg):
    with pytest.raises(ValueError, match=msg):
        builtin_scenario(1).replace(**change)


def test_unknown_yaml_field():
    d = builtin_scenario(1).to_dict()
    d["colour"] = "red"
    with pytest.raises(ValueError, match="unknown scenario fields"):
        ScenarioSpec.from_dict(d)


def test_slow_mixing_warns():
    spec = builtin_scenario(1, replications=1).replace(Phi=np.array([[0.96, 0.0], [0.0, 0.5]]))
    with pytest.warns(UserWarning, match="mixes slowly"):
        res = run_study(spec, [ForecasterSpec("seasonal-mean")], ["identity"])
    assert res.warnings


def test_run_study_threads_identical():
    spec = builtin_scenario(4, replications=4, seed=3)
    fc = [ForecasterSpec("arx"), ForecasterSpec("seasonal-mean")]
    r1 = run_study(spec, fc, ["shrinkage", "identity"], threads=1)
    r4 = run_study(spec, fc, ["shrinkage", "identity"], threads=4)
    assert r1.n_ok == 4 and not r1.failures
    for f in ("arx", "seasonal-mean"):
        for k, v in r1.cubes[f].sq_errors.items():
            np.testing.assert_array_equal(v, r4.cubes[f].sq_errors[k])
        assert set(r1.cubes[f].methods) == {
            "base", "multivariate:shrinkage", "univariate:shrinkage", "multivariate:identity", "univariate:identity"}


def test_failed_replicates_are_recorded():
    # T too short for the ARX design: every replicate fails but the study completes
    spec = builtin_scenario(1, replications=2, T=6, H=2)
    res = run_study(spec, [ForecasterSpec("arx")], ["shrinkage"])
    assert res.n_ok == 0 and len(res.failures) == 2
    assert "FitError" in res.failures[0][1]


def test_sample_W_of_coherent_residuals_is_rejected():
    # seasonal-mean residuals inherit coherence, so C* W C*' = 0 for the sample estimator
    spec = builtin_scenario(1, replications=1)
    res = run_study(spec, [ForecasterSpec("seasonal-mean")], ["sample"])
    assert res.n_ok == 0 and "not positive definite" in res.failures[0][1]
