import math

import numpy as np
import pytest

import tdglfem.stepper as stepper
from tdglfem.diagnostics import EnergyBreakdown
from tdglfem.fem import interpolate_edge, num_edge_dofs
from tdglfem.mesh import Mesh, generate_uniform_square
from tdglfem.stepper import (
    AdaptiveTau,
    BoundViolationError,
    EnergyViolationError,
    SchemeParams,
    adaptive_tau,
    choose_mu,
    f_stabilized,
    initialize,
    run,
    step_A,
    step_psi,
)


def quiet_params(**kw):
    base = dict(kappa=1.0, T=1.0, tau=0.25)
    base.update(kw)
    return SchemeParams(**base)


# -- parameter validation ------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"kappa": 0.0},
        {"kappa": -1.0},
        {"sigma": -2.0},
        {"T": -1.0},
        {"mu": "bogus"},
        {"mu": -3.0},
        {"tau": 0.0},
        {"energy_check": "maybe"},
        {"mbp_check": ""},
    ],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        quiet_params(**kw)


@pytest.mark.parametrize(
    "kw",
    [
        {"tau_min": 0.0},
        {"tau_min": 0.3, "tau_max": 0.2},
        {"alpha": -1.0},
        {"snap": 1.0},
        {"snap": -0.1},
    ],
)
def test_adaptive_policy_validation(kw):
    with pytest.raises(ValueError):
        AdaptiveTau(**kw)


def test_h_stationary_inference():
    assert quiet_params(H=1.5).h_is_stationary
    assert not quiet_params(H=lambda x, y, t: t).h_is_stationary
    assert quiet_params(H=lambda x, y, t: x, h_stationary=True).h_is_stationary
    assert quiet_params(forcing_psi=lambda x, y, t: 0j).dissipation_guaranteed is False
    assert quiet_params(H=2.0).dissipation_guaranteed


# -- pointwise pieces ----------------------------------------------------------


def test_f_stabilized_reference_values():
    psi = np.array([0.0, 1.0, 1j])
    np.testing.assert_allclose(f_stabilized(psi, 2.0), [0.0, 2.0, 2j], atol=1e-15)


def test_f_stabilized_general(rng):
    z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    mu = 3.7
    np.testing.assert_allclose(
        f_stabilized(z, mu), (1 + mu - np.abs(z) ** 2) * z, atol=1e-14
    )


def test_choose_mu_fixed_floor(square2):
    state = initialize_quiet(square2, mu=5.0)
    assert choose_mu(state, quiet_params(mu=5.0)) == 5.0
    assert choose_mu(state, quiet_params(mu=0.5)) == 2.0


def test_choose_mu_auto(square2):
    params = quiet_params(mu="auto", mu_safety=2.0)
    state = initialize_quiet(square2, mu="auto")
    # zero potential: the floor applies
    assert choose_mu(state, params) == 2.0
    state.A = interpolate_edge(square2, lambda x, y: (0 * x, 0 * y + 4.0))
    # 0.375 * 2 * 16 = 12
    assert choose_mu(state, params) == pytest.approx(12.0, rel=1e-13)


def initialize_quiet(mesh, **kw):
    params = quiet_params(**kw)
    with pytest.warns(UserWarning, match="weakly acute"):
        return initialize(mesh, params.A0, params.psi0, params)


# -- adaptive controller ---------------------------------------------------------


def test_adaptive_startup():
    pol = AdaptiveTau()
    assert adaptive_tau([], 0.1, pol) == pol.tau_min
    assert adaptive_tau([5.0], 0.1, pol) == pol.tau_min


def test_adaptive_reference_value():
    # slope (G[-1]-G[-2])/tau_prev = -1e-2: tau = 0.2/sqrt(11)
    pol = AdaptiveTau()
    tau = adaptive_tau([1.0, 1.0 - 1e-3], 0.1, pol)
    assert tau == pytest.approx(0.06030226891555273, abs=1e-15)


def test_adaptive_bounds():
    pol = AdaptiveTau()
    assert adaptive_tau([1.0, 0.0], 1e-6, pol) == pol.tau_min  # huge slope
    assert adaptive_tau([1.0, 1.0], 0.1, pol) == pol.tau_max  # flat


def test_adaptive_snap_window():
    pol = AdaptiveTau()
    # slope small enough that the raw formula lands within 2% of tau_max
    slope = 3e-4
    raw = pol.tau_max / math.sqrt(1 + pol.alpha * slope**2)
    assert raw < pol.tau_max
    assert raw >= 0.98 * pol.tau_max
    assert adaptive_tau([1.0, 1.0 - slope * 0.1], 0.1, pol) == pol.tau_max
    # without a window the raw value comes through
    exact_pol = AdaptiveTau(snap=0.0)
    assert adaptive_tau([1.0, 1.0 - slope * 0.1], 0.1, exact_pol) == pytest.approx(
        raw, rel=1e-13
    )


# -- initialization ------------------------------------------------------------


def test_initialize_refuses_obtuse():
    mesh = Mesh.from_cells(
        np.array([[0.0, 0.0], [4.0, 0.0], [0.2, 0.2]]), np.array([[0, 1, 2]])
    )
    with pytest.raises(ValueError, match="obtuse"):
        initialize(mesh, None, 1.0 + 0j, quiet_params())


def test_initialize_warns_weakly_acute(square2):
    with pytest.warns(UserWarning, match="weakly acute"):
        state = initialize(square2, None, 1.0 + 0j, quiet_params())
    assert state.warnings
    assert state.mbp_guaranteed


def test_initialize_strict_acute_rejects(square2):
    with pytest.raises(ValueError, match="strict_acute"):
        initialize(square2, None, 1.0 + 0j, quiet_params(strict_acute=True))


def test_initialize_strictly_acute_mesh_quiet(recwarn):
    mesh = Mesh.from_cells(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]),
        np.array([[0, 1, 2]]),
    )
    initialize(mesh, None, 1.0 + 0j, quiet_params())
    assert not [w for w in recwarn if "acute" in str(w.message)]


def test_initialize_large_psi0_disables_guarantee(square2):
    with pytest.warns(UserWarning, match="modulus"):
        state = initialize(square2, None, 2.0 + 0j, quiet_params())
    assert not state.mbp_guaranteed


def test_initialize_records_t0(square2):
    state = initialize_quiet(square2)
    assert state.t == 0.0
    assert state.n == 0
    assert len(state.history) == 1
    assert state.history[0].t == 0.0
    assert state.history[0].tau == 0.0
    assert state.step_energies == []


def test_initialize_A0_variants(square2):
    params = quiet_params()
    vec = interpolate_edge(square2, lambda x, y: (-y, x))
    with pytest.warns(UserWarning):
        by_vec = initialize(square2, vec, 1.0 + 0j, params)
    np.testing.assert_array_equal(by_vec.A, vec)
    with pytest.warns(UserWarning):
        by_pair = initialize(
            square2,
            (lambda x, y: (-y, x), lambda x, y: np.broadcast_to(2.0, np.shape(x))),
            1.0 + 0j,
            params,
        )
    np.testing.assert_allclose(by_pair.A, vec, atol=1e-10)


# -- stepping ------------------------------------------------------------------


def test_steady_state_preserved(square4):
    params = quiet_params(T=1.0, tau=0.2, H=0.0, psi0=1.0 + 0j)
    with pytest.warns(UserWarning):
        state = run(square4, params)
    assert state.n == 5
    np.testing.assert_allclose(state.psi, 1.0, atol=1e-12)
    np.testing.assert_allclose(state.A, 0.0, atol=1e-12)
    assert abs(state.history[-1].total) < 1e-12


def test_run_T0_returns_initial(square2):
    with pytest.warns(UserWarning):
        state = run(square2, quiet_params(T=0.0))
    assert state.n == 0
    assert state.step_energies == []


def test_run_step_counts(square2):
    with pytest.warns(UserWarning):
        state = run(square2, quiet_params(T=1.0, tau=0.25))
    assert state.n == 4
    assert state.t == pytest.approx(1.0, abs=1e-12)
    # the loop does not clip: a non-divisor step overshoots T
    with pytest.warns(UserWarning):
        over = run(square2, quiet_params(T=1.0, tau=0.3))
    assert over.n == 4
    assert over.t == pytest.approx(1.2, abs=1e-12)


def test_run_matches_manual_steps(square2):
    params = quiet_params(T=0.25, tau=0.25, psi0=0.6 + 0.8j, H=1.0)
    with pytest.warns(UserWarning):
        state0 = initialize(square2, params.A0, params.psi0, params)
    A1 = step_A(state0, params, 0.25, 0.25)
    psi1 = step_psi(state0, params, A1, 0.25)
    with pytest.warns(UserWarning):
        state = run(square2, params)
    np.testing.assert_allclose(state.A, A1, atol=1e-14)
    np.testing.assert_allclose(state.psi, psi1, atol=1e-14)


def test_energy_decays_lshape_short():
    mesh = generate_uniform_square(4, domain="lshape")
    params = quiet_params(kappa=10.0, T=2.0, tau=0.2, H=5.0, psi0=0.6 + 0.8j)
    with pytest.warns(UserWarning):
        state = run(mesh, params)
    totals = [row.total for row in state.history]
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))
    assert totals[-1] < totals[0]
    assert max(row.max_psi for row in state.history) <= 1 + 1e-10


def test_run_adaptive_policy(square4):
    pol = AdaptiveTau(tau_min=0.05, tau_max=0.5)
    params = quiet_params(T=0.4, tau=pol)
    with pytest.warns(UserWarning):
        state = run(square4, params)
    # two startup steps at tau_min, then the controller takes over
    assert state.history[1].tau == 0.05
    assert state.history[2].tau == 0.05
    assert state.n >= 3


def test_snapshots_fire_once_each(square2):
    seen = []
    params = quiet_params(T=1.0, tau=0.25)
    with pytest.warns(UserWarning):
        run(
            square2,
            params,
            snapshot_times=(0.0, 0.45),
            on_snapshot=lambda state, t_nom: seen.append((t_nom, state.t)),
        )
    assert seen == [(0.0, 0.0), (0.45, 0.5)]


# -- violation handling ----------------------------------------------------------


def rigged_energy(monkeypatch):
    # replace the recorded energy with a strictly increasing sequence
    counter = {"k": 0}

    def fake(mesh, A, psi, H, t, kappa):
        counter["k"] += 1
        return EnergyBreakdown(float(counter["k"]), 0.0, 0.0)

    monkeypatch.setattr(stepper, "discrete_energy", fake)


@pytest.mark.filterwarnings("ignore:mesh is weakly acute")
def test_energy_violation_warn(square2, monkeypatch):
    rigged_energy(monkeypatch)
    params = quiet_params(T=0.5, tau=0.25, energy_check="warn")
    with pytest.warns(UserWarning, match="energy"):
        state = run(square2, params)
    assert state.energy_violations


def test_energy_violation_abort(square2, monkeypatch):
    rigged_energy(monkeypatch)
    params = quiet_params(T=0.5, tau=0.25, energy_check="abort")
    with pytest.warns(UserWarning):
        with pytest.raises(EnergyViolationError):
            run(square2, params)


def test_energy_violation_off(square2, monkeypatch):
    rigged_energy(monkeypatch)
    params = quiet_params(T=0.5, tau=0.25, energy_check="off")
    with pytest.warns(UserWarning):
        state = run(square2, params)
    assert not state.energy_violations


def rigged_mbp(monkeypatch):
    # first call sees clean initial data so the bound stays armed, later
    # calls report an excursion
    counter = {"k": 0}

    def fake(psi):
        counter["k"] += 1
        return (1.0, 0) if counter["k"] == 1 else (2.0, 0)

    monkeypatch.setattr(stepper, "mbp_stats", fake)


def test_mbp_violation_abort(square2, monkeypatch):
    rigged_mbp(monkeypatch)
    params = quiet_params(T=0.5, tau=0.25, mbp_check="abort")
    with pytest.warns(UserWarning):
        with pytest.raises(BoundViolationError):
            run(square2, params)


def test_mbp_violation_warn(square2, monkeypatch):
    rigged_mbp(monkeypatch)
    params = quiet_params(T=0.5, tau=0.25, mbp_check="warn")
    with pytest.warns(UserWarning, match="modulus"):
        state = run(square2, params)
    assert state.mbp_violations
