"""Decoupled time integration of the superconductivity system.

Each accepted step advances the pair ``(psi, A)`` from ``t`` to ``t + tau``
in two substeps that never couple implicitly:

1. vector-potential step (backward Euler): solve the SPD system
   ``(sigma/tau) M A + K A + M_{|psi|^2} A = (sigma/tau) M A_prev + loads``
   with the order parameter frozen at the previous level;
2. order-parameter step (stabilized exponential integrator): with
   ``L = D^{-1} Lhat(A_new) - mu I`` and ``F = (1 - |psi|^2) psi + mu psi
   + forcing``, update ``psi_new = phi0(tau L) psi - tau phi1(tau L) F``.

The shift ``mu`` makes ``L`` negative definite; any ``mu >= 1`` gives
energy dissipation for stationary applied field, and a large enough ``mu``
(the auto policy scales with ``||A||_inf^2``) keeps ``max |psi_i| <= 1``
when the initial data satisfies it. Both properties are verified at runtime
on every step rather than assumed.

Step size is either fixed or adapted from the recent energy slope,
``tau = max(tau_min, tau_max / sqrt(1 + alpha |dG/tau_prev|^2))``,
which shrinks steps during fast transients and saturates at ``tau_max``
once the state settles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .diagnostics import EnergyBreakdown, discrete_energy, mbp_stats
from .linalg import KrylovConfig, cg_solve, phi_apply
from .mesh import Mesh, audit_mesh

__all__ = [
    "AdaptiveTau",
    "SchemeParams",
    "TimeSeriesRow",
    "SimulationState",
    "EnergyViolationError",
    "BoundViolationError",
    "f_stabilized",
    "initialize",
    "step_A",
    "choose_mu",
    "step_psi",
    "adaptive_tau",
    "run",
]

#: nodal moduli may exceed 1 by at most this much before counting as a violation
MBP_SLACK = 1e-10

#: relative slack allowed on the per-step energy decrease
ENERGY_SLACK = 1e-9


class EnergyViolationError(RuntimeError):
    """Energy grew between accepted steps while dissipation was guaranteed."""


class BoundViolationError(RuntimeError):
    """A nodal modulus exceeded 1 while the bound was guaranteed."""


@dataclass(frozen=True)
class AdaptiveTau:
    """Energy-slope step controller with hard bounds.

    ``snap`` is the relative width of the saturation window: once the
    proposed step comes within ``snap * tau_max`` of ``tau_max`` it is
    rounded up to exactly ``tau_max``, so a long plateau runs at the
    nominal maximal step instead of creeping toward it asymptotically.
    """

    alpha: float = 1e5
    tau_min: float = 0.02
    tau_max: float = 0.2
    snap: float = 0.02

    def __post_init__(self):
        if not (0 < self.tau_min <= self.tau_max):
            raise ValueError("need 0 < tau_min <= tau_max")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 <= self.snap < 1:
            raise ValueError("snap must lie in [0, 1)")


@dataclass
class SchemeParams:
    """Model constants, policies and initial data for one run.

    ``mu`` is a fixed shift (floored at 2) or ``"auto"``, which takes
    ``max(2, 0.375 * safety * ||A||_inf^2)`` fresh each step. ``H`` is the
    applied field, a constant or a callable ``(x, y, t)``; set
    ``h_stationary`` explicitly to override the inferred time dependence
    (constants are stationary, callables are not). ``psi0`` is a complex
    constant or callable ``(x, y)``; ``A0`` is ``None`` for zero, a dof
    vector, or a pair of callables ``(A(x, y), curl_A(x, y))`` projected at
    startup. Optional forcings make a manufactured problem: ``forcing_A(x,
    y, t) -> (fx, fy)`` enters the potential step, ``forcing_psi(x, y, t)``
    the exponential step; their presence disables the energy monotonicity
    check (dissipation is not guaranteed for a driven system).
    """

    kappa: float
    T: float
    tau: float | AdaptiveTau = 0.1
    sigma: float = 1.0
    mu: float | str = 2.0
    mu_safety: float = 2.0
    H: float | Callable = 0.0
    h_stationary: bool | None = None
    psi0: complex | Callable = 1.0 + 0.0j
    A0: object = None
    forcing_A: Callable | None = None
    forcing_psi: Callable | None = None
    krylov: KrylovConfig = field(
        default_factory=lambda: KrylovConfig(tol=1e-12, max_dim=200)
    )
    cg_tol: float = 1e-12
    strict_acute: bool = False
    energy_check: str = "warn"  # warn | abort | off
    mbp_check: str = "warn"  # warn | abort | off

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.T >= 0:
            raise ValueError("T must be nonnegative")
        if isinstance(self.mu, str):
            if self.mu != "auto":
                raise ValueError(f"mu must be a number or 'auto', got {self.mu!r}")
        elif not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        if not isinstance(self.tau, AdaptiveTau) and not self.tau > 0:
            raise ValueError("tau must be positive or an AdaptiveTau policy")
        for name in ("energy_check", "mbp_check"):
            if getattr(self, name) not in ("warn", "abort", "off"):
                raise ValueError(f"{name} must be one of warn, abort, off")

    @property
    def h_is_stationary(self) -> bool:
        if self.h_stationary is not None:
            return self.h_stationary
        return not callable(self.H)

    @property
    def dissipation_guaranteed(self) -> bool:
        """True when the scheme's energy-decay guarantee applies."""
        return (
            self.h_is_stationary
            and self.forcing_A is None
            and self.forcing_psi is None
        )


@dataclass(frozen=True)
class TimeSeriesRow:
    """One accepted step (or the initial state, with ``tau = 0``)."""

    t: float
    tau: float
    total: float
    covariant: float
    magnetic: float
    potential: float
    max_psi: float


@dataclass
class SimulationState:
    """Full solver state after ``n`` accepted steps at time ``t``."""

    mesh: Mesh
    A: np.ndarray
    psi: np.ndarray
    t: float = 0.0
    n: int = 0
    tau_current: float = math.nan
    history: list[TimeSeriesRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    energy_violations: list[tuple[float, float, float]] = field(default_factory=list)
    mbp_violations: list[tuple[float, float]] = field(default_factory=list)
    mbp_guaranteed: bool = True

    @property
    def step_energies(self) -> list[float]:
        """Energies after each accepted step (initial state excluded)."""
        return [row.total for row in self.history[1:]]


def f_stabilized(psi, mu: float) -> np.ndarray:
    """Stabilized nonlinearity ``(1 - |psi|^2) psi + mu psi``, nodewise."""
    psi = np.asarray(psi, dtype=complex)
    return (1.0 + mu - np.abs(psi) ** 2) * psi


def _record_energy(state: SimulationState, params: SchemeParams, tau: float) -> TimeSeriesRow:
    energy: EnergyBreakdown = discrete_energy(
        state.mesh, state.A, state.psi, params.H, state.t, params.kappa
    )
    max_mod, _ = mbp_stats(state.psi)
    row = TimeSeriesRow(
        t=state.t,
        tau=tau,
        total=energy.total,
        covariant=energy.covariant,
        magnetic=energy.magnetic,
        potential=energy.potential,
        max_psi=max_mod,
    )
    state.history.append(row)
    return row


def initialize(mesh: Mesh, A0, psi0, params: SchemeParams) -> SimulationState:
    """Audit the mesh, interpolate/project initial data, record ``t = 0``.

    Obtuse meshes are refused (the modulus-bound structure needs acute
    cells); weakly acute meshes run with a warning unless
    ``params.strict_acute`` is set.
    """
    audit = audit_mesh(mesh)
    if not audit.weakly_acute:
        raise ValueError(
            f"mesh has an obtuse angle ({audit.max_angle_deg:.3f} deg); refusing to run"
        )
    state_warnings = []
    if not audit.strictly_acute:
        if params.strict_acute:
            raise ValueError(
                "mesh is only weakly acute (right angles present) and "
                "strict_acute is set"
            )
        msg = (
            "mesh is weakly acute (right angles present): the modulus bound "
            "is verified at runtime rather than guaranteed a priori"
        )
        warnings.warn(msg, stacklevel=2)
        state_warnings.append(msg)

    if callable(psi0):
        psi = fem.interpolate_nodal(mesh, psi0)
    else:
        psi = np.full(mesh.num_vertices, complex(psi0), dtype=complex)

    if A0 is None:
        A = np.zeros(fem.num_edge_dofs(mesh))
    elif isinstance(A0, np.ndarray):
        if A0.shape != (fem.num_edge_dofs(mesh),):
            raise ValueError("A0 dof vector has the wrong length")
        A = A0.astype(float)
    else:
        A_func, curl_func = A0
        A = fem.ritz_projection(mesh, A_func, curl_func)

    state = SimulationState(mesh=mesh, A=A, psi=psi, warnings=state_warnings)
    max_mod, idx = mbp_stats(psi)
    if max_mod > 1.0 + 1e-12:
        msg = (
            f"initial order parameter has modulus {max_mod:.6g} > 1 at vertex "
            f"{idx}; the unit modulus bound will be tracked but not enforced"
        )
        warnings.warn(msg, stacklevel=2)
        state.warnings.append(msg)
        state.mbp_guaranteed = False
    _record_energy(state, params, tau=0.0)
    return state


def step_A(state: SimulationState, params: SchemeParams, tau: float, t_n: float) -> np.ndarray:
    """Backward-Euler vector-potential substep; returns the new dof vector.

    The previous iterate warm-starts the conjugate gradient solve, which the
    stopping rule (relative to the right-hand side) keeps deterministic.
    """
    mesh = state.mesh
    system = fem.assemble_A_system(mesh, state.psi, params.sigma, tau)
    rhs = fem.assemble_A_rhs(
        mesh,
        state.psi,
        state.A,
        params.H,
        params.kappa,
        params.sigma,
        tau,
        t_n,
        forcing=params.forcing_A,
    )
    return cg_solve(system, rhs, tol=params.cg_tol, x0=state.A).x


def _mu_for(mesh: Mesh, A, params: SchemeParams) -> float:
    if params.mu == "auto":
        a_inf = fem.edge_max_norm(mesh, A)
        return max(2.0, 0.375 * params.mu_safety * a_inf**2)
    return max(float(params.mu), 2.0)


def choose_mu(state: SimulationState, params: SchemeParams) -> float:
    """Stabilization shift for the upcoming order-parameter substep.

    Fixed policy: the configured value floored at 2. Auto policy:
    ``max(2, 0.375 * safety * ||A||_inf^2)`` with the current potential.
    """
    return _mu_for(state.mesh, state.A, params)


def step_psi(state: SimulationState, params: SchemeParams, A_new, tau: float) -> np.ndarray:
    """Exponential order-parameter substep against the fresh potential.

    Uses ``state.psi`` and ``state.t`` as the previous level; ``A_new``
    must be the potential already advanced to the new level.
    """
    mesh = state.mesh
    A_new = np.asarray(A_new, dtype=float)
    Lhat = fem.assemble_Lhat(mesh, A_new, params.kappa)
    d = fem.lumped_mass(mesh)
    mu = _mu_for(mesh, A_new, params)
    F = f_stabilized(state.psi, mu)
    if params.forcing_psi is not None:
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        F = F + np.asarray(params.forcing_psi(x, y, state.t), dtype=complex)
    prop = phi_apply(Lhat, d, mu, tau, state.psi, which="phi0", config=params.krylov)
    drive = phi_apply(Lhat, d, mu, tau, F, which="phi1", config=params.krylov)
    return prop - tau * drive


def adaptive_tau(step_energies, tau_prev: float, policy: AdaptiveTau) -> float:
    """Next step size from the last recorded energy slope.

    ``step_energies`` holds the energies after each accepted step; with
    fewer than two entries the controller is still starting up and returns
    ``tau_min``.
    """
    if len(step_energies) < 2:
        return policy.tau_min
    slope = (step_energies[-1] - step_energies[-2]) / tau_prev
    tau = policy.tau_max / math.sqrt(1.0 + policy.alpha * slope * slope)
    if tau >= (1.0 - policy.snap) * policy.tau_max:
        tau = policy.tau_max
    return max(policy.tau_min, tau)


def _handle(kind: str, mode: str, message: str, state: SimulationState):
    if mode == "off":
        return
    if mode == "abort":
        raise (EnergyViolationError if kind == "energy" else BoundViolationError)(message)
    warnings.warn(message, stacklevel=3)
    state.warnings.append(message)


def run(
    mesh: Mesh,
    params: SchemeParams,
    *,
    snapshot_times=(),
    on_snapshot: Callable | None = None,
) -> SimulationState:
    """Integrate from ``t = 0`` until ``t >= T``; returns the final state.

    ``on_snapshot(state, t_nominal)`` fires once per requested time, at the
    first accepted step reaching it (and immediately for times at or below
    zero). The returned state carries the full per-step time series and any
    recorded violations; whether violations warn or abort is set by
    ``params.energy_check`` / ``params.mbp_check``.
    """
    state = initialize(mesh, params.A0, params.psi0, params)
    pending = sorted(float(s) for s in snapshot_times)
    eps = 1e-9 * max(1.0, abs(params.T))

    def emit_due():
        while pending and pending[0] <= state.t + eps:
            if on_snapshot is not None:
                on_snapshot(state, pending[0])
            pending.pop(0)

    emit_due()

    g0 = state.history[0].total
    energy_budget = ENERGY_SLACK * max(1.0, abs(g0))
    check_energy = params.energy_check != "off" and params.dissipation_guaranteed
    check_mbp = params.mbp_check != "off" and state.mbp_guaranteed

    while state.t < params.T - eps:
        if isinstance(params.tau, AdaptiveTau):
            tau = adaptive_tau(state.step_energies, state.tau_current, params.tau)
        else:
            tau = float(params.tau)
        t_new = state.t + tau

        A_new = step_A(state, params, tau, t_new)
        state.A = A_new
        psi_new = step_psi(state, params, A_new, tau)

        g_prev = state.history[-1].total
        state.psi = psi_new
        state.t = t_new
        state.n += 1
        state.tau_current = tau
        row = _record_energy(state, params, tau)

        if check_energy and row.total > g_prev + energy_budget:
            state.energy_violations.append((state.t, g_prev, row.total))
            _handle(
                "energy",
                params.energy_check,
                f"energy grew from {g_prev!r} to {row.total!r} at t={state.t!r}",
                state,
            )
        if check_mbp and row.max_psi > 1.0 + MBP_SLACK:
            state.mbp_violations.append((state.t, row.max_psi))
            _handle(
                "mbp",
                params.mbp_check,
                f"nodal modulus reached {row.max_psi!r} > 1 at t={state.t!r}",
                state,
            )
        emit_due()

    return state
