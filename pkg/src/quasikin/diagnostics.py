"""Functionals monitored along kinetic runs.

Everything here is a pure evaluator on simulation state: conserved totals
(mass, momentum, energy with the eps^2 field weighting), the velocity-
modulated energy against a reference flow, the density-weighted current
mismatch, the spectral H^{-1} departure from neutrality, a convex-duality
cross-check of the current functional, moment-equation residuals from
snapshot windows, and L2 current errors against an Euler state.

Two discrete inequalities are enforced as record invariants because they
hold exactly (up to roundoff) whenever f >= 0 and the quadrature weights are
positive: e_total = e_kinetic + e_field, and the current mismatch never
exceeds the modulated energy (Cauchy-Schwarz applied node by node).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .euler import leray_project
from .grids import (
    GridMismatchError,
    MacroFields,
    PhaseField,
    TorusGrid,
    grid_integral,
    l2_norm,
    moments,
    spectral_divergence,
    spectral_gradient,
)
from .monge_ampere import FieldSolveReport, Potential

__all__ = [
    "CSV_COLUMNS",
    "DegenerateDensityError",
    "InsufficientSnapshotsError",
    "DiagnosticsRecord",
    "field_energy",
    "total_energy",
    "modulated_energy",
    "h_functional",
    "quasineutrality_norm",
    "k_functional_check",
    "moment_residuals",
    "current_error",
    "build_record",
]

RHO_FLOOR = 1e-12
CURRENT_AT_VACUUM = 1e-10

CSV_COLUMNS = (
    "t",
    "mass",
    "momentum_x",
    "momentum_y",
    "e_kinetic",
    "e_field",
    "e_total",
    "H_eps",
    "h_eps",
    "rho_Hm1",
    "J_err_raw",
    "J_err_divfree",
    "clipped_mass",
    "newton_iters",
    "field_residual",
)


class DegenerateDensityError(ValueError):
    """A near-vacuum node carries current: the run is under-resolved."""


class InsufficientSnapshotsError(ValueError):
    """Centered time differencing needs at least three snapshots."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.17g}"


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One monitored instant; maps 1:1 onto a diagnostics.csv row."""

    t: float
    mass: float
    momentum: tuple
    e_kinetic: float
    e_field: float
    e_total: float
    modulated: float
    mismatch: float
    quasineutrality: float
    current_error_raw: float | None = None
    current_error_divfree: float | None = None
    clipped_mass: float = 0.0
    newton_iters: int | None = None
    field_residual: float | None = None

    def __post_init__(self) -> None:
        scale = max(1.0, abs(self.e_total))
        if abs(self.e_total - (self.e_kinetic + self.e_field)) > 1e-12 * scale:
            raise ValueError("e_total must equal e_kinetic + e_field")
        if self.mismatch > self.modulated + 1e-12 * max(1.0, self.modulated):
            raise ValueError(
                f"current mismatch {self.mismatch:g} exceeds modulated energy "
                f"{self.modulated:g}; state is corrupted"
            )

    def to_csv_row(self) -> str:
        momentum_y = self.momentum[1] if len(self.momentum) > 1 else None
        cells = (
            self.t,
            self.mass,
            self.momentum[0],
            momentum_y,
            self.e_kinetic,
            self.e_field,
            self.e_total,
            self.modulated,
            self.mismatch,
            self.quasineutrality,
            self.current_error_raw,
            self.current_error_divfree,
            self.clipped_mass,
            self.newton_iters,
            self.field_residual,
        )
        return ",".join(_fmt(c) for c in cells)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)


# ---------------------------------------------------------------------------
# Energies.
# ---------------------------------------------------------------------------


def field_energy(potential: Potential | None) -> float:
    """(eps^2 / 2) integral of |grad phi|^2; zero for a missing field."""
    if potential is None:
        return 0.0
    g2 = (potential.grad**2).sum(axis=0)
    return 0.5 * potential.epsilon**2 * grid_integral(potential.grid, g2)


def total_energy(
    f: PhaseField, potential: Potential | None = None
) -> tuple[float, float, float]:
    """(e_kinetic, e_field, e_total) for one phase-space state."""
    e_kin = grid_integral(f.x_grid, moments(f).e_kin)
    e_fld = field_energy(potential)
    return e_kin, e_fld, e_kin + e_fld


def modulated_energy(
    f: PhaseField, potential: Potential | None, reference_velocity
) -> float:
    """(1/2) sum |xi - u(x)|^2 f + field energy, u a reference flow.

    Evaluated directly on phase space, then cross-checked against the
    moment expansion e_kin - sum J.u + (1/2) sum rho |u|^2 + e_field; a
    disagreement beyond accumulated roundoff means the moment tables and
    the distribution went out of sync, which is raised, not returned.
    """
    d = f.dimension
    u = np.asarray(reference_velocity, dtype=float)
    if u.shape != (d,) + f.x_grid.shape:
        raise GridMismatchError(
            f"reference velocity shape {u.shape} != {(d,) + f.x_grid.shape}"
        )
    mesh = f.v_grid.node_mesh()
    sq = np.zeros(f.values.shape)
    for a in range(d):
        shift = u[a].reshape(f.x_grid.shape + (1,) * d)
        sq += (mesh[a].reshape((1,) * d + f.v_grid.shape) - shift) ** 2
    direct = 0.5 * float((sq * f.values).sum()) * f.phase_volume
    e_fld = field_energy(potential)

    macro = moments(f)
    cross = sum(
        grid_integral(f.x_grid, macro.current[a] * u[a]) for a in range(d)
    )
    expanded = (
        grid_integral(f.x_grid, macro.e_kin)
        - cross
        + 0.5 * grid_integral(f.x_grid, macro.rho * (u**2).sum(axis=0))
    )
    scale = max(1.0, abs(direct))
    if abs(direct - expanded) > 1e-12 * scale:
        raise RuntimeError(
            f"modulated energy inconsistency: direct {direct:.17g} vs "
            f"moment expansion {expanded:.17g}"
        )
    return direct + e_fld


# ---------------------------------------------------------------------------
# Current functionals.
# ---------------------------------------------------------------------------


def _weighted_current_density(rho, gap_sq, label: str):
    """|gap|^2 / (2 rho) with vacuum-node policy shared by h and K."""
    mask = rho > RHO_FLOOR
    bad = (~mask) & (gap_sq > CURRENT_AT_VACUUM**2)
    if np.any(bad):
        node = np.unravel_index(int(np.argmax(gap_sq * ~mask)), rho.shape)
        raise DegenerateDensityError(
            f"{label}: density {rho[node]:g} at node {node} carries current"
        )
    out = np.zeros_like(rho)
    out[mask] = gap_sq[mask] / (2.0 * rho[mask])
    return out


def h_functional(macro: MacroFields, reference_velocity) -> float:
    """sum |J - rho u|^2 / (2 rho) over the torus."""
    grid = macro.grid
    d = grid.dimension
    u = np.asarray(reference_velocity, dtype=float)
    if u.shape != (d,) + grid.shape:
        raise GridMismatchError(
            f"reference velocity shape {u.shape} != {(d,) + grid.shape}"
        )
    gap_sq = np.zeros(grid.shape)
    for a in range(d):
        gap_sq += (macro.current[a] - macro.rho * u[a]) ** 2
    return grid_integral(grid, _weighted_current_density(macro.rho, gap_sq, "h"))


def quasineutrality_norm(grid: TorusGrid, rho: np.ndarray) -> float:
    """Spectral H^{-1} norm of rho - 1 (k = 0 mode excluded)."""
    if rho.shape != grid.shape:
        raise GridMismatchError(f"density shape {rho.shape} != {grid.shape}")
    coeff = np.fft.fftn(rho - 1.0) / rho.size
    k = 2.0 * np.pi * grid.wavenumbers_int()
    if grid.dimension == 1:
        k_sq = k**2
    else:
        k_sq = k[:, None] ** 2 + k[None, :] ** 2
    power = np.abs(coeff) ** 2
    flat_k = k_sq.ravel()
    flat_p = power.ravel()
    nonzero = flat_k > 0.0
    return float(np.sqrt((flat_p[nonzero] / flat_k[nonzero]).sum()))


def _time_quadrature(times: np.ndarray, samples: np.ndarray) -> float:
    return float(np.trapezoid(samples, times))


def k_functional_check(
    grid: TorusGrid, times, rho, current, z, b_samples
) -> tuple[float, float]:
    """Primal value and best dual lower bound of the current functional.

    primal = int_t z(t) int |J|^2/(2 rho) dx dt; the dual bracket for a
    candidate field b is int_t z(t) int (b.J - |b|^2 rho / 2) dx dt.  For
    every b, bracket <= primal (pointwise Young inequality with positive
    weights), with equality exactly at b = J / rho; the caller supplies the
    candidates, typically including that optimizer.
    """
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho, dtype=float)
    current = np.asarray(current, dtype=float)
    z = np.asarray(z, dtype=float)
    n_t = len(times)
    d = grid.dimension
    if n_t < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("need at least two strictly increasing times")
    if np.any(z < 0.0):
        raise ValueError("time weight z must be nonnegative")
    if rho.shape != (n_t,) + grid.shape or current.shape != (n_t, d) + grid.shape:
        raise GridMismatchError("trajectory arrays do not match the grid")

    gap_sq = (current**2).sum(axis=1)
    primal_t = np.array(
        [
            grid_integral(grid, _weighted_current_density(rho[i], gap_sq[i], "K"))
            for i in range(n_t)
        ]
    )
    primal = _time_quadrature(times, z * primal_t)

    best = -np.inf
    for b in b_samples:
        b = np.broadcast_to(np.asarray(b, dtype=float), (n_t, d) + grid.shape)
        bracket_t = np.array(
            [
                grid_integral(
                    grid,
                    (b[i] * current[i]).sum(axis=0) - 0.5 * (b[i] ** 2).sum(axis=0) * rho[i],
                )
                for i in range(n_t)
            ]
        )
        best = max(best, _time_quadrature(times, z * bracket_t))
    return primal, best


def current_error(grid: TorusGrid, current, euler_velocity, mode: str) -> float:
    """L2 distance between the current and a reference velocity field.

    mode "raw" compares J directly; mode "divfree" compares its Leray
    projection (the gradient part of J carries the fast oscillation and is
    not expected to converge pointwise).
    """
    d = grid.dimension
    j = np.stack([np.asarray(c, dtype=float) for c in current])
    u = np.asarray(euler_velocity, dtype=float)
    if j.shape != (d,) + grid.shape or u.shape != (d,) + grid.shape:
        raise GridMismatchError("current/velocity shapes do not match the grid")
    if mode == "raw":
        return l2_norm(grid, j - u)
    if mode == "divfree":
        return l2_norm(grid, leray_project(grid, j) - u)
    raise ValueError(f"unknown current_error mode {mode!r}")


# ---------------------------------------------------------------------------
# Moment-equation residuals from snapshot windows.
# ---------------------------------------------------------------------------


def moment_residuals(
    grid: TorusGrid, times, rho, current, stress, force=None
) -> tuple[float, float]:
    """Discrete residuals of the mass and momentum balance laws.

    Time derivatives are centered differences on a uniformly spaced snapshot
    window (>= 3 snapshots); space derivatives are spectral.  ``stress`` is
    the (d, d) second moment per snapshot, ``force`` the per-snapshot
    density-weighted field gradient rho * grad(phi) (omit for field-free
    runs).  Returns the largest spatial L2 residual over interior snapshots
    of

        r_mass     = d_t rho + div J,
        r_momentum = d_t J + div S - force.
    """
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho, dtype=float)
    current = np.asarray(current, dtype=float)
    stress = np.asarray(stress, dtype=float)
    n_t = len(times)
    d = grid.dimension
    if n_t < 3:
        raise InsufficientSnapshotsError(
            f"need >= 3 snapshots for centered differences, got {n_t}"
        )
    steps = np.diff(times)
    if np.any(steps <= 0) or np.abs(steps - steps[0]).max() > 1e-9 * steps[0]:
        raise ValueError("snapshot times must be uniformly spaced and increasing")
    dt = float(steps[0])
    if force is None:
        force = np.zeros_like(current)
    else:
        force = np.asarray(force, dtype=float)

    r_mass = 0.0
    r_mom = 0.0
    for i in range(1, n_t - 1):
        drho = (rho[i + 1] - rho[i - 1]) / (2.0 * dt)
        div_j = spectral_divergence(grid, current[i])
        r_mass = max(r_mass, l2_norm(grid, drho + div_j))
        dj = (current[i + 1] - current[i - 1]) / (2.0 * dt)
        div_s = np.stack(
            [spectral_divergence(grid, stress[i, b]) for b in range(d)]
        )
        r_mom = max(r_mom, l2_norm(grid, dj + div_s - force[i]))
    return r_mass, r_mom


# ---------------------------------------------------------------------------
# Record assembly.
# ---------------------------------------------------------------------------


def build_record(
    f: PhaseField,
    potential: Potential | None,
    euler_velocity=None,
    clipped_mass: float = 0.0,
    report: FieldSolveReport | None = None,
    macro: MacroFields | None = None,
) -> DiagnosticsRecord:
    """Evaluate every monitored functional for one snapshot.

    With no reference velocity the modulated energy is taken against u = 0
    (it then equals the total energy) and the current-error cells stay
    empty.  ``macro`` may be passed to reuse moments already computed by the
    caller; it must belong to the same state.
    """
    grid = f.x_grid
    d = f.dimension
    if macro is None:
        macro = moments(f)
    u = (
        np.zeros((d,) + grid.shape)
        if euler_velocity is None
        else np.asarray(euler_velocity, dtype=float)
    )
    e_kin = grid_integral(grid, macro.e_kin)
    e_fld = field_energy(potential)
    momentum = tuple(grid_integral(grid, macro.current[a]) for a in range(d))
    record = DiagnosticsRecord(
        t=f.time,
        mass=grid_integral(grid, macro.rho),
        momentum=momentum,
        e_kinetic=e_kin,
        e_field=e_fld,
        e_total=e_kin + e_fld,
        modulated=modulated_energy(f, potential, u),
        mismatch=h_functional(macro, u),
        quasineutrality=quasineutrality_norm(grid, macro.rho),
        current_error_raw=(
            None
            if euler_velocity is None
            else current_error(grid, macro.current, u, "raw")
        ),
        current_error_divfree=(
            None
            if euler_velocity is None
            else current_error(grid, macro.current, u, "divfree")
        ),
        clipped_mass=clipped_mass,
        newton_iters=None if report is None else report.iterations,
        field_residual=None if report is None else report.residual,
    )
    return record
