"""Uniform grids, spectral calculus, velocity moments, and snapshot IO.

Spatial fields live on the unit torus [0,1)^d (d in {1,2}) sampled at
``x_j = j/n_x``; velocity space is the symmetric box [-v_max, v_max]^d with
cell-centered nodes and uniform midpoint weights ``h_v^d``.  Differential
operators are pseudo-spectral: exact for band-limited data, with the Nyquist
mode zeroed on odd derivatives.

All reductions go through numpy, whose pairwise summation has a fixed
deterministic order, so every quantity in this package is bit-reproducible
from run to run regardless of thread count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GridMismatchError",
    "TorusGrid",
    "VelocityGrid",
    "PhaseField",
    "MacroFields",
    "moments",
    "stress_moments",
    "maxwellian",
    "spectral_gradient",
    "spectral_divergence",
    "spectral_hessian",
    "spectral_laplacian",
    "inverse_laplacian_zero_mean",
    "grid_integral",
    "l2_norm",
    "random_bandlimited_field",
    "write_snapshot",
    "read_snapshot",
]

TWO_PI = 2.0 * np.pi


class GridMismatchError(ValueError):
    """Fields defined on incompatible grids were combined."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the unit torus [0,1)^d.

    Parameters
    ----------
    dimension : int
        Spatial dimension, 1 or 2.
    n_x : int
        Points per axis; must be even and at least 4 so the spectral
        derivative convention (zeroed Nyquist mode on odd derivatives) is
        well defined.
    """

    dimension: int
    n_x: int

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.n_x < 4 or self.n_x % 2 != 0:
            raise ValueError(f"n_x must be even and >= 4, got {self.n_x}")

    @property
    def h_x(self) -> float:
        return 1.0 / self.n_x

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.dimension

    @property
    def cell_volume(self) -> float:
        return self.h_x**self.dimension

    def axis_coords(self) -> np.ndarray:
        """Grid coordinates along one axis: j * h_x."""
        return np.arange(self.n_x) * self.h_x

    def coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid coordinates, 'ij' indexing, one array per axis."""
        axes = (self.axis_coords(),) * self.dimension
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers_int(self) -> np.ndarray:
        """Integer wavenumbers in FFT layout (0, 1, ..., -n/2, ..., -1)."""
        return np.rint(np.fft.fftfreq(self.n_x) * self.n_x)


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centered uniform grid on [-v_max, v_max]^d.

    Nodes are ``xi_k = (k - (n_v - 1)/2) * h_v`` with ``h_v = 2 v_max/n_v``;
    the node set is exactly symmetric under ``xi -> -xi`` (pairs are exact
    floating-point negations) and carries midpoint weights ``h_v^d``.
    """

    dimension: int
    n_v: int
    v_max: float

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.n_v < 4:
            raise ValueError(f"n_v must be >= 4, got {self.n_v}")
        if not (self.v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    @property
    def h_v(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_v,) * self.dimension

    @property
    def weight(self) -> float:
        """Quadrature weight per node (midpoint rule)."""
        return self.h_v**self.dimension

    def axis_nodes(self) -> np.ndarray:
        # (k - (n-1)/2) is exact in floating point, so mirrored nodes are
        # exact negations of each other for any h_v.
        return (np.arange(self.n_v) - 0.5 * (self.n_v - 1)) * self.h_v

    def node_mesh(self) -> tuple[np.ndarray, ...]:
        axes = (self.axis_nodes(),) * self.dimension
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def speed_squared(self) -> np.ndarray:
        """|xi|^2 on the velocity mesh."""
        mesh = self.node_mesh()
        out = mesh[0] ** 2
        for m in mesh[1:]:
            out = out + m**2
        return out


@dataclass(eq=False)
class PhaseField:
    """Distribution function f(x, xi) sampled on a phase-space grid.

    ``values`` has shape ``x_grid.shape + v_grid.shape`` (spatial axes first).
    """

    x_grid: TorusGrid
    v_grid: VelocityGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.x_grid.dimension != self.v_grid.dimension:
            raise GridMismatchError(
                f"spatial dimension {self.x_grid.dimension} != velocity "
                f"dimension {self.v_grid.dimension}"
            )
        expected = self.x_grid.shape + self.v_grid.shape
        if self.values.shape != expected:
            raise GridMismatchError(
                f"values shape {self.values.shape} does not match grid shape {expected}"
            )

    @property
    def dimension(self) -> int:
        return self.x_grid.dimension

    @property
    def phase_volume(self) -> float:
        return self.x_grid.cell_volume * self.v_grid.weight

    def mass(self) -> float:
        return float(self.values.sum()) * self.phase_volume

    def validate(self) -> None:
        """Check finiteness and nonnegativity (not run in hot loops)."""
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phase field contains non-finite values")
        if np.any(self.values < 0.0):
            raise ValueError("phase field contains negative values")

    def copy(self) -> "PhaseField":
        return PhaseField(self.x_grid, self.v_grid, self.values.copy(), self.time)


@dataclass(eq=False)
class MacroFields:
    """Velocity moments on the spatial grid.

    ``rho`` is the number density, ``current`` the momentum density with
    shape ``(d,) + grid.shape``, and ``e_kin`` the kinetic energy density
    ``(1/2) sum |xi|^2 f h_v^d``.
    """

    grid: TorusGrid
    rho: np.ndarray
    current: np.ndarray
    e_kin: np.ndarray

    def momentum_total(self) -> np.ndarray:
        return self.current.sum(axis=tuple(range(1, 1 + self.grid.dimension))) * self.grid.cell_volume

    def kinetic_energy_total(self) -> float:
        return float(self.e_kin.sum()) * self.grid.cell_volume


def moments(f: PhaseField) -> MacroFields:
    """Discrete velocity moments (rho, J, e_kin) with midpoint weights.

    rho[j]  = sum_k f[j,k] h_v^d
    J[j]    = sum_k xi_k f[j,k] h_v^d
    e_kin[j]= (1/2) sum_k |xi_k|^2 f[j,k] h_v^d
    """
    d = f.dimension
    w = f.v_grid.weight
    vaxes = tuple(range(d, 2 * d))
    rho = f.values.sum(axis=vaxes) * w
    mesh = f.v_grid.node_mesh()
    current = np.empty((d,) + f.x_grid.shape)
    for a in range(d):
        current[a] = (f.values * mesh[a]).sum(axis=vaxes) * w
    e_kin = 0.5 * (f.values * f.v_grid.speed_squared()).sum(axis=vaxes) * w
    return MacroFields(f.x_grid, rho, current, e_kin)


def stress_moments(f: PhaseField) -> np.ndarray:
    """Second moments S_ab = sum_k xi_a xi_b f h_v^d, shape (d, d) + spatial."""
    d = f.dimension
    w = f.v_grid.weight
    vaxes = tuple(range(d, 2 * d))
    mesh = f.v_grid.node_mesh()
    out = np.empty((d, d) + f.x_grid.shape)
    for a in range(d):
        for b in range(a, d):
            s = (f.values * (mesh[a] * mesh[b])).sum(axis=vaxes) * w
            out[a, b] = s
            out[b, a] = s
    return out


def maxwellian(v_grid: VelocityGrid, rho: float, u, theta: float) -> np.ndarray:
    """Sampled Maxwellian rho (2 pi theta)^(-d/2) exp(-|xi-u|^2 / (2 theta)).

    ``u`` is a length-d sequence.  Rejects theta <= 0.
    """
    if not (theta > 0.0):
        raise ValueError(f"temperature must be positive, got {theta}")
    u = np.asarray(u, dtype=float).reshape(v_grid.dimension)
    mesh = v_grid.node_mesh()
    q = np.zeros(v_grid.shape)
    for a in range(v_grid.dimension):
        q += (mesh[a] - u[a]) ** 2
    norm = rho * (TWO_PI * theta) ** (-0.5 * v_grid.dimension)
    return norm * np.exp(-q / (2.0 * theta))


# ---------------------------------------------------------------------------
# Spectral calculus on the torus.
# ---------------------------------------------------------------------------


def _check_spatial(grid: TorusGrid, field: np.ndarray) -> None:
    if field.shape != grid.shape:
        raise GridMismatchError(f"field shape {field.shape} != grid shape {grid.shape}")


def _ik_factor(grid: TorusGrid, axis: int) -> np.ndarray:
    """i * 2 pi k along ``axis`` with the Nyquist mode zeroed, broadcastable."""
    k = grid.wavenumbers_int()
    ik = 1j * TWO_PI * k
    ik[grid.n_x // 2] = 0.0  # Nyquist has no well-defined sign for odd derivatives
    shape = [1] * grid.dimension
    shape[axis] = grid.n_x
    return ik.reshape(shape)


def _k2_factor(grid: TorusGrid) -> np.ndarray:
    """|2 pi k|^2 on the full FFT mesh (Nyquist included)."""
    k = TWO_PI * grid.wavenumbers_int()
    if grid.dimension == 1:
        return k**2
    return (k**2)[:, None] + (k**2)[None, :]


def spectral_gradient(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    """Gradient of a periodic field, shape (d,) + grid.shape."""
    _check_spatial(grid, field)
    fhat = np.fft.fftn(field)
    out = np.empty((grid.dimension,) + grid.shape)
    for a in range(grid.dimension):
        out[a] = np.fft.ifftn(fhat * _ik_factor(grid, a)).real
    return out


def spectral_divergence(grid: TorusGrid, vec: np.ndarray) -> np.ndarray:
    """Divergence of a vector field with shape (d,) + grid.shape."""
    if vec.shape != (grid.dimension,) + grid.shape:
        raise GridMismatchError(
            f"vector shape {vec.shape} != {(grid.dimension,) + grid.shape}"
        )
    out = np.zeros(grid.shape, dtype=complex)
    for a in range(grid.dimension):
        out += np.fft.fftn(vec[a]) * _ik_factor(grid, a)
    return np.fft.ifftn(out).real


def spectral_hessian(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    """Hessian D^2 field, shape (d, d) + grid.shape.

    Diagonal entries use the full -(2 pi k)^2 symbol; mixed entries compose
    two first derivatives (Nyquist zeroed on each axis).
    """
    _check_spatial(grid, field)
    fhat = np.fft.fftn(field)
    d = grid.dimension
    out = np.empty((d, d) + grid.shape)
    k = TWO_PI * grid.wavenumbers_int()
    for a in range(d):
        shape = [1] * d
        shape[a] = grid.n_x
        out[a, a] = np.fft.ifftn(fhat * (-(k**2)).reshape(shape)).real
    if d == 2:
        mixed = np.fft.ifftn(fhat * _ik_factor(grid, 0) * _ik_factor(grid, 1)).real
        out[0, 1] = mixed
        out[1, 0] = mixed
    return out


def spectral_laplacian(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    _check_spatial(grid, field)
    return np.fft.ifftn(np.fft.fftn(field) * (-_k2_factor(grid))).real


def inverse_laplacian_zero_mean(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    """Solve Laplace(phi) = field with zero-mean phi.

    Rejects input whose mean exceeds 1e-10 in magnitude (no solution exists
    on the torus); callers must remove the mean themselves if they consider
    it a discretization artifact.
    """
    _check_spatial(grid, field)
    mean = float(field.mean())
    if abs(mean) > 1e-10:
        raise ValueError(f"inverse Laplacian needs zero-mean input, got mean {mean:g}")
    fhat = np.fft.fftn(field)
    k2 = _k2_factor(grid).copy()
    flat_zero = (0,) * grid.dimension
    k2[flat_zero] = 1.0
    phihat = fhat / (-k2)
    phihat[flat_zero] = 0.0
    return np.fft.ifftn(phihat).real


def grid_integral(grid: TorusGrid, field: np.ndarray) -> float:
    _check_spatial(grid, field)
    return float(field.sum()) * grid.cell_volume


def l2_norm(grid: TorusGrid, field: np.ndarray) -> float:
    """Discrete L^2(torus) norm; accepts component-stacked fields too."""
    if field.shape != grid.shape and field.shape[1:] != grid.shape:
        raise GridMismatchError(f"unexpected field shape {field.shape}")
    return float(np.sqrt((field**2).sum() * grid.cell_volume))


def random_bandlimited_field(
    grid: TorusGrid, max_mode: int, rng: np.random.Generator, amplitude: float = 1.0
) -> np.ndarray:
    """Random real zero-mean field with integer modes |k_a| <= max_mode.

    Normalized so max|field| = amplitude.  Useful for property tests and
    randomized initial data; fully determined by the supplied generator.
    """
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    if max_mode >= grid.n_x // 2:
        raise ValueError("max_mode must stay below the Nyquist mode")
    spec = np.zeros(grid.shape, dtype=complex)
    k = grid.wavenumbers_int()
    if grid.dimension == 1:
        mask = np.abs(k) <= max_mode
    else:
        mask = (np.abs(k)[:, None] <= max_mode) & (np.abs(k)[None, :] <= max_mode)
    mask[(0,) * grid.dimension] = False
    n_active = int(mask.sum())
    spec[mask] = rng.standard_normal(n_active) + 1j * rng.standard_normal(n_active)
    field = np.fft.ifftn(spec).real
    field -= field.mean()
    peak = float(np.abs(field).max())
    if peak == 0.0:
        return field
    return field * (amplitude / peak)


# ---------------------------------------------------------------------------
# Snapshot IO: raw little-endian float64 (row-major) plus a JSON sidecar.
# ---------------------------------------------------------------------------


def write_snapshot(f: PhaseField, path_base, field_name: str = "f") -> None:
    """Write ``<path_base>.bin`` (raw <f8, row-major) and ``<path_base>.json``."""
    base = Path(path_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".bin").write_bytes(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    manifest = {
        "dimension": f.dimension,
        "n_x": f.x_grid.n_x,
        "n_v": f.v_grid.n_v,
        "v_max": f.v_grid.v_max,
        "time": f.time,
        "field_name": field_name,
    }
    base.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_snapshot(path_base) -> PhaseField:
    """Round-trip counterpart of :func:`write_snapshot`."""
    base = Path(path_base)
    manifest = json.loads(base.with_suffix(".json").read_text())
    d = int(manifest["dimension"])
    x_grid = TorusGrid(d, int(manifest["n_x"]))
    v_grid = VelocityGrid(d, int(manifest["n_v"]), float(manifest["v_max"]))
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    values = raw.reshape(x_grid.shape + v_grid.shape).copy()
    return PhaseField(x_grid, v_grid, values, time=float(manifest["time"]))
