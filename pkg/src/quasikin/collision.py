"""Collision operators: conservative BGK relaxation and a direct-quadrature
Boltzmann integral for small velocity grids.

Both operators preserve the discrete collision invariants (mass, momentum,
kinetic energy) by construction rather than by accident of resolution:

* ``bgk_collide`` relaxes toward a *discrete* Maxwellian whose grid moments
  match those of f exactly (a per-node Newton solve on the parameters
  ``(log amplitude, u, theta)``), then applies the exponential update
  ``f <- exp(-dt/tau) f + (1 - exp(-dt/tau)) M``, which is unconditionally
  positivity-preserving.  Because the matched Maxwellian is the Gibbs
  minimizer of ``sum f log f`` under the moment constraints, the update also
  never increases the discrete entropy.

* ``boltzmann_collide_direct`` evaluates the gain/loss integral with the
  sigma-representation of post-collision velocities

      xi'  = (xi + xi1)/2 + (|xi - xi1|/2) sigma,
      xi1' = (xi + xi1)/2 - (|xi - xi1|/2) sigma,

  sigma ranging over the admissible half sphere sigma.(xi - xi1) >= 0, with
  the hard-sphere kernel b = |xi - xi1|^gamma / measure(S+^{d-1}) (gamma = 1
  by default).  The raw quadrature breaks the invariants at interpolation
  accuracy, so the result is orthogonally projected (in the midpoint-weighted
  inner product) onto the complement of span{1, xi, |xi|^2}.  It is a
  verification oracle: d = 2 only, n_v <= 32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import PhaseField, VelocityGrid, moments

__all__ = [
    "CollisionConfig",
    "CollisionMomentError",
    "post_collision_velocities",
    "match_discrete_maxwellian",
    "bgk_collide",
    "boltzmann_collide_direct",
]

DIRECT_MAX_NV = 32


class CollisionMomentError(RuntimeError):
    """Moment-matched Maxwellian construction failed (corrupted state)."""


@dataclass(frozen=True)
class CollisionConfig:
    """Collision model selection.

    kind : "none", "bgk", or "direct"
    tau : BGK relaxation time (> 0)
    gamma : kernel exponent, b ~ |xi - xi1|^gamma (hard sphere: 1)
    n_sigma : angular quadrature points on the admissible half circle
    """

    kind: str = "none"
    tau: float = 0.1
    gamma: float = 1.0
    n_sigma: int = 16

    def __post_init__(self) -> None:
        if self.kind not in ("none", "bgk", "direct"):
            raise ValueError(f"unknown collision kind {self.kind!r}")
        if self.kind == "bgk" and not (self.tau > 0.0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.n_sigma < 8 or self.n_sigma % 2 != 0:
            raise ValueError(f"n_sigma must be even and >= 8, got {self.n_sigma}")


def post_collision_velocities(xi, xi1, sigma) -> tuple[np.ndarray, np.ndarray]:
    """Post-collision pair for unit sigma on the admissible half sphere.

    Conserves momentum and kinetic energy identically: xi' + xi1' = xi + xi1
    and |xi'|^2 + |xi1'|^2 = |xi|^2 + |xi1|^2.  Rejects non-unit sigma.
    """
    xi = np.asarray(xi, dtype=float)
    xi1 = np.asarray(xi1, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if abs(float(np.sqrt((sigma**2).sum())) - 1.0) > 1e-12:
        raise ValueError("sigma must be a unit vector")
    center = 0.5 * (xi + xi1)
    radius = 0.5 * float(np.sqrt(((xi - xi1) ** 2).sum()))
    return center + radius * sigma, center - radius * sigma


# ---------------------------------------------------------------------------
# BGK: discrete-moment-matched Maxwellian via batched Newton.
# ---------------------------------------------------------------------------


def _features(v_grid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Flattened node coordinates (K, d) and collision invariants (K, d+2)."""
    mesh = v_grid.node_mesh()
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    k = nodes.shape[0]
    feats = np.empty((k, v_grid.dimension + 2))
    feats[:, 0] = 1.0
    feats[:, 1 : 1 + v_grid.dimension] = nodes
    feats[:, -1] = (nodes**2).sum(axis=1)
    return nodes, feats


def match_discrete_maxwellian(
    v_grid: VelocityGrid,
    rho: np.ndarray,
    current: np.ndarray,
    energy2: np.ndarray,
    rtol: float = 1e-13,
    max_iter: int = 60,
) -> np.ndarray:
    """Discrete Maxwellians matching given grid moments exactly.

    Parameters are batched over nodes: ``rho`` (m,), ``current`` (m, d), and
    ``energy2 = sum |xi|^2 f h_v^d`` (m,).  Returns values of shape
    (m,) + v_grid.shape whose *discrete* moments reproduce the targets to
    relative accuracy ``rtol``.  Nodes with rho = 0 get the zero function.
    Raises CollisionMomentError (with the worst node index) for
    non-realizable moments or a stalled parameter solve.
    """
    d = v_grid.dimension
    rho = np.asarray(rho, dtype=float)
    current = np.asarray(current, dtype=float).reshape(len(rho), d)
    energy2 = np.asarray(energy2, dtype=float)
    m = len(rho)
    out = np.zeros((m,) + v_grid.shape)

    active = rho > 0.0
    if np.any(rho < 0.0):
        node = int(np.argmin(rho))
        raise CollisionMomentError(f"negative density at node {node}: {rho[node]:g}")
    if not np.any(active):
        return out
    idx = np.nonzero(active)[0]
    r = rho[idx]
    j = current[idx]
    e2 = energy2[idx]

    u = j / r[:, None]
    theta = (e2 / r - (u**2).sum(axis=1)) / d
    if np.any(theta <= 0.0):
        bad = idx[int(np.argmin(theta))]
        raise CollisionMomentError(
            f"non-realizable moments at node {bad}: inferred temperature <= 0"
        )

    nodes, feats = _features(v_grid)  # (K, d), (K, d+2)
    w = v_grid.weight
    targets = np.concatenate([r[:, None], j, e2[:, None]], axis=1)  # (m', d+2)
    scale = np.maximum(np.abs(targets), r[:, None] * np.maximum(1.0, theta)[:, None])

    log_a = np.log(r) - 0.5 * d * np.log(2.0 * np.pi * theta)

    for _ in range(max_iter):
        diff = nodes[None, :, :] - u[:, None, :]  # (m', K, d)
        q = (diff**2).sum(axis=2)
        vals = np.exp(log_a[:, None] - q / (2.0 * theta[:, None]))  # (m', K)
        mom = (vals @ feats) * w  # (m', d+2)
        resid = mom - targets
        if float(np.abs(resid / scale).max()) <= rtol:
            out[idx] = vals.reshape((len(idx),) + v_grid.shape)
            return out
        # Jacobian of the moment map wrt (log_a, u, theta)
        dlog = np.empty(vals.shape + (d + 2,))
        dlog[..., 0] = 1.0
        dlog[..., 1 : 1 + d] = diff / theta[:, None, None]
        dlog[..., -1] = q / (2.0 * theta[:, None] ** 2)
        jac = np.einsum("ki,mk,mkj->mij", feats, vals, dlog) * w
        try:
            step = np.linalg.solve(jac, -resid[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise CollisionMomentError(f"singular moment Jacobian: {exc}") from exc
        # keep theta positive: per-node damping
        d_theta = step[:, -1]
        lam = np.ones(len(r))
        shrink = d_theta < -0.5 * theta
        lam[shrink] = 0.5 * theta[shrink] / (-d_theta[shrink])
        log_a += lam * step[:, 0]
        u += lam[:, None] * step[:, 1 : 1 + d]
        theta += lam * d_theta
    worst = idx[int(np.argmax(np.abs(resid / scale).max(axis=1)))]
    raise CollisionMomentError(
        f"moment matching stalled at node {worst}; "
        f"relative residual {float(np.abs(resid / scale).max()):g}"
    )


def bgk_collide(f: PhaseField, tau: float, dt: float) -> PhaseField:
    """Exponential BGK update toward the discrete-moment-matched Maxwellian.

    f_new = exp(-dt/tau) f + (1 - exp(-dt/tau)) M*, which preserves the
    discrete invariants to the Maxwellian matching tolerance, preserves
    positivity for any dt, and does not increase sum f log f.
    """
    if not (tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau}")
    if dt < 0.0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    macro = moments(f)
    d = f.dimension
    spatial = f.x_grid.shape
    m = int(np.prod(spatial))
    rho = macro.rho.reshape(m)
    cur = np.stack([macro.current[a].reshape(m) for a in range(d)], axis=1)
    e2 = 2.0 * macro.e_kin.reshape(m)
    maxw = match_discrete_maxwellian(f.v_grid, rho, cur, e2)
    maxw = maxw.reshape(spatial + f.v_grid.shape)
    decay = float(np.exp(-dt / tau))
    values = decay * f.values + (1.0 - decay) * maxw
    return PhaseField(f.x_grid, f.v_grid, values, f.time)


# ---------------------------------------------------------------------------
# Direct quadrature of the Boltzmann integral (oracle scale, d = 2).
# ---------------------------------------------------------------------------


def _bilinear_gather(fv: np.ndarray, pts: np.ndarray, v_grid: VelocityGrid) -> np.ndarray:
    """Bilinear interpolation of fv (n_v, n_v) at pts (..., 2); 0 outside."""
    n = v_grid.n_v
    h = v_grid.h_v
    x0 = v_grid.axis_nodes()[0]
    g = (pts - x0) / h  # fractional node index per component
    i0 = np.floor(g).astype(np.int64)
    t = g - i0
    vals = np.zeros(pts.shape[:-1])
    for da in (0, 1):
        for db in (0, 1):
            ia = i0[..., 0] + da
            ib = i0[..., 1] + db
            inside = (ia >= 0) & (ia < n) & (ib >= 0) & (ib < n)
            wgt = (t[..., 0] if da else 1.0 - t[..., 0]) * (
                t[..., 1] if db else 1.0 - t[..., 1]
            )
            contrib = np.where(inside, fv[np.clip(ia, 0, n - 1), np.clip(ib, 0, n - 1)], 0.0)
            vals += wgt * contrib
    return vals


def _project_out_invariants(v_grid: VelocityGrid, q: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the complement of span{1, xi, |xi|^2}."""
    _, feats = _features(v_grid)
    w = v_grid.weight
    gram = feats.T @ feats * w
    coef = np.linalg.solve(gram, feats.T @ q.ravel() * w)
    return q - (feats @ coef).reshape(q.shape)


def boltzmann_collide_direct(f: PhaseField, config: CollisionConfig) -> np.ndarray:
    """Collision term Q(f, f) on the phase grid, invariant-projected.

    Restricted to d = 2 and n_v <= 32 (cost grows like n_v^4 n_sigma per
    spatial node); intended as an independent check of the BGK surrogate,
    not as a time-stepping model.
    """
    if f.dimension != 2:
        raise ValueError("direct collision quadrature is implemented for d = 2 only")
    vg = f.v_grid
    if vg.n_v > DIRECT_MAX_NV:
        raise ValueError(f"direct quadrature capped at n_v <= {DIRECT_MAX_NV}")

    nodes, _ = _features(vg)  # (K, 2)
    k = nodes.shape[0]
    rel = nodes[:, None, :] - nodes[None, :, :]  # (K, K, 2)
    r = np.sqrt((rel**2).sum(axis=2))
    with np.errstate(invalid="ignore", divide="ignore"):
        e_hat = np.where(r[..., None] > 0.0, rel / np.maximum(r, 1e-300)[..., None], 0.0)
    perp = np.stack([-e_hat[..., 1], e_hat[..., 0]], axis=-1)
    center = 0.5 * (nodes[:, None, :] + nodes[None, :, :])

    n_sigma = config.n_sigma
    alphas = (np.arange(n_sigma) + 0.5) * np.pi / n_sigma - 0.5 * np.pi
    # kernel b = r^gamma / measure(S+^1) integrated with weight pi/n_sigma
    kernel = (r**config.gamma) * (vg.weight / n_sigma)  # (K, K)
    np.fill_diagonal(kernel, 0.0)

    out = np.empty(f.x_grid.shape + vg.shape)
    fv_all = f.values.reshape(f.x_grid.shape + (vg.n_v, vg.n_v))
    for index in np.ndindex(*f.x_grid.shape):
        fv = fv_all[index]
        f_flat = fv.ravel()
        loss_pairs = f_flat[:, None] * f_flat[None, :]  # f(xi) f(xi1)
        gain = np.zeros((k, k))
        for a in range(n_sigma):
            sigma = np.cos(alphas[a]) * e_hat + np.sin(alphas[a]) * perp  # (K,K,2)
            xi_p = center + 0.5 * r[..., None] * sigma
            xi1_p = center - 0.5 * r[..., None] * sigma
            gain += _bilinear_gather(fv, xi_p, vg) * _bilinear_gather(fv, xi1_p, vg)
        # sum over xi1 of (sigma-summed gain - n_sigma * loss) * per-sigma weight
        q_xi = ((gain - loss_pairs * n_sigma) * kernel).sum(axis=1)
        out[index] = _project_out_invariants(vg, q_xi).reshape(vg.shape)
    return out
