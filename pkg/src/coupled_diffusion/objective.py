"""Per-agent risks, constraints, penalty functions, and gradient oracles.

Penalty functions return (value, derivative) pairs and accept scalars or
arrays. The penalty weight eta is applied by the engine, not here, so a
single evaluation serves multiple eta values in sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch
from .topology import BlockLayout, ClusterMap, NetworkSpec


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight and inequality smoothing parameter."""

    eta: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def ep_penalty(x):
    """Equality penalty x**2 with derivative 2x."""
    x = np.asarray(x, dtype=float)
    return x * x, 2.0 * x


def ip_penalty(x, rho: float):
    """Inequality penalty max(0, x^3 / sqrt(x^2 + rho^2)) and its derivative.

    Zero with zero slope on x <= 0; both value and derivative are
    continuous at the origin.
    """
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xp = np.where(pos, x, 0.0)
    root = np.sqrt(xp * xp + rho * rho)
    value = np.where(pos, xp**3 / root, 0.0)
    deriv = np.where(pos, xp * xp * (2 * xp * xp + 3 * rho * rho) / root**3, 0.0)
    return value, deriv


@dataclass(frozen=True)
class ConstraintSpec:
    """One local constraint h(w_k)=0 or g(w_k)<=0 owned by a single agent.

    Affine constraints store (coeffs, offset) for c'w - b. General convex
    inequalities may instead supply fn(w) -> (value, gradient).
    """

    kind: str  # "equality" | "inequality"
    owner: int
    coeffs: Optional[np.ndarray] = None
    offset: float = 0.0
    fn: Optional[Callable[[np.ndarray], tuple[float, np.ndarray]]] = None

    def __post_init__(self):
        if self.kind not in ("equality", "inequality"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "equality" and self.fn is not None:
            raise ValueError("equality constraints must be affine")
        if (self.coeffs is None) == (self.fn is None):
            raise ValueError("provide exactly one of coeffs or fn")
        if self.coeffs is not None:
            object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def evaluate(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        """Constraint value and gradient at w."""
        if self.fn is not None:
            return self.fn(w)
        if self.coeffs.shape != w.shape:
            raise DimensionMismatch(
                f"constraint expects dim {self.coeffs.shape[0]}, got {w.shape[0]}"
            )
        return float(self.coeffs @ w - self.offset), self.coeffs


def equality(owner: int, coeffs, offset: float) -> ConstraintSpec:
    return ConstraintSpec(kind="equality", owner=owner, coeffs=coeffs, offset=offset)


def inequality(owner: int, coeffs, offset: float) -> ConstraintSpec:
    return ConstraintSpec(kind="inequality", owner=owner, coeffs=coeffs, offset=offset)


def penalty_value(constraints, w: np.ndarray, cfg: PenaltyConfig) -> float:
    """Sum of penalty terms at w (without the eta factor)."""
    total = 0.0
    for c in constraints:
        val, _ = c.evaluate(w)
        if c.kind == "equality":
            total += float(ep_penalty(val)[0])
        else:
            total += float(ip_penalty(val, cfg.rho)[0])
    return total


def penalty_gradient(constraints, w: np.ndarray, cfg: PenaltyConfig) -> np.ndarray:
    """Gradient of the summed penalty at w (without the eta factor)."""
    grad = np.zeros_like(np.asarray(w, dtype=float))
    for c in constraints:
        val, cgrad = c.evaluate(w)
        if cgrad.shape != grad.shape:
            raise DimensionMismatch("constraint gradient has wrong dimension")
        if c.kind == "equality":
            grad += float(ep_penalty(val)[1]) * cgrad
        else:
            grad += float(ip_penalty(val, cfg.rho)[1]) * cgrad
    return grad


@dataclass(frozen=True)
class GradientSample:
    """One stochastic gradient draw, optionally paired with the true gradient."""

    grad: np.ndarray
    true_grad: Optional[np.ndarray] = None


@dataclass(frozen=True)
class QuadraticRiskOracle:
    """Streaming least-squares risk E(h'w - y)^2 with y = h'w_ref + noise.

    Features h are Gaussian with covariance basis @ diag(spectrum) @ basis'.
    One sample consumes dim + 1 standard normal draws from the supplied
    generator, which keeps paired runs noise-for-noise identical.
    """

    basis: np.ndarray  # orthogonal
    spectrum: np.ndarray  # diagonal of the covariance eigenvalues
    w_ref: np.ndarray
    noise_std: float
    _scaled_basis: np.ndarray = field(repr=False, default=None)
    _covariance: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "basis", np.asarray(self.basis, dtype=float))
        object.__setattr__(self, "spectrum", np.asarray(self.spectrum, dtype=float))
        object.__setattr__(self, "w_ref", np.asarray(self.w_ref, dtype=float))
        object.__setattr__(self, "_scaled_basis", self.basis * np.sqrt(self.spectrum))
        object.__setattr__(self, "_covariance", (self.basis * self.spectrum) @ self.basis.T)

    @property
    def dim(self) -> int:
        return self.w_ref.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self._covariance

    @property
    def model(self) -> np.ndarray:
        return self.w_ref

    def stochastic_gradient(self, zeta: np.ndarray, rng) -> np.ndarray:
        draws = rng.standard_normal(self.dim + 1)
        h = self._scaled_basis @ draws[: self.dim]
        y = h @ self.w_ref + self.noise_std * draws[self.dim]
        return 2.0 * (h @ zeta - y) * h

    def true_gradient(self, w: np.ndarray) -> np.ndarray:
        if w.shape != self.w_ref.shape:
            raise DimensionMismatch(f"expected dim {self.dim}, got {w.shape}")
        return 2.0 * (self._covariance @ (w - self.w_ref))

    def risk(self, w: np.ndarray) -> float:
        d = w - self.w_ref
        return float(d @ self.covariance @ d) + self.noise_std**2


@dataclass(frozen=True)
class PaddedOracle:
    """Oracle extended by zero cost onto extra coordinates.

    Used when cluster embedding enlarges an agent's interest set: the new
    blocks contribute nothing to the risk, so their gradient entries are
    identically zero.
    """

    inner: QuadraticRiskOracle
    positions: np.ndarray  # indices of the inner coordinates in the padded vector
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=int))

    @property
    def covariance(self) -> np.ndarray:
        cov = np.zeros((self.dim, self.dim))
        cov[np.ix_(self.positions, self.positions)] = self.inner.covariance
        return cov

    @property
    def model(self) -> np.ndarray:
        m = np.zeros(self.dim)
        m[self.positions] = self.inner.model
        return m

    def stochastic_gradient(self, zeta, rng):
        grad = np.zeros(self.dim)
        grad[self.positions] = self.inner.stochastic_gradient(zeta[self.positions], rng)
        return grad

    def true_gradient(self, w):
        out = np.zeros(self.dim)
        out[self.positions] = self.inner.true_gradient(w[self.positions])
        return out


def sample_stochastic_gradient(oracle, zeta: np.ndarray, rng, with_true: bool = True) -> GradientSample:
    """Draw one stochastic gradient; the paired true gradient serves noise tests."""
    zeta = np.asarray(zeta, dtype=float)
    grad = oracle.stochastic_gradient(zeta, rng)
    return GradientSample(grad=grad, true_grad=oracle.true_gradient(zeta) if with_true else None)


def true_gradient(oracle, w: np.ndarray) -> np.ndarray:
    return oracle.true_gradient(np.asarray(w, dtype=float))


def random_orthogonal(dim: int, rng) -> np.ndarray:
    """Haar-ish orthogonal matrix via QR with sign-fixed diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_quadratic_oracle(w_ref: np.ndarray, rng, spectrum_range=(1.0, 3.0),
                            noise_db_range=(-30.0, -20.0)) -> QuadraticRiskOracle:
    """Random oracle: orthogonal basis, uniform spectrum, noise power drawn
    uniformly in dB and converted via sigma^2 = 10^(dB/10)."""
    w_ref = np.asarray(w_ref, dtype=float)
    dim = w_ref.shape[0]
    basis = random_orthogonal(dim, rng)
    spectrum = rng.uniform(*spectrum_range, size=dim)
    noise_db = rng.uniform(*noise_db_range)
    noise_std = float(np.sqrt(10.0 ** (noise_db / 10.0)))
    return QuadraticRiskOracle(basis=basis, spectrum=spectrum, w_ref=w_ref, noise_std=noise_std)


@dataclass(frozen=True)
class MultiAgentProblem:
    """A full problem instance: topology, per-agent oracles, constraints."""

    net: NetworkSpec
    layout: BlockLayout
    cmap: ClusterMap
    oracles: tuple
    constraints: tuple[tuple[ConstraintSpec, ...], ...]
    penalty: PenaltyConfig
    true_model: Optional[np.ndarray] = None

    def __post_init__(self):
        for k, o in enumerate(self.oracles):
            if o.dim != self.cmap.local_dims[k]:
                raise DimensionMismatch(
                    f"oracle {k} has dim {o.dim}, layout expects {self.cmap.local_dims[k]}"
                )
        for k, cons in enumerate(self.constraints):
            for c in cons:
                if c.owner != k:
                    raise ValueError(f"constraint owned by {c.owner} listed under agent {k}")

    @property
    def agent_count(self) -> int:
        return len(self.oracles)

    @property
    def has_constraints(self) -> bool:
        return any(len(c) > 0 for c in self.constraints)

    def penalty_gradient_local(self, agent: int, w_k: np.ndarray) -> np.ndarray:
        return penalty_gradient(self.constraints[agent], w_k, self.penalty)

    def is_quadratic(self) -> bool:
        return all(hasattr(o, "covariance") for o in self.oracles)

    def global_risk_quadratic(self) -> tuple[np.ndarray, np.ndarray]:
        """Hessian H = sum_k lift(2 R_k) and linear term f = sum_k lift(2 R_k w_ref_k)
        of the aggregate risk, so grad J_glob(w) = H w - f."""
        m = self.layout.total_dim
        hess = np.zeros((m, m))
        lin = np.zeros(m)
        for k, o in enumerate(self.oracles):
            gidx = self.cmap.global_indices(k)
            cov2 = 2.0 * o.covariance
            hess[np.ix_(gidx, gidx)] += cov2
            lin[gidx] += cov2 @ o.model
        return hess, lin

    def constraint_system(self) -> tuple[np.ndarray, np.ndarray]:
        """Lifted equality constraints G w = b (one row per constraint)."""
        rows, rhs = [], []
        for k, cons in enumerate(self.constraints):
            gidx = self.cmap.global_indices(k)
            for c in cons:
                if c.kind != "equality":
                    continue
                row = np.zeros(self.layout.total_dim)
                row[gidx] = c.coeffs
                rows.append(row)
                rhs.append(c.offset)
        if not rows:
            return np.zeros((0, self.layout.total_dim)), np.zeros(0)
        return np.vstack(rows), np.asarray(rhs)

    def strong_convexity(self) -> float:
        """Smallest eigenvalue of the assembled global risk Hessian."""
        hess, _ = self.global_risk_quadratic()
        return float(np.linalg.eigvalsh(hess)[0])

    def risk_lipschitz(self) -> float:
        return max(float(np.linalg.eigvalsh(2.0 * o.covariance)[-1]) for o in self.oracles)

    def penalty_lipschitz(self) -> float:
        """Gradient-Lipschitz bound for the affine-constraint penalties."""
        worst = 0.0
        for cons in self.constraints:
            total = sum(2.0 * float(c.coeffs @ c.coeffs) for c in cons if c.coeffs is not None)
            worst = max(worst, total)
        return worst

    def global_risk_gradient(self, w: np.ndarray) -> np.ndarray:
        """Exact aggregate risk gradient at a global vector."""
        grad = np.zeros(self.layout.total_dim)
        for k, o in enumerate(self.oracles):
            gidx = self.cmap.global_indices(k)
            grad[gidx] += o.true_gradient(w[gidx])
        return grad

    def global_penalty_gradient(self, w: np.ndarray) -> np.ndarray:
        """Exact aggregate penalty gradient at a global vector (no eta)."""
        grad = np.zeros(self.layout.total_dim)
        for k, cons in enumerate(self.constraints):
            if not cons:
                continue
            gidx = self.cmap.global_indices(k)
            grad[gidx] += penalty_gradient(cons, w[gidx], self.penalty)
        return grad
