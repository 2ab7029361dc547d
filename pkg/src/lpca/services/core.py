from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import expit, logit, xlogy

ORTHONORMAL_TOL = 1e-8


# =============================================================================
# Errors
# =============================================================================


class LpcaError(Exception):
    """Base class for everything the services raise on purpose."""


class InputError(LpcaError, ValueError):
    """Bad shapes, non-binary entries, invalid configuration, violated preconditions."""


class NumericalError(LpcaError, RuntimeError):
    """Eigen/SVD failure or a non-finite intermediate."""


# =============================================================================
# Data validation
# =============================================================================


def validate_binary(X, *, name: str = "X") -> np.ndarray:
    """
    Return X as a float64 (n, d) array with entries in {0, 1}.

    - n >= 1 and d >= 1
    - the first offending cell is named in the error message
    """
    arr = validate_real(X, name=name)
    bad = ~((arr == 0.0) | (arr == 1.0))
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise InputError(f"{name} must be binary; row {i}, column {j} holds {arr[i, j]!r}")
    return arr


def validate_real(X, *, name: str = "X") -> np.ndarray:
    try:
        arr = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} is not numeric: {exc}") from exc
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-D matrix, got {arr.ndim} dimension(s)")
    n, d = arr.shape
    if n < 1 or d < 1:
        raise InputError(f"{name} must have at least one row and one column, got {n}x{d}")
    if not np.isfinite(arr).all():
        i, j = (int(v) for v in np.argwhere(~np.isfinite(arr))[0])
        raise InputError(f"{name} has a non-finite entry at row {i}, column {j}")
    return arr


def to_q(X) -> np.ndarray:
    """Map {0,1} to {-1,+1}."""
    return 2.0 * validate_binary(X) - 1.0


# =============================================================================
# Families
# =============================================================================


@dataclass(frozen=True)
class Family:
    """
    One exponential family with its canonical link.

    - ``curvature_bound``: global bound on b''(θ), or None when unbounded
    - ``saturated``: natural parameter of each datum, finite approximation m
    """

    tag: str
    mean: Callable[[np.ndarray], np.ndarray]
    link: Callable[[np.ndarray], np.ndarray]
    saturated: Callable[[np.ndarray, float], np.ndarray]
    deviance: Callable[[np.ndarray, np.ndarray], float]
    curvature_bound: Optional[float]

    def __str__(self) -> str:
        return self.tag


def _bernoulli_deviance(X: np.ndarray, theta: np.ndarray) -> float:
    # -2xθ + 2log(1+e^θ) == 2log(1+e^{-qθ}) for x in {0,1}
    q = 2.0 * X - 1.0
    return float(2.0 * np.logaddexp(0.0, -q * theta).sum())


def _gaussian_deviance(X: np.ndarray, theta: np.ndarray) -> float:
    return float(np.square(X - theta).sum())


def _poisson_deviance(X: np.ndarray, theta: np.ndarray) -> float:
    if (X < 0).any():
        i, j = (int(v) for v in np.argwhere(X < 0)[0])
        raise InputError(f"Poisson data must be non-negative; row {i}, column {j} holds {X[i, j]!r}")
    return float(2.0 * (xlogy(X, X) - X * theta - X + np.exp(theta)).sum())


def _poisson_saturated(X: np.ndarray, m: float) -> np.ndarray:
    out = np.full(X.shape, -float(m))
    pos = X > 0
    out[pos] = np.log(X[pos])
    return out


BERNOULLI = Family(
    tag="bernoulli",
    mean=expit,
    link=logit,
    saturated=lambda X, m: m * (2.0 * X - 1.0),
    deviance=_bernoulli_deviance,
    curvature_bound=0.25,
)

GAUSSIAN = Family(
    tag="gaussian",
    mean=lambda t: np.asarray(t, dtype=np.float64),
    link=lambda mu: np.asarray(mu, dtype=np.float64),
    saturated=lambda X, m: np.array(X, dtype=np.float64),
    deviance=_gaussian_deviance,
    curvature_bound=1.0,
)

POISSON = Family(
    tag="poisson",
    mean=np.exp,
    link=np.log,
    saturated=_poisson_saturated,
    deviance=_poisson_deviance,
    curvature_bound=None,
)

FAMILIES: dict[str, Family] = {f.tag: f for f in (BERNOULLI, GAUSSIAN, POISSON)}


def family_for(tag: Union[str, Family]) -> Family:
    if isinstance(tag, Family):
        return tag
    try:
        return FAMILIES[str(tag).strip().lower()]
    except KeyError:
        raise InputError(f"unknown family {tag!r}; expected one of {sorted(FAMILIES)}") from None


# =============================================================================
# Deviances and parameters
# =============================================================================


def bernoulli_deviance(X, theta) -> float:
    X = validate_binary(X)
    theta = _same_shape(X, theta, "Θ")
    return _bernoulli_deviance(X, theta)


def family_deviance(X, theta, family: Union[str, Family, Sequence[Union[str, Family]]]) -> float:
    """
    Deviance under one family, or one family per column (summed).

    Bernoulli data are checked for binarity; Poisson data for non-negativity.
    """
    X = validate_real(X)
    theta = _same_shape(X, theta, "Θ")
    if isinstance(family, (str, Family)):
        families = [family_for(family)] * X.shape[1]
    else:
        families = [family_for(f) for f in family]
        if len(families) != X.shape[1]:
            raise InputError(f"got {len(families)} column families for {X.shape[1]} columns")

    total = 0.0
    for tag in dict.fromkeys(f.tag for f in families):
        cols = [j for j, f in enumerate(families) if f.tag == tag]
        fam = FAMILIES[tag]
        Xs = X[:, cols]
        if fam is BERNOULLI:
            Xs = validate_binary(Xs)
        total += fam.deviance(Xs, theta[:, cols])
    return total


def fitted_probabilities(theta) -> np.ndarray:
    return expit(np.asarray(theta, dtype=np.float64))


def saturated_params(X, m: float, family: Union[str, Family] = BERNOULLI) -> np.ndarray:
    fam = family_for(family)
    X = validate_binary(X) if fam is BERNOULLI else validate_real(X)
    if not m > 0:
        raise InputError(f"m must be > 0, got {m!r}")
    return fam.saturated(X, float(m))


def main_effects(X, m: float, family: Union[str, Family] = BERNOULLI) -> np.ndarray:
    """Column-wise link of the mean, clamped to [-m, m]."""
    fam = family_for(family)
    X = validate_binary(X) if fam is BERNOULLI else validate_real(X)
    means = X.mean(axis=0)
    with np.errstate(divide="ignore"):
        mu = fam.link(means)
    if fam is GAUSSIAN:
        return np.asarray(mu, dtype=np.float64)
    return np.clip(mu, -float(m), float(m))


def assemble_theta(saturated, mu, U) -> np.ndarray:
    """Θ = 1μᵀ + (Θ~ − 1μᵀ)UUᵀ."""
    S = np.asarray(saturated, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    U = check_orthonormal(U, d=S.shape[1])
    if mu.shape[0] != S.shape[1]:
        raise InputError(f"μ has length {mu.shape[0]}, expected {S.shape[1]}")
    return mu + ((S - mu) @ U) @ U.T


def check_orthonormal(U, *, d: Optional[int] = None, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] < 1:
        raise InputError(f"U must be a d x k matrix with k >= 1, got shape {U.shape}")
    if d is not None and U.shape[0] != d:
        raise InputError(f"U has {U.shape[0]} rows, expected {d}")
    gap = np.abs(U.T @ U - np.eye(U.shape[1])).max()
    if gap > tol:
        raise InputError(f"U is not orthonormal (max |UᵀU − I| = {gap:.3g})")
    return U


def _same_shape(X: np.ndarray, theta, name: str) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != X.shape:
        raise InputError(f"{name} has shape {theta.shape}, expected {X.shape}")
    if not np.isfinite(theta).all():
        raise NumericalError(f"{name} has non-finite entries")
    return theta


# =============================================================================
# Linear algebra helpers
# =============================================================================


def column_signs(U: np.ndarray) -> np.ndarray:
    """+1 or -1 per column: the sign of its largest-magnitude entry (first index on ties)."""
    U = np.asarray(U, dtype=np.float64)
    lead = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[lead, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def sign_convention(U: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    U = np.array(U, dtype=np.float64)
    return U * column_signs(U)


def top_eigenvectors(S: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Leading k eigenpairs of a symmetric matrix, eigenvalues descending.

    Exact ties are ordered by the index of each vector's largest-magnitude entry.
    """
    S = np.asarray(S, dtype=np.float64)
    if not np.isfinite(S).all():
        raise NumericalError("matrix passed to the eigensolver has non-finite entries")
    S = 0.5 * (S + S.T)
    try:
        vals, vecs = linalg.eigh(S)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    vecs = sign_convention(vecs)
    lead = np.argmax(np.abs(vecs), axis=0)
    order = np.lexsort((lead, -vals))[:k]
    return vals[order], vecs[:, order]


def top_right_singular_vectors(M: np.ndarray, k: int) -> np.ndarray:
    try:
        _, _, vt = linalg.svd(np.asarray(M, dtype=np.float64), full_matrices=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    V = vt[:k].T
    if V.shape[1] < k:
        # fewer rows than k: complete the frame orthogonally
        V = _complete_frame(V, k)
    return sign_convention(V)


def random_frame(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x k orthonormal frame."""
    G = rng.standard_normal((d, k))
    Q, R = np.linalg.qr(G)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def _complete_frame(V: np.ndarray, k: int) -> np.ndarray:
    d = V.shape[0]
    P = np.eye(d) - V @ V.T
    extra = top_eigenvectors(P, k - V.shape[1])[1]
    return np.hstack([V, extra])


# =============================================================================
# Configuration
# =============================================================================


class InitMethod(str, Enum):
    SVD = "svd"
    RANDOM = "random"
    PROVIDED = "provided"


@dataclass(frozen=True)
class FitConfig:
    k: float
    m: float
    max_iter: int = 1000
    tol: float = 1e-5
    seed: int = 0
    init: InitMethod = InitMethod.SVD
    include_mu: bool = True
    family: str = "bernoulli"
    line_search: bool = False
    initial_U: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def validate(self, d: int, *, fractional_k: bool = False) -> "FitConfig":
        if fractional_k:
            if not (0 < self.k <= d):
                raise InputError(f"k must lie in (0, {d}], got {self.k!r}")
        elif not (float(self.k).is_integer() and 1 <= self.k <= d):
            raise InputError(f"k must be an integer in [1, {d}], got {self.k!r}")
        if not (self.m > 0 and np.isfinite(self.m)):
            raise InputError(f"m must be a finite value > 0, got {self.m!r}")
        if int(self.max_iter) < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not self.tol > 0:
            raise InputError(f"tol must be > 0, got {self.tol!r}")
        try:
            init = InitMethod(self.init)
        except ValueError:
            raise InputError(f"unknown init {self.init!r}; expected one of {[i.value for i in InitMethod]}") from None
        if init is InitMethod.PROVIDED:
            if self.initial_U is None:
                raise InputError("init='provided' requires initial_U")
            check_orthonormal(self.initial_U, d=d)
            if self.initial_U.shape[1] != int(np.ceil(self.k)):
                raise InputError(f"initial_U has {self.initial_U.shape[1]} columns, expected {int(np.ceil(self.k))}")
        family_for(self.family)
        return replace(self, init=init)

    @property
    def k_int(self) -> int:
        return int(round(self.k))
