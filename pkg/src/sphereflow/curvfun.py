"""Symmetric curvature functions on the positive cone.

Every function here is normalized so that F(1, ..., 1) = 1 and is homogeneous
of degree one.  Values, gradients and Hessians are exact (up to rounding): they
are assembled from elementary symmetric polynomials of the curvature vector
with one or two entries deleted, never from finite differences.  The finite
difference routine :func:`fd_oracle` exists only as an independent check.

All jets are computed on a leading batch axis, so the flow code can evaluate a
whole grid of curvature vectors at once via :func:`evaluate_batch`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache, partial
from math import comb

import numpy as np

from .errors import DomainError, NumericError

MAX_DIM = 8

# relative band |lambda| <= tol * spectral radius counted as a null eigenvalue
CONCAVITY_TOL = 1e-8


# ----------------------------------------------------------------------------
# curvature vectors and function specs
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureVector:
    """A point of the positive cone; entries are principal curvatures."""

    kappa: np.ndarray

    def __post_init__(self):
        k = np.array(self.kappa, dtype=float).reshape(-1)
        if not 1 <= k.size <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {k.size}")
        if not np.all(np.isfinite(k)) or np.any(k <= 0.0):
            raise DomainError(f"curvature vector {k} is not in the positive cone")
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)

    @property
    def n(self):
        return self.kappa.size


def as_kappa(kappa):
    if isinstance(kappa, CurvatureVector):
        return kappa.kappa
    return CurvatureVector(kappa).kappa


class FunctionSpec:
    """Base class of the curvature function descriptions."""

    def check_dim(self, n):
        pass


@dataclass(frozen=True)
class MeanNormalized(FunctionSpec):
    """H / n."""

    def __str__(self):
        return "mean"


@dataclass(frozen=True)
class SigmaK(FunctionSpec):
    """k-th root of the normalized k-th elementary symmetric polynomial."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"SigmaK needs k >= 2 (use MeanNormalized for k = 1), got {self.k}")

    def check_dim(self, n):
        if not 2 <= self.k <= n:
            raise ValueError(f"SigmaK({self.k}) requires 2 <= k <= n = {n}")

    def __str__(self):
        return f"sigma{self.k}"


@dataclass(frozen=True)
class QuotientQ(FunctionSpec):
    """H_{k+1} / H_k with normalized polynomials."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"QuotientQ needs k >= 1, got {self.k}")

    def check_dim(self, n):
        if not 1 <= self.k <= n - 1:
            raise ValueError(f"QuotientQ({self.k}) requires 1 <= k <= n - 1 = {n - 1}")

    def __str__(self):
        return f"q{self.k}"


@dataclass(frozen=True)
class Inverse(FunctionSpec):
    """The inverse function kappa -> 1 / F(1 / kappa).

    Inverting twice returns the inner spec itself, so nesting depth never
    exceeds one.
    """

    inner: FunctionSpec

    def __new__(cls, inner):
        if isinstance(inner, Inverse):
            return inner.inner
        if not isinstance(inner, FunctionSpec):
            raise TypeError(f"Inverse expects a FunctionSpec, got {type(inner).__name__}")
        return super().__new__(cls)

    def check_dim(self, n):
        self.inner.check_dim(n)

    def __str__(self):
        return f"inv_{self.inner}"


def parse_spec(name, k=None):
    """Build a curvature function from a short name such as ``sigma2``, ``inv_mean`` or ``q1``.

    ``k`` may be given separately (``parse_spec("sigma", k=2)``).
    """
    name = name.strip().lower()
    if name.startswith("inv_"):
        return Inverse(parse_spec(name[4:], k))
    if name in ("mean", "h", "sigma1") or (name == "sigma" and k == 1):
        return MeanNormalized()
    for prefix, cls in (("sigma", SigmaK), ("q", QuotientQ)):
        if name.startswith(prefix):
            rest = name[len(prefix):]
            if rest:
                return cls(int(rest))
            if k is None:
                raise ValueError(f"curvature function {name!r} needs k")
            return cls(int(k))
    raise ValueError(f"unknown curvature function {name!r}")


@dataclass
class EvalResult:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass
class ConcavityVerdict:
    eigenvalues: np.ndarray
    null_multiplicity: int
    is_strictly_concave_at_point: bool
    # |D^2F(kappa) kappa| / (|D^2F| |kappa|); zero by homogeneity
    null_residual: float = 0.0


# ----------------------------------------------------------------------------
# elementary symmetric polynomials
# ----------------------------------------------------------------------------


def _esp(K, k):
    """Unnormalized e_k over the columns of the batch K (shape (m, p))."""
    m, p = K.shape
    if k < 0 or k > p:
        return np.zeros(m)
    if k == 0:
        return np.ones(m)
    E = np.zeros((k + 1, m))
    E[0] = 1.0
    for j in range(p):
        c = K[:, j]
        for i in range(min(j + 1, k), 0, -1):
            E[i] += c * E[i - 1]
    return E[k]


def elem_sym(kappa, k):
    """Normalized elementary symmetric polynomial H_k = e_k / C(n, k)."""
    kap = as_kappa(kappa)
    n = kap.size
    if not 0 <= k <= n:
        raise ValueError(f"k = {k} out of range [0, {n}]")
    return float(_esp(kap[None, :], k)[0]) / comb(n, k)


def elem_sym_deleted(kappa, k, excluded=()):
    """Unnormalized e_k of kappa with the entries in ``excluded`` removed."""
    kap = as_kappa(kappa)
    excluded = tuple(int(i) for i in excluded)
    if len(excluded) > 2:
        raise ValueError("at most two indices may be excluded")
    if len(set(excluded)) != len(excluded) or any(not 0 <= i < kap.size for i in excluded):
        raise ValueError(f"invalid excluded index set {excluded} for n = {kap.size}")
    if k < 0:
        raise ValueError("k must be non-negative")
    rest = np.delete(kap, excluded)
    return float(_esp(rest[None, :], k)[0])


def _sym_jet(K, k, order):
    """Value, gradient and (order 2) Hessian of normalized H_k on a batch."""
    m, n = K.shape
    c = comb(n, k)
    val = _esp(K, k) / c
    grad = np.zeros((m, n))
    if k >= 1:
        for i in range(n):
            grad[:, i] = _esp(np.delete(K, i, axis=1), k - 1) / c
    hess = None
    if order >= 2:
        hess = np.zeros((m, n, n))
        if k >= 2:
            for i in range(n):
                for j in range(i + 1, n):
                    hij = _esp(np.delete(K, (i, j), axis=1), k - 2) / c
                    hess[:, i, j] = hij
                    hess[:, j, i] = hij
    return val, grad, hess


def _axi_sym_jet(n, K, k, order):
    """Jet of normalized H_k at (a, b, ..., b) with b repeated n - 1 times.

    K has columns (a, b); the second gradient column is the partial derivative
    with respect to a single repeated entry.
    """
    a, b = K[:, 0], K[:, 1]
    c = comb(n, k)
    # e_k(a, b x (n-1)) = C(n-1, k) b^k + a C(n-1, k-1) b^(k-1)
    bk1 = b ** (k - 1) if k > 1 else 1.0
    bk2 = b ** (k - 2) if k > 2 else 1.0
    grad = np.empty_like(K)
    grad[:, 0] = comb(n - 1, k - 1) / c * bk1
    grad[:, 1] = comb(n - 2, k - 1) / c * bk1
    if k >= 2:
        grad[:, 1] += comb(n - 2, k - 2) / c * a * bk2
    val = (comb(n - 1, k) * b + comb(n - 1, k - 1) * a) * (bk1 / c)
    return val, grad, None


def _jet(spec, K, order, sym=_sym_jet):
    if isinstance(spec, MeanNormalized):
        return sym(K, 1, order)

    if isinstance(spec, SigmaK):
        k = spec.k
        H, dH, ddH = sym(K, k, order)
        F = H ** (1.0 / k)
        g1 = F / (k * H)
        grad = g1[:, None] * dH
        hess = None
        if order >= 2:
            g2 = (1.0 / k) * (1.0 / k - 1.0) * F / H**2
            hess = g2[:, None, None] * (dH[:, :, None] * dH[:, None, :]) + g1[:, None, None] * ddH
        return F, grad, hess

    if isinstance(spec, QuotientQ):
        A, dA, ddA = sym(K, spec.k + 1, order)
        B, dB, ddB = sym(K, spec.k, order)
        F = A / B
        grad = dA / B[:, None] - (A / B**2)[:, None] * dB
        hess = None
        if order >= 2:
            cross = dA[:, :, None] * dB[:, None, :]
            hess = (
                ddA / B[:, None, None]
                - (cross + cross.transpose(0, 2, 1)) / (B**2)[:, None, None]
                - (A / B**2)[:, None, None] * ddB
                + (2.0 * A / B**3)[:, None, None] * (dB[:, :, None] * dB[:, None, :])
            )
        return F, grad, hess

    if isinstance(spec, Inverse):
        Y = 1.0 / K
        F, dF, ddF = _jet(spec.inner, Y, order, sym)
        G = 1.0 / F
        a = -(Y**2)  # d(1/kappa)/dkappa
        Fa = dF * a
        grad = -(G**2)[:, None] * Fa
        hess = None
        if order >= 2:
            b = 2.0 * Y**3
            hess = (2.0 * G**3)[:, None, None] * (Fa[:, :, None] * Fa[:, None, :])
            hess -= (G**2)[:, None, None] * ddF * (a[:, :, None] * a[:, None, :])
            diag = (G**2)[:, None] * dF * b
            idx = np.arange(K.shape[1])
            hess[:, idx, idx] -= diag
        return G, grad, hess

    raise TypeError(f"unsupported curvature function {spec!r}")


def _check_batch(spec, K):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2:
        raise ValueError("batch must have shape (m, n)")
    n = K.shape[1]
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {n}")
    spec.check_dim(n)
    if not np.all(np.isfinite(K)) or np.any(K <= 0.0):
        bad = np.argwhere(~(K > 0.0))
        raise DomainError(f"curvature batch leaves the positive cone (first bad entry {bad[0].tolist() if bad.size else '?'})")
    return K


def evaluate_batch(spec, K, order=1):
    """Jets of ``spec`` on a batch of curvature vectors ``K`` of shape (m, n).

    Returns ``(values, gradients)`` for ``order=1`` and
    ``(values, gradients, hessians)`` for ``order=2``.
    """
    K = _check_batch(spec, K)
    F, dF, ddF = _jet(spec, K, order)
    if order >= 2:
        return F, dF, ddF
    return F, dF


def evaluate_axisymmetric(spec, kp, ko, n):
    """Value and gradient of ``spec`` at (kp, ko, ..., ko) with ko repeated n - 1 times.

    Returns ``(F, F_p, F_o)`` where F_o is the derivative with respect to one
    of the repeated entries.  Equivalent to :func:`evaluate_batch` on the full
    vectors but avoids the deletion loops.
    """
    if n == 1:
        F, dF = evaluate_batch(spec, kp[:, None])
        return F, dF[:, 0], np.zeros_like(F)
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {n}")
    spec.check_dim(n)
    if not (kp.min() > 0.0 and ko.min() > 0.0):
        raise DomainError("curvature batch leaves the positive cone")
    K = np.empty((kp.size, 2))
    K[:, 0] = kp
    K[:, 1] = ko
    F, dF, _ = _jet(spec, K, 1, partial(_axi_sym_jet, n))
    return F, dF[:, 0], dF[:, 1]


def evaluate(spec, kappa):
    """Exact value, gradient and Hessian of ``spec`` at one point."""
    kap = as_kappa(kappa)
    F, dF, ddF = evaluate_batch(spec, kap[None, :], order=2)
    return EvalResult(float(F[0]), dF[0].copy(), ddF[0].copy())


# ----------------------------------------------------------------------------
# audits of the concavity results
# ----------------------------------------------------------------------------


def check_strict_concavity(spec, kappa, tol=CONCAVITY_TOL):
    if tol <= 0:
        raise ValueError("tol must be positive")
    kap = as_kappa(kappa)
    hess = evaluate(spec, kap).hessian
    try:
        eig = np.linalg.eigvalsh(hess)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    scale = float(np.max(np.abs(eig)))
    band = tol * scale
    null = np.abs(eig) <= band
    mult = int(np.count_nonzero(null))
    strict = mult == 1 and bool(np.all(eig[~null] < -band))
    hnorm = np.linalg.norm(hess, 2)
    resid = 0.0 if hnorm == 0.0 else float(np.linalg.norm(hess @ kap) / (hnorm * np.linalg.norm(kap)))
    return ConcavityVerdict(np.sort(eig), mult, strict, resid)


def check_ineq_371(kappa, k, xi):
    """Residual of the concavity inequality for H_{k+1} in direction ``xi``.

    R = (1 - 1/(k+1)) H^{-1} (DH . xi)^2 - xi^T D^2H xi  with H = H_{k+1}.
    R >= 0 everywhere on the cone and R > 0 unless xi is parallel to kappa.
    """
    kap = as_kappa(kappa)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    n = kap.size
    if xi.size != n:
        raise ValueError("xi must have the dimension of kappa")
    if not np.any(xi):
        raise ValueError("xi must be nonzero")
    if not 1 <= k + 1 <= n:
        raise ValueError(f"need 1 <= k + 1 <= n, got k = {k}, n = {n}")
    H, dH, ddH = _sym_jet(kap[None, :], k + 1, 2)
    H, dH, ddH = H[0], dH[0], ddH[0]
    return float((1.0 - 1.0 / (k + 1)) * (dH @ xi) ** 2 / H - xi @ ddH @ xi)


def check_classK_bound(spec, kappa):
    """Matrix F^{-1} F_i F_j - F_i kappa_j^{-1} delta_ij - F_ij (PSD for class (K))."""
    if not (isinstance(spec, Inverse) and isinstance(spec.inner, (SigmaK, MeanNormalized))):
        raise ValueError(f"the class (K) bound is only asserted for inverses of sigma_k, got {spec}")
    kap = as_kappa(kappa)
    r = evaluate(spec, kap)
    M = np.outer(r.gradient, r.gradient) / r.value - np.diag(r.gradient / kap) - r.hessian
    return 0.5 * (M + M.T)


def pinch_Z(spec, kappa):
    """Z = sum_{i != j} F_i k_i k_j (k_j^2 - k_i k_j) in a diagonal frame."""
    kap = as_kappa(kappa)
    _, dF = evaluate_batch(spec, kap[None, :])
    dF = dF[0]
    w = dF * kap
    M = w[:, None] * kap[None, :] * (kap[None, :] ** 2 - kap[:, None] * kap[None, :])
    return float(M.sum() - np.trace(M))


def _spread(kap):
    d = kap[:, None] - kap[None, :]
    return 0.5 * float(np.sum(d * d))


def pinched_samples(n, eps0, count, seed=0):
    """Curvature vectors with kappa_min >= eps0 * sum(kappa), mixed interior/boundary."""
    if not 0 < eps0 < 1.0 / n:
        raise ValueError(f"eps0 must lie in (0, 1/n), got {eps0}")
    rng = np.random.Generator(np.random.MT19937(seed))
    w = rng.dirichlet(np.ones(n), size=count)
    # a quarter of the set sits on the pinching boundary, a quarter near the umbilic point
    q = count // 4
    w[:q, 0] = 0.0
    w[:q] /= w[:q].sum(axis=1, keepdims=True)
    w[q:2 * q] = 1.0 / n + 1e-3 * (w[q:2 * q] - 1.0 / n)
    scale = rng.uniform(0.1, 10.0, size=count)
    return scale[:, None] * (eps0 + (1.0 - n * eps0) * w)


_calib_lock = threading.Lock()


@lru_cache(maxsize=None)
def _pinch_ratio_min(spec, n, eps0):
    K = pinched_samples(n, eps0, 10_000, seed=12345)
    ratios = []
    for kap in K:
        s = _spread(kap)
        if s <= 1e-14 * float(np.sum(kap)) ** 2:
            continue
        ratios.append(pinch_Z(spec, kap) / (float(np.sum(kap)) ** 2 * s))
    return float(min(ratios))


def pinch_epsilon(spec, n, eps0):
    """Calibrated epsilon^2 for the lower bound of Z on the eps0-pinched set."""
    with _calib_lock:
        rmin = _pinch_ratio_min(spec, n, float(eps0))
    # half the sampled infimum: 2 eps^2 = rmin / 2 leaves room for unsampled points
    return 0.25 * rmin


def check_pinch_Z(spec, kappa, eps0):
    """Return ``(Z, lower_bound)`` with lower_bound = 2 eps^2 H^2 sum_{i<j} (k_i - k_j)^2."""
    kap = as_kappa(kappa)
    H = float(kap.sum())
    if kap.min() < eps0 * H * (1.0 - 1e-12):
        raise DomainError(f"kappa is not eps0-pinched: min {kap.min():.6g} < {eps0} * H = {eps0 * H:.6g}")
    Z = pinch_Z(spec, kap)
    s = _spread(kap)
    if s == 0.0:
        return Z, 0.0
    eps2 = pinch_epsilon(spec, kap.size, eps0)
    return Z, 2.0 * eps2 * H * H * s


# ----------------------------------------------------------------------------
# finite difference oracle
# ----------------------------------------------------------------------------

_D1 = {-2: 1.0 / 12.0, -1: -8.0 / 12.0, 1: 8.0 / 12.0, 2: -1.0 / 12.0}
_D2 = {-2: -1.0 / 12.0, -1: 16.0 / 12.0, 0: -30.0 / 12.0, 1: 16.0 / 12.0, 2: -1.0 / 12.0}


def fd_oracle(spec, kappa, h=1e-3):
    """Fourth-order central differences of the value of ``spec`` only."""
    kap = as_kappa(kappa)
    n = kap.size
    if kap.min() < 2.0 * h:
        raise DomainError(f"need a margin of 2h = {2 * h} from the cone boundary")
    spec.check_dim(n)

    def f(x):
        return float(_jet(spec, x[None, :], 0)[0][0])

    grad = np.zeros(n)
    hess = np.zeros((n, n))
    eye = np.eye(n)
    for i in range(n):
        grad[i] = sum(w * f(kap + a * h * eye[i]) for a, w in _D1.items()) / h
        hess[i, i] = sum(w * f(kap + a * h * eye[i]) for a, w in _D2.items()) / h**2
        for j in range(i + 1, n):
            s = 0.0
            for a, wa in _D1.items():
                for b, wb in _D1.items():
                    s += wa * wb * f(kap + a * h * eye[i] + b * h * eye[j])
            hess[i, j] = hess[j, i] = s / h**2
    return EvalResult(f(kap), grad, hess)
