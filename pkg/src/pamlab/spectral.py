"""Spectral side of the model: mu(kappa), the p-particle operator, and
variational eigenvalue bounds.

The central object is the symmetric operator

    L_p f = kappa * Delta_x f + rho * Delta_y f + I_p f,
    I_p(x, y) = sum_{j<=p, k<=n} delta_0(x_j - y_k),

acting on l^2 of the d(p+n)-dimensional lattice; the p-th annealed Lyapunov
exponent is (1/p) sup of its Rayleigh quotient.  Restricting to a centered
box with zero (Dirichlet) extension restricts the admissible set, so every
box eigenvalue reported here is a certified lower bound of the full
exponent, and the estimates are non-decreasing in the box radius.

mu(kappa) is the top of the spectrum of kappa*Delta + delta_0 on l^2(Z^d):
1 for kappa = 0, the root of the resolvent identity
1 = int_0^inf e^{-mu t} (e^{-2 kappa t} I0(2 kappa t))^d dt for
0 < kappa < G_d(0), and 0 beyond.  Several exact limits of the exponent are
expressed through mu, which is what makes it a useful oracle for the
eigensolver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import greens
from .lattice import (
    Box,
    DimensionMismatchError,
    Field,
    build_box,
    grad_sq_grid,
    lap_grid,
    norms,
)

__all__ = [
    "PamParams",
    "SolverOptions",
    "LyapunovEstimate",
    "ConvergenceError",
    "mu",
    "mu_inverse",
    "apply_generator",
    "top_eigen",
    "lambda_spectral",
    "tensor_gap",
    "TensorGap",
    "check_gn",
    "f0_rayleigh",
    "F0Bound",
]


@dataclass(frozen=True)
class PamParams:
    """One model instance: dimension, catalyst count, moment order, rates."""

    d: int
    n: int
    p: int
    kappa: float
    rho: float

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or self.p < 1:
            raise ValueError(f"d, n, p must be positive integers, got {self}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")

    @property
    def m(self) -> int:
        """Total lattice dimension d*(p+n) of the operator's configuration space."""
        return self.d * (self.p + self.n)

    def swapped(self) -> "PamParams":
        """The symmetry partner (d, p, n, rho, kappa)."""
        return PamParams(d=self.d, n=self.p, p=self.n, kappa=self.rho, rho=self.kappa)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8          # convergence: ||L v - theta v||_2 <= tol
    max_iters: int = 800       # total operator applications allowed
    basis_size: int = 40       # Krylov vectors kept per restart cycle
    dense_cutoff: int = 600    # below this many sites, diagonalize densely


@dataclass(frozen=True)
class LyapunovEstimate:
    """An estimate of lambda_p^{(n)} with provenance.

    kind 'spectral' values are certified lower bounds (Rayleigh quotients on a
    Dirichlet box); error is then the residual-based bound on the distance to
    the box's own top eigenvalue, scaled to the lambda = theta/p axis.
    """

    params: PamParams
    value: float
    kind: str                  # "spectral" | "closed-form" | "monte-carlo"
    error: float
    radius: int | None = None
    converged: bool = True


class ConvergenceError(RuntimeError):
    """Eigensolver ran out of iterations; carries the best iterate found."""

    def __init__(self, message: str, best: LyapunovEstimate, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


# ---------------------------------------------------------------------------
# mu and its inverse
# ---------------------------------------------------------------------------

def _resolvent_minus_one(d: int, kappa: float, m: float, quad_tol: float) -> float:
    # int_0^inf e^{-m t} (e^{-2 kappa t} I0(2 kappa t))^d dt - 1, via u = kappa t.
    # Non-strict: far from the root (tiny m, d <= 2) the integral is huge and
    # only its sign matters; near the root the certification succeeds anyway.
    val, _ = greens._scaled_return_integral(d, m / kappa, 0, quad_tol, strict=False)
    return val / kappa - 1.0


@lru_cache(maxsize=65536)
def _mu_cached(d: int, kappa: float, tol: float) -> float:
    if kappa == 0.0:
        return 1.0
    if d >= 3:
        gz = greens.green_zero(d, min(tol, 1e-10)).value
        if kappa >= gz:
            return 0.0
    quad_tol = min(1e-12, 0.01 * tol)
    lo, hi = 0.5 * tol, 1.0 + 4.0 * d * kappa
    if _resolvent_minus_one(d, kappa, lo, quad_tol) < 0.0:
        return 0.5 * lo  # root below the resolution floor; equivalent to 0 at tol
    root = brentq(lambda m: _resolvent_minus_one(d, kappa, m, quad_tol),
                  lo, hi, xtol=0.5 * tol, rtol=4 * np.finfo(float).eps)
    return float(root)


def mu(d: int, kappa: float, tol: float = 1e-10) -> float:
    """Top of the spectrum of kappa*Delta + delta_0 on l^2(Z^d).

    Exactly 1 at kappa = 0; exactly 0 for kappa >= G_d(0) (d >= 3); otherwise
    the unique positive root of the diagonal resolvent identity, found by
    bracketed root-finding over [tol/2, 1 + 4 d kappa] on certified quadrature
    values.  Continuous, non-increasing and convex in kappa.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not (math.isfinite(kappa) and kappa >= 0):
        raise ValueError(f"kappa must be finite and >= 0, got {kappa}")
    return _mu_cached(d, float(kappa), float(tol))


@lru_cache(maxsize=8192)
def _mu_inverse_cached(d: int, t: float, tol: float) -> float:
    if t >= 1.0:
        return 0.0
    if d >= 3:
        hi = greens.green_zero(d, min(tol, 1e-10)).value
    else:
        if t == 0.0:
            raise ValueError(
                f"mu_inverse(d={d}, 0) diverges: G_d(0) is infinite for d <= 2")
        hi = 1.0
        while mu(d, hi, tol) > t:
            hi *= 2.0
    if t == 0.0:
        return hi
    mu_tol = min(tol, 1e-10, 0.01 * t)
    f = lambda k: mu(d, k, mu_tol) - t
    if f(hi) > 0.0:
        return hi
    root = brentq(f, 0.0, hi, xtol=0.5 * tol, rtol=4 * np.finfo(float).eps)
    return float(root)


def mu_inverse(d: int, t: float, tol: float = 1e-10) -> float:
    """Inverse of kappa -> mu(d, kappa), extended by 0 for t > 1.

    For t in [0, 1] returns the unique kappa in [0, G_d(0)] with
    mu(d, kappa) = t (d >= 3); mu_inverse(d, 0) diverges for d <= 2.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not (math.isfinite(t) and t >= 0):
        raise ValueError(f"t must be finite and >= 0, got {t}")
    return _mu_inverse_cached(d, float(t), float(tol))


# ---------------------------------------------------------------------------
# the operator L_p on a box
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _collision_counts(d: int, n: int, p: int, radius: int) -> np.ndarray:
    """I_p as a flat vector over the box: number of (j,k) with x_j = y_k."""
    m = d * (p + n)
    L = 2 * radius + 1
    coords = np.arange(-radius, radius + 1)
    counts = np.zeros((L,) * m, dtype=np.float64)
    for j in range(p):
        for k in range(n):
            eq = np.bool_(True)
            for i in range(d):
                ax_x = j * d + i
                ax_y = (p + k) * d + i
                shape_x = [1] * m
                shape_x[ax_x] = L
                shape_y = [1] * m
                shape_y[ax_y] = L
                eq = eq & (coords.reshape(shape_x) == coords.reshape(shape_y))
            counts += eq
    out = counts.reshape(-1, order="F")
    out.flags.writeable = False
    return out


def _axis_groups(params: PamParams) -> tuple[tuple[int, ...], tuple[int, ...]]:
    d, n, p = params.d, params.n, params.p
    x_axes = tuple(range(d * p))            # 0-based
    y_axes = tuple(range(d * p, d * (p + n)))
    return x_axes, y_axes


def apply_generator(params: PamParams, f: Field) -> Field:
    """L_p f = kappa*Delta_x f + rho*Delta_y f + I_p f on f's box (Dirichlet)."""
    if f.box.m != params.m:
        raise DimensionMismatchError(
            f"field lives on an m={f.box.m} box, operator needs m=d(p+n)={params.m}")
    out = _apply_flat(params, f.box, f.values)
    return Field(f.box, out)


def _apply_flat(params: PamParams, box: Box, v: np.ndarray,
                shift: float = 0.0) -> np.ndarray:
    ip = _collision_counts(params.d, params.n, params.p, box.radius)
    out = (ip + shift) * v if shift else ip * v
    x_axes, y_axes = _axis_groups(params)
    g = v.reshape(box.shape, order="F")
    if params.kappa:
        out += params.kappa * lap_grid(g, x_axes).reshape(-1, order="F")
    if params.rho:
        out += params.rho * lap_grid(g, y_axes).reshape(-1, order="F")
    return out


# ---------------------------------------------------------------------------
# top eigenpair
# ---------------------------------------------------------------------------

def _start_vector(box: Box) -> np.ndarray:
    v = np.full(box.size, 1e-3)
    v[(box.size - 1) // 2] += 1.0  # the all-zero configuration is the center index
    return v / np.linalg.norm(v)


def _dense_top(params: PamParams, box: Box, shift: float) -> tuple[float, np.ndarray, float]:
    size = box.size
    A = np.empty((size, size))
    e = np.zeros(size)
    for i in range(size):
        e[i] = 1.0
        A[:, i] = _apply_flat(params, box, e, shift)
        e[i] = 0.0
    w, V = np.linalg.eigh(A)
    theta = float(w[-1])
    vec = V[:, -1]
    res = float(np.linalg.norm(_apply_flat(params, box, vec, shift) - theta * vec))
    return theta, vec, res


def _restarted_lanczos(params: PamParams, box: Box, shift: float,
                       opts: SolverOptions, v0: np.ndarray,
                       budget: int) -> tuple[float, np.ndarray, float, bool]:
    """Lanczos with full reorthogonalization, restarting from the top Ritz vector.

    Memory is bounded by basis_size stored vectors.  Returns
    (theta, vector, residual, converged); theta includes the shift.  The Ritz
    value is a Rayleigh quotient, so even an unconverged iterate respects the
    lower-bound semantics.
    """
    v = v0 / np.linalg.norm(v0)
    matvecs = 0
    theta, u, res = -np.inf, v, np.inf
    while matvecs < budget:
        V = [v]
        alphas: list[float] = []
        betas: list[float] = []
        broke_down = False
        while len(alphas) < opts.basis_size and matvecs < budget:
            w = _apply_flat(params, box, V[-1], shift)
            matvecs += 1
            a = float(np.dot(V[-1], w))
            alphas.append(a)
            w -= a * V[-1]
            if betas:
                w -= betas[-1] * V[-2]
            for q in V:  # full reorthogonalization
                w -= np.dot(q, w) * q
            b = float(np.linalg.norm(w))
            if b < 1e-13 * (1.0 + abs(a)):
                broke_down = True
                break
            betas.append(b)
            V.append(w / b)
        k = len(alphas)
        evals, evecs = eigh_tridiagonal(np.array(alphas), np.array(betas[: k - 1]),
                                        select="i", select_range=(k - 1, k - 1))
        theta = float(evals[0])
        y = evecs[:, 0]
        u = sum(y[i] * V[i] for i in range(k))
        u /= np.linalg.norm(u)
        res = float(np.linalg.norm(_apply_flat(params, box, u, shift) - theta * u))
        matvecs += 1
        if res <= opts.tol:
            return theta, u, res, True
        if broke_down:
            # invariant subspace without convergence: deterministically perturb
            rng = np.random.Generator(np.random.Philox(key=np.uint64(matvecs)))
            u = u + 1e-8 * rng.standard_normal(u.size)
            u /= np.linalg.norm(u)
        v = u
    return theta, u, res, False


def _krylov_top(params: PamParams, box: Box, shift: float,
                opts: SolverOptions) -> tuple[float, np.ndarray, float, bool]:
    """Implicitly-restarted Lanczos (ARPACK) plus explicit residual certification.

    ARPACK's stopping rule is relative and internal; convergence here is
    declared only from our own residual ||L v - theta v|| <= opts.tol.  If
    ARPACK stalls, a restarted full-reorthogonalization Lanczos polishes its
    best iterate within the remaining matvec budget.
    """
    mv_count = 0

    def matvec(x):
        nonlocal mv_count
        mv_count += 1
        return _apply_flat(params, box, np.asarray(x, dtype=np.float64).ravel(), shift)

    A = LinearOperator((box.size, box.size), matvec=matvec, dtype=np.float64)
    v0 = _start_vector(box)
    ncv = min(opts.basis_size, box.size - 1)
    scale = shift + params.n * params.p + 1.0
    theta, u = None, None
    try:
        w, V = eigsh(A, k=1, which="LA", v0=v0, ncv=ncv,
                     maxiter=max(4, opts.max_iters // ncv),
                     tol=0.1 * opts.tol / scale)
        theta, u = float(w[0]), V[:, 0]
    except ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            theta, u = float(exc.eigenvalues[0]), exc.eigenvectors[:, 0]
    if u is None:
        return _restarted_lanczos(params, box, shift, opts, v0, opts.max_iters)
    res = float(np.linalg.norm(_apply_flat(params, box, u, shift) - theta * u))
    if res <= opts.tol:
        return theta, u, res, True
    remaining = max(opts.max_iters - mv_count, 2 * opts.basis_size)
    return _restarted_lanczos(params, box, shift, opts, u, remaining)


def top_eigen(params: PamParams, R: int, opts: SolverOptions | None = None
              ) -> LyapunovEstimate:
    """(1/p) * top Dirichlet eigenvalue of L_p on the radius-R box.

    A certified lower bound of lambda_p^{(n)}; raises ConvergenceError (with
    the best iterate attached) if the residual target is not met.
    """
    est, _ = _top_eigen_vec(params, R, opts)
    return est


def _top_eigen_vec(params: PamParams, R: int, opts: SolverOptions | None = None
                   ) -> tuple[LyapunovEstimate, np.ndarray]:
    opts = opts or SolverOptions()
    box = build_box(params.m, R)
    shift = 4.0 * params.d * (params.p * params.kappa + params.n * params.rho)
    if box.size <= opts.dense_cutoff:
        theta, vec, res = _dense_top(params, box, shift)
        converged = True
    else:
        theta, vec, res, converged = _krylov_top(params, box, shift, opts)
    value = (theta - shift) / params.p
    est = LyapunovEstimate(params=params, value=value, kind="spectral",
                           error=res / params.p, radius=R, converged=converged)
    if not converged:
        raise ConvergenceError(
            f"eigensolver did not reach residual {opts.tol:g} within "
            f"{opts.max_iters} operator applications (best value {value:.12g}, "
            f"residual {res:.3g})", best=est, residual=res)
    return est, vec


def lambda_spectral(params: PamParams, radii: Sequence[int],
                    opts: SolverOptions | None = None) -> list[LyapunovEstimate]:
    """Box estimates over strictly increasing radii.

    Values are non-decreasing in R (nested admissible sets) and each is a
    certified lower bound; the final entry's ``converged`` flag records
    whether the last increment fell below the solver tolerance.
    """
    radii = list(radii)
    if not radii:
        raise ValueError("radii must be nonempty")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"radii must be strictly increasing, got {radii}")
    opts = opts or SolverOptions()
    out = [top_eigen(params, R, opts) for R in radii]
    if len(out) >= 2:
        settled = abs(out[-1].value - out[-2].value) < opts.tol
        out[-1] = replace(out[-1], converged=settled)
    return out


# ---------------------------------------------------------------------------
# tensor-product second moment bound
# ---------------------------------------------------------------------------

class TensorGap(NamedTuple):
    lambda1: float
    gap: float
    rayleigh2: float


def tensor_gap(params: PamParams, R: int, opts: SolverOptions | None = None) -> TensorGap:
    """Lower-bound the p=2 exponent from the p=1 eigenfunction f.

    Builds f~(x1,x2,y) = f(x1,y) f(x2,y) and evaluates its p=2 Rayleigh
    quotient two ways: directly through apply_generator, and through the
    identity rayleigh2 = lambda1 + gap with

        gap = (rho/2) sum_{y, z~y} (sum_x f(x,y)(f(x,z) - f(x,y)))^2 / |f~|_2^2,

    which holds exactly for an exact box eigenfunction (completing the square
    in the y-Laplacian cross term).  Certifies lambda_2 >= lambda_1 + gap on
    the box.  Requires p = 1.
    """
    if params.p != 1:
        raise ValueError(f"tensor_gap needs p=1 parameters, got p={params.p}")
    opts = opts or SolverOptions(tol=1e-10)
    est, vec = _top_eigen_vec(params, R, opts)
    d, n = params.d, params.n
    L = 2 * R + 1
    A = L ** d          # x-block size
    Y = L ** (d * n)    # y-block size
    M = vec.reshape((A, Y), order="F")

    gram = M.T @ M                       # gram[y, z] = sum_x f(x,y) f(x,z)
    diag = np.ascontiguousarray(np.diag(gram))
    norm_sq = float(np.dot(diag, diag))  # |f~|_2^2 = sum_y N(y)^2
    if norm_sq <= 0.0 or not np.isfinite(norm_sq):
        raise ValueError("degenerate eigenvector: |f~|_2 = 0")

    codes = np.arange(Y).reshape((L,) * (d * n), order="F")
    total = 0.0
    for ax in range(d * n):
        sel = [slice(None)] * (d * n)
        sel[ax] = slice(0, L - 1)
        lo = codes[tuple(sel)].reshape(-1)
        sel[ax] = slice(1, L)
        hi = codes[tuple(sel)].reshape(-1)
        for a, b in ((lo, hi), (hi, lo)):     # ordered pairs (y, z = y +- e)
            s = gram[a, b] - diag[a]
            total += float(np.dot(s, s))
        for edge in (0, L - 1):               # z outside the box: C(y,z) = 0
            sel[ax] = edge
            face = diag[codes[tuple(sel)].reshape(-1)]
            total += float(np.dot(face, face))
    gap = 0.5 * params.rho * total / norm_sq

    # independent route: materialize f~ and apply the p=2 operator
    f2 = np.einsum("ay,by->aby", M, M).reshape(-1, order="F")
    params2 = PamParams(d=d, n=n, p=2, kappa=params.kappa, rho=params.rho)
    box2 = build_box(params2.m, R)
    lf2 = _apply_flat(params2, box2, f2)
    rayleigh2 = float(np.dot(f2, lf2)) / (2.0 * norm_sq)

    lam1 = est.value
    scale = 1.0 + abs(lam1) + gap
    slack = 100.0 * est.error + 1e-11 * scale
    if abs(rayleigh2 - (lam1 + gap)) > slack:
        raise ArithmeticError(
            f"tensor identity violated: rayleigh2={rayleigh2!r} vs "
            f"lambda1+gap={lam1 + gap!r} (allowed {slack:.3g})")
    return TensorGap(lambda1=lam1, gap=gap, rayleigh2=rayleigh2)


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg checks (d = 1, 2)
# ---------------------------------------------------------------------------

def check_gn(f: Field, d: int) -> tuple[float, float, bool]:
    """Discrete Gagliardo-Nirenberg inequality with constant 2.

    d=1:  |f|_inf^2 <= 2 |f|_2 |grad f|_2;  d=2:  |f|_4^2 <= 2 |f|_2 |grad f|_2.
    Returns (lhs, rhs, lhs <= rhs).
    """
    if d not in (1, 2):
        raise ValueError(f"inequality implemented for d in {{1,2}}, got d={d}")
    if f.box.m != d:
        raise DimensionMismatchError(
            f"field lives on an m={f.box.m} box, expected m=d={d}")
    l2, l4, linf = norms(f)
    grad = math.sqrt(grad_sq_norm_all(f))
    lhs = linf ** 2 if d == 1 else l4 ** 2
    rhs = 2.0 * l2 * grad
    return lhs, rhs, lhs <= rhs


def grad_sq_norm_all(f: Field) -> float:
    return grad_sq_grid(f.grid(), range(f.box.m))


# ---------------------------------------------------------------------------
# explicit test function f0 for the critical-kappa lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class F0Bound:
    """Rayleigh-type ratio of the product test function f0 on a box.

    f0(x, y) = prod_j g(x_j) * prod_k delta_0(y_k) with g the box-truncated,
    box-normalized Green function.  value = (ip_mass - rho*grad_y_sq)/grad_x_sq
    lower-bounds the critical kappa; the three constituents converge to
    n p G_d(0)^2/|G_d|_2^2,  2 d n,  and  p G_d(0)/|G_d|_2^2.
    """

    d: int
    n: int
    p: int
    rho: float
    radius: int
    value: float
    ip_mass: float
    grad_y_sq: float
    grad_x_sq: float

    def __float__(self) -> float:
        return self.value


def f0_rayleigh(d: int, n: int, p: int, rho: float, R: int,
                tol: float = 1e-9) -> F0Bound:
    """Evaluate the critical-kappa lower-bound functional of f0 on a box.

    As R grows the value tends to n G_d(0) - rho n/(p alpha_d); requires
    d >= 5 so that |G_d|_2 is finite.
    """
    if d <= 4:
        raise ValueError(f"f0 bound needs |G_d|_2 < inf, i.e. d >= 5; got d={d}")
    if n < 1 or p < 1 or rho < 0 or R < 0:
        raise ValueError(f"bad parameters n={n}, p={p}, rho={rho}, R={R}")
    g = greens.green_box_values(d, R, tol)
    flat = g.reshape(-1)
    s2 = float(np.dot(flat, flat))
    center = float(g[(R,) * d])
    g0_sq = center * center / s2                  # normalized g(0)^2
    grad = grad_sq_grid(g, range(d)) / s2         # normalized |grad g|_2^2
    del flat
    ip_mass = n * p * g0_sq       # sum I_p f0^2 over the product box
    grad_y_sq = 2.0 * d * n       # exact: delta_0 factors, zero-extended
    grad_x_sq = p * grad
    value = (ip_mass - rho * grad_y_sq) / grad_x_sq
    return F0Bound(d=d, n=n, p=p, rho=rho, radius=R, value=value,
                   ip_mass=ip_mass, grad_y_sq=grad_y_sq, grad_x_sq=grad_x_sq)
