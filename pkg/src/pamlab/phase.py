"""Critical-kappa bounds and certified intermittency classification.

For d >= 3 the p-th annealed exponent vanishes above a critical kappa_p(rho),
bracketed by

    lower: max( n/(4d) * mu(rho/p),  n * mu^{-1}(4 d rho / p),
                [d >= 5]  (n G_d(0) - rho n/(p alpha_d))_+ )
    upper: (n G_d(0) - n rho / p)_+

Both ends pinch to n*G_d(0) at rho = 0.  Since kappa_p is non-decreasing in
p, a gap between the p-1 upper bound and the p lower bound certifies a window
of kappa where lambda_{p-1} = 0 < lambda_p, i.e. genuine p-intermittency;
`classify` searches for the smallest such p.  Certification discipline: upper
bounds (which prove exponents vanish) and lower bounds (which prove they
don't) come from different inequalities and are never mixed; the d >= 5
lower bound is only trusted for moment order q when alpha_d > (q-1)/q.

`sweep` evaluates a (kappa, rho, p) grid into a CSV with one row per point,
with per-row failure isolation and an on-disk cursor for restarts.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from . import greens
from .spectral import ConvergenceError, PamParams, SolverOptions, lambda_spectral, mu, mu_inverse

__all__ = [
    "KappaBounds",
    "Regime",
    "PhaseRow",
    "kappa_bounds",
    "classify",
    "sweep",
    "PHASE_CSV_HEADER",
]

_TOL = 1e-10  # internal tolerance for mu / Green evaluations


@dataclass(frozen=True)
class KappaBounds:
    d: int
    n: int
    p: int
    rho: float
    lower: float
    upper: float

    def __post_init__(self):
        if math.isfinite(self.lower) and self.lower > self.upper + 1e-9 * (1.0 + self.upper):
            raise RuntimeError(
                f"bound inversion (lower {self.lower} > upper {self.upper}): "
                f"this is a bug, the two are theorem-ordered")


@dataclass(frozen=True)
class Regime:
    """Classification outcome; q is set only for CertifiedQIntermittent."""

    label: str
    justification: str
    q: int | None = None

    def __str__(self) -> str:
        return self.label if self.q is None else f"{self.label}({self.q})"


def _lower_parts(d: int, n: int, p: int, rho: float) -> tuple[float, float, float | None]:
    l1 = n / (4.0 * d) * mu(d, rho / p, _TOL)
    l2 = n * mu_inverse(d, 4.0 * d * rho / p, _TOL)
    l3 = None
    if d >= 5:
        gz = greens.green_zero(d, _TOL).value
        a = greens.alpha(d, _TOL).value
        l3 = max(0.0, n * gz - rho * n / (p * a))
    return l1, l2, l3


def kappa_bounds(d: int, n: int, p: int, rho: float,
                 allow_infinite: bool = False) -> KappaBounds:
    """Certified bracket for the critical kappa of the p-th exponent.

    d <= 2 has no finite critical kappa; that is an error unless the caller
    opts in to an infinite-valued bracket via allow_infinite.
    """
    if n < 1 or p < 1:
        raise ValueError(f"n and p must be positive, got n={n}, p={p}")
    if not (math.isfinite(rho) and rho >= 0):
        raise ValueError(f"rho must be finite and >= 0, got {rho}")
    if d <= 2:
        if not allow_infinite:
            raise ValueError(
                f"critical kappa is infinite for d={d} <= 2 "
                f"(pass allow_infinite=True for an inf-valued bracket)")
        return KappaBounds(d=d, n=n, p=p, rho=rho, lower=math.inf, upper=math.inf)
    gz = greens.green_zero(d, _TOL).value
    l1, l2, l3 = _lower_parts(d, n, p, rho)
    lower = max(l1, l2) if l3 is None else max(l1, l2, l3)
    upper = max(0.0, n * gz - n * rho / p)
    return KappaBounds(d=d, n=n, p=p, rho=rho, lower=lower, upper=upper)


_MAX_CERTIFIED_Q = 8


def classify(d: int, n: int, kappa: float, rho: float) -> Regime:
    """Intermittency regime of the (d, n, kappa, rho) system.

    Labels: NotIntermittent (kappa past n*G_d(0), all exponents vanish),
    CertifiedQIntermittent(q) (a bound window proves lambda_{q-1} = 0 <
    lambda_q), PartialIntermittent (everything else that is provable, and all
    of d <= 2), Unresolved (numerical failure).
    """
    if d < 1 or n < 1:
        raise ValueError(f"d and n must be positive, got d={d}, n={n}")
    if kappa < 0 or rho < 0:
        raise ValueError(f"rates must be >= 0, got kappa={kappa}, rho={rho}")
    if d <= 2:
        return Regime(
            label="PartialIntermittent",
            justification=(
                "d <= 2: the walk is recurrent-dominated and some finite moment "
                "order is always intermittent; full intermittency is conjectured, "
                "not asserted"))
    try:
        gz = greens.green_zero(d, _TOL).value
        if kappa >= n * gz:
            return Regime(
                label="NotIntermittent",
                justification=(
                    f"kappa >= n*G_d(0) = {n * gz!r}: "
                    f"all annealed exponents vanish"))
        alpha_d = greens.alpha(d, _TOL).value if d >= 5 else 0.0
        for q in range(2, _MAX_CERTIFIED_Q + 1):
            upper_prev = kappa_bounds(d, n, q - 1, rho).upper
            l1, l2, l3 = _lower_parts(d, n, q, rho)
            lower_q = max(l1, l2)
            if l3 is not None and alpha_d > (q - 1) / q:
                lower_q = max(lower_q, l3)
            if upper_prev <= kappa < lower_q:
                return Regime(
                    label="CertifiedQIntermittent",
                    q=q,
                    justification=(
                        f"bound window: kappa_bounds(p={q - 1}).upper = "
                        f"{upper_prev!r} <= kappa < {lower_q!r} = "
                        f"kappa_bounds(p={q}).lower, so lambda_{q - 1} = 0 < "
                        f"lambda_{q}"),
                )
        return Regime(
            label="PartialIntermittent",
            justification=(
                "kappa < n*G_d(0): lambda_1 > 0, but no bound window certifies "
                "a moment separation at this point (conjectured regions are "
                "not asserted)"))
    except (ValueError, ArithmeticError) as exc:
        return Regime(label="Unresolved", justification=f"numerical failure: {exc}")


# ---------------------------------------------------------------------------
# grid sweeps
# ---------------------------------------------------------------------------

PHASE_CSV_HEADER = ("d", "n", "p", "kappa", "rho", "lambda_est", "lambda_kind",
                    "kappa_lower", "kappa_upper", "regime", "justification")


@dataclass(frozen=True)
class PhaseRow:
    d: int
    n: int
    p: int
    kappa: float
    rho: float
    lambda_est: float | None
    lambda_kind: str
    kappa_lower: float
    kappa_upper: float
    regime: Regime

    def csv_fields(self) -> tuple[str, ...]:
        return (
            str(self.d), str(self.n), str(self.p),
            repr(float(self.kappa)), repr(float(self.rho)),
            "" if self.lambda_est is None else repr(float(self.lambda_est)),
            self.lambda_kind,
            repr(float(self.kappa_lower)), repr(float(self.kappa_upper)),
            str(self.regime), self.regime.justification,
        )


def _auto_radii(m: int, cap_sites: int) -> list[int]:
    radii = [R for R in range(1, 9) if (2 * R + 1) ** m <= cap_sites]
    return radii[-3:] if radii else [0]


def _row_job(args) -> PhaseRow:
    d, n, p, kappa, rho, radii, cap_sites, tol = args
    params = PamParams(d=d, n=n, p=p, kappa=kappa, rho=rho)
    if d <= 2:
        k_lo = k_hi = math.inf
    else:
        kb = kappa_bounds(d, n, p, rho)
        k_lo, k_hi = kb.lower, kb.upper
    try:
        row_radii = list(radii) if radii else _auto_radii(params.m, cap_sites)
        ests = lambda_spectral(params, row_radii, SolverOptions(tol=tol))
        lam = ests[-1].value
        kind = f"spectral(R={ests[-1].radius})"
    except ConvergenceError as exc:
        lam = exc.best.value
        kind = f"spectral(R={exc.best.radius},unconverged)"
    regime = classify(d, n, kappa, rho)
    if regime.label not in ("NotIntermittent", "Unresolved") and d >= 3 and kappa >= k_hi:
        regime = Regime(
            label="ZeroExponent",
            justification=(
                f"lambda_{p} = 0 certified for this row: kappa >= "
                f"kappa_bounds(p={p}).upper = {k_hi!r}, while kappa < n*G_d(0)"))
    return PhaseRow(d=d, n=n, p=p, kappa=kappa, rho=rho, lambda_est=lam,
                    lambda_kind=kind, kappa_lower=k_lo, kappa_upper=k_hi,
                    regime=regime)


def _safe_row_job(args) -> PhaseRow:
    try:
        return _row_job(args)
    except Exception as exc:  # noqa: BLE001 - row isolation is the contract
        d, n, p, kappa, rho = args[:5]
        return PhaseRow(d=d, n=n, p=p, kappa=kappa, rho=rho, lambda_est=None,
                        lambda_kind="failed",
                        kappa_lower=math.inf if d <= 2 else math.nan,
                        kappa_upper=math.inf if d <= 2 else math.nan,
                        regime=Regime(label="Unresolved",
                                      justification=f"row failed: {exc}"))


def _grid_digest(jobs) -> str:
    payload = json.dumps([j[:5] + (list(j[5] or []), j[6], j[7]) for j in jobs])
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def sweep(d: int, n: int, p_values: Sequence[int], kappas: Sequence[float],
          rhos: Sequence[float], out: str, *, radii: Sequence[int] | None = None,
          cap_sites: int = 600_000, tol: float = 1e-8, workers: int = 1,
          resume: bool = False) -> list[PhaseRow]:
    """Evaluate the (kappa, rho, p) grid into a CSV at ``out``.

    Rows are ordered by (kappa, rho, p); failures are isolated per row
    (lambda_est empty, regime Unresolved).  A sidecar ``<out>.cursor`` records
    progress; with resume=True a matching interrupted sweep continues after
    its last completed row.  Worker processes split rows; the file is written
    in grid order regardless of completion order.
    """
    for name, vals in (("p_values", p_values), ("kappas", kappas), ("rhos", rhos)):
        if len(vals) == 0:
            raise ValueError(f"{name} must be nonempty")
        if any(b < a for a, b in zip(vals, list(vals)[1:])):
            raise ValueError(f"{name} must be sorted ascending, got {list(vals)}")
    jobs = [(d, n, int(p), float(k), float(r), tuple(radii) if radii else None,
             cap_sites, tol)
            for k in kappas for r in rhos for p in p_values]
    digest = _grid_digest(jobs)
    cursor_path = out + ".cursor"

    done = 0
    if resume and os.path.exists(cursor_path) and os.path.exists(out):
        with open(cursor_path) as fh:
            state = json.load(fh)
        if state.get("grid") == digest:
            done = int(state.get("rows_done", 0))

    mode = "a" if done else "w"
    rows: list[PhaseRow] = []
    with open(out, mode, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not done:
            writer.writerow(PHASE_CSV_HEADER)
        pending = jobs[done:]
        if workers > 1 and len(pending) > 1:
            pool = ProcessPoolExecutor(max_workers=workers)
            futures = [pool.submit(_safe_row_job, job) for job in pending]
            results = (f.result() for f in futures)
        else:
            pool = None
            results = map(_safe_row_job, pending)
        try:
            for row in results:
                rows.append(row)
                writer.writerow(row.csv_fields())
                fh.flush()
                done += 1
                with open(cursor_path, "w") as cf:
                    json.dump({"grid": digest, "rows_done": done}, cf)
        finally:
            if pool is not None:
                pool.shutdown()
    if os.path.exists(cursor_path) and done == len(jobs):
        os.remove(cursor_path)
    return rows
