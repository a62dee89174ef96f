"""Market model: state diffusion coefficients, assets, and the linear-algebra
kernels shared by the checkers and the simulator.

A market is a d-dimensional diffusion X with drift field b(t, x) and
diffusion matrix a(t, x) (symmetric positive semi-definite), started at x0.
The first m coordinates drive the traded assets

    S_i(t) = S0_i * exp(x_i(t) - x0_i - 1/2 * int_0^t a_ii(s, X_s) ds),

and mu(t, x) is the (d - m)-dimensional drift freedom left on the
non-traded coordinates when constructing candidate pricing measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .errors import (
    DimensionMismatch,
    DomainError,
    EvalError,
    NotPSD,
    NotSymmetric,
    SingularDiffusion,
)

__all__ = [
    "MarketModel",
    "CertificateBundle",
    "SamplePlan",
    "ValidationReport",
    "MPRField",
    "NotConstructible",
    "validate_model",
    "sqrt_psd",
    "good_mpr_markov",
    "embed_zero",
    "asset_path",
]

# Invertibility threshold for the market-price-of-risk construction.
COND_LIMIT = 1e12
# Sampled |a^-1 b| beyond this inside a bounded box counts as an
# unboundedness witness.
INTERIOR_CAP = 1e8


def _as_expr(e):
    return dsl.parse_expr(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class MarketModel:
    d: int
    m: int
    T: float
    x0: np.ndarray
    S0: np.ndarray
    b: tuple
    a: tuple
    mu: tuple

    def __post_init__(self):
        if not (1 <= self.m <= self.d):
            raise DimensionMismatch(f"need 1 <= m <= d, got m={self.m}, d={self.d}")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        x0 = np.asarray(self.x0, dtype=float)
        S0 = np.asarray(self.S0, dtype=float)
        if x0.shape != (self.d,):
            raise DimensionMismatch(f"x0 must have length d={self.d}")
        if S0.shape != (self.m,):
            raise DimensionMismatch(f"S0 must have length m={self.m}")
        if np.any(S0 <= 0):
            raise ValueError("initial asset prices must be positive")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "S0", S0)
        b = tuple(_as_expr(e) for e in self.b)
        mu = tuple(_as_expr(e) for e in self.mu)
        a = tuple(tuple(_as_expr(e) for e in row) for row in self.a)
        if len(b) != self.d:
            raise DimensionMismatch(f"b must have {self.d} entries")
        if len(a) != self.d or any(len(row) != self.d for row in a):
            raise DimensionMismatch(f"a must be a {self.d}x{self.d} grid")
        if len(mu) != self.d - self.m:
            raise DimensionMismatch(f"mu must have {self.d - self.m} entries")
        for e in (*b, *mu, *(x for row in a for x in row)):
            dsl.bind_state_expr(e, self.d)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "mu", mu)

    # -- vectorized coefficient evaluation ---------------------------------

    def eval_b(self, t, X):
        return self._eval_vector(self.b, t, X)

    def eval_mu(self, t, X):
        return self._eval_vector(self.mu, t, X)

    def eval_a(self, t, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        n = X.shape[0]
        out = np.empty((n, self.d, self.d))
        for i in range(self.d):
            for j in range(self.d):
                out[:, i, j] = dsl.eval_expr(self.a[i][j], t, X)
        return out[0] if single else out

    def _eval_vector(self, exprs, t, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        n = X.shape[0]
        out = np.zeros((n, len(exprs)))
        for k, e in enumerate(exprs):
            out[:, k] = dsl.eval_expr(e, t, X)
        return out[0] if single else out

    # -- structure ----------------------------------------------------------

    def drift_is_zero(self) -> bool:
        return all(dsl.is_zero(e) for e in self.b)

    def a_structure(self) -> str:
        """'zero' | 'scalar' (g*Id) | 'diagonal' | 'general', by AST shape."""
        off_zero = all(
            dsl.is_zero(self.a[i][j])
            for i in range(self.d)
            for j in range(self.d)
            if i != j
        )
        if not off_zero:
            return "general"
        diag = [self.a[i][i] for i in range(self.d)]
        if all(dsl.is_zero(e) for e in diag):
            return "zero"
        if all(e == diag[0] for e in diag[1:]):
            return "scalar"
        return "diagonal"

    def a_time_only(self) -> bool:
        names = set()
        for row in self.a:
            for e in row:
                names |= dsl.free_variables(e)
        return names <= {"t"}


@dataclass(frozen=True)
class CertificateBundle:
    """Optional user-supplied certificate functions, already parsed.

    All fields default to None/empty; checkers request what they need and
    raise MissingCertificate when a required piece is absent.
    """

    r: float | None = None
    zeta: object | None = None          # Expr in t
    A: object | None = None             # Expr in z
    B: object | None = None             # Expr in z
    xi: object | None = None            # Expr in z
    alpha: object | None = None         # Expr in rho
    a_hat: object | None = None         # Expr in (t, x)
    z0: float | None = None
    per_asset: dict = field(default_factory=dict)   # i -> dict(r, zeta, A, B)
    moduli: dict = field(default_factory=dict)      # name -> 'linear'|'sqrt'|Expr

    def __post_init__(self):
        def conv(e, var):
            if e is None:
                return None
            e = _as_expr(e)
            dsl.bind_scalar_expr(e, var)
            return e

        object.__setattr__(self, "zeta", conv(self.zeta, "t"))
        object.__setattr__(self, "A", conv(self.A, "z"))
        object.__setattr__(self, "B", conv(self.B, "z"))
        object.__setattr__(self, "xi", conv(self.xi, "z"))
        object.__setattr__(self, "alpha", conv(self.alpha, "rho"))
        if self.a_hat is not None:
            object.__setattr__(self, "a_hat", _as_expr(self.a_hat))
        per = {}
        for i, sub in dict(self.per_asset).items():
            sub = dict(sub)
            for key, var in (("zeta", "t"), ("A", "z"), ("B", "z")):
                if sub.get(key) is not None:
                    sub[key] = conv(sub[key], var)
            per[int(i)] = sub
        object.__setattr__(self, "per_asset", per)
        moduli = {}
        for name, sel in dict(self.moduli).items():
            if sel in ("linear", "sqrt"):
                moduli[name] = sel
            else:
                moduli[name] = conv(sel, "z")
        object.__setattr__(self, "moduli", moduli)


# ---------------------------------------------------------------------------
# Sampling plan


def _nested_gaussians(seed: int, stream: int, count: int, width: int) -> np.ndarray:
    """(count, width) standard normals from a counter-based stream.

    The first n rows are identical for any count >= n, so sample sets nest
    as counts grow.
    """
    gen = np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(stream)]))
    return gen.standard_normal((count, width))


def _vdc(j: int) -> float:
    """Van der Corput base-2 radical inverse; deterministic, count-free."""
    u, denom = 0.0, 1.0
    while j:
        denom *= 2.0
        u += (j & 1) / denom
        j >>= 1
    return u


@dataclass(frozen=True)
class SamplePlan:
    """Deterministic probe grids shared by validation and the checkers."""

    radii: np.ndarray
    samples_per_sphere: int = 256
    time_points: int = 33
    seed: int = 2024

    @classmethod
    def default(cls, radius_lo: float = 1e-2, radius_hi: float = 2.0 ** 10,
                n_radii: int = 64, **kw) -> "SamplePlan":
        radii = np.geomspace(radius_lo, radius_hi, n_radii)
        return cls(radii=radii, **kw)

    def time_grid(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.time_points)

    def sphere(self, d: int, radius: float, radius_index: int,
               count: int | None = None) -> np.ndarray:
        """Quasi-uniform points on the sphere of the given radius."""
        count = self.samples_per_sphere if count is None else count
        if d == 1:
            # The 1-D sphere is two points; no sampling noise wanted.
            pts = np.array([[radius], [-radius]])
            return pts if count >= 2 else pts[:1]
        g = _nested_gaussians(self.seed, radius_index, count, d)
        norms = np.sqrt(np.einsum("nd,nd->n", g, g))
        norms[norms == 0] = 1.0
        return radius * g / norms[:, None]

    def ball(self, d: int, radius: float, radius_index: int,
             count: int | None = None) -> np.ndarray:
        """Quasi-uniform points in the closed ball, boundary included
        (the j-th point sits at radius*(1 - vdc(j))^(1/d), so j=0 is on
        the boundary exactly)."""
        count = self.samples_per_sphere if count is None else count
        if d == 1:
            # The two-point 1-D sphere would collapse the ball to two
            # points; scan [-r, r] with alternating-sign radical-inverse
            # scales instead.
            scales = np.array([1.0 - _vdc(j) for j in range(count)])
            signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
            return (radius * signs * scales)[:, None]
        sphere = self.sphere(d, 1.0, radius_index, count)
        n = sphere.shape[0]
        scales = np.array([(1.0 - _vdc(j)) ** (1.0 / d) for j in range(n)])
        return radius * sphere * scales[:, None]

    def cloud(self, model: MarketModel, include_origin: bool = True) -> np.ndarray:
        """Scale-ladder probe cloud: spheres at every plan radius, plus the
        origin and the starting point."""
        pieces = [self.sphere(model.d, r, k) for k, r in enumerate(self.radii)]
        pieces.append(model.x0[None, :])
        if include_origin:
            pieces.append(np.zeros((1, model.d)))
        return np.vstack(pieces)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    max_symmetry_defect: float
    min_eigenvalue: float
    samples: int
    witness: tuple | None = None   # (t, x) of the worst violation, if any

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "max_symmetry_defect": float(self.max_symmetry_defect),
            "min_eigenvalue": float(self.min_eigenvalue),
            "samples": int(self.samples),
            "witness": None if self.witness is None else _point_dict(*self.witness),
        }


def _point_dict(t, x) -> dict:
    return {"t": None if t is None else float(t),
            "x": None if x is None else np.asarray(x, float).tolist()}


def psd_tolerance(A: np.ndarray) -> float:
    """Relative PSD tolerance: 1e-9 * (1 + ||A||)."""
    return 1e-9 * (1.0 + float(np.linalg.norm(A, 2)))


def validate_model(model: MarketModel, plan: SamplePlan | None = None) -> ValidationReport:
    """Probe a(t, x) for symmetry and positive semi-definiteness over the
    plan's grid plus the model's starting point and the origin."""
    plan = plan or SamplePlan.default()
    points = plan.cloud(model)
    worst_sym = 0.0
    worst_eig = np.inf
    witness = None
    count = 0
    for t in plan.time_grid(model.T):
        try:
            A = model.eval_a(t, points)
        except EvalError as err:
            raise EvalError(f"diffusion field failed validation probe: {err}",
                            t=err.t, x=err.x) from err
        count += A.shape[0]
        sym_defect = np.max(np.abs(A - np.transpose(A, (0, 2, 1))), axis=(1, 2))
        eigs = np.linalg.eigvalsh((A + np.transpose(A, (0, 2, 1))) / 2.0)
        min_eigs = eigs[:, 0]
        # Per-point relative tolerance: 1e-9 * (1 + spectral norm).
        tol = 1e-9 * (1.0 + np.max(np.abs(eigs), axis=1))
        bad = (sym_defect > 10 * tol) | (min_eigs < -tol)
        if np.any(bad) and witness is None:
            witness = (t, points[int(np.argmax(bad))].copy())
        worst_sym = max(worst_sym, float(np.max(sym_defect)))
        worst_eig = min(worst_eig, float(np.min(min_eigs)))
    return ValidationReport(
        passed=witness is None,
        max_symmetry_defect=worst_sym,
        min_eigenvalue=worst_eig,
        samples=count,
        witness=witness,
    )


# ---------------------------------------------------------------------------
# PSD square root


def sqrt_psd(A: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root via spectral decomposition.

    Negative eigenvalues within tolerance are clamped to zero, so
    PSD-singular matrices (degenerate diffusions) are supported.  Raises
    NotPSD when an eigenvalue falls below -tol.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("sqrt_psd expects a square matrix")
    if tol is None:
        tol = psd_tolerance(A)
    defect = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if defect > max(tol, 1e-12) * 10:
        raise NotSymmetric(f"matrix is not symmetric (defect {defect:.3e})")
    sym = (A + A.T) / 2.0
    w, V = np.linalg.eigh(sym)
    if w[0] < -tol:
        raise NotPSD(
            f"matrix has eigenvalue {w[0]:.6e} below -{tol:.1e}", min_eigenvalue=float(w[0])
        )
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def sqrt_psd_batch(A: np.ndarray, rel_tol: float = 1e-9):
    """Vectorized square roots for (N, d, d) batches.

    Returns (R, bad) where bad marks matrices whose smallest eigenvalue is
    below the per-matrix relative tolerance; their R rows are zeroed.  No
    exceptions: the simulator turns bad into invalid-path bookkeeping.
    """
    A = np.asarray(A, dtype=float)
    sym = (A + np.transpose(A, (0, 2, 1))) / 2.0
    w, V = np.linalg.eigh(sym)
    scale = 1.0 + np.abs(w).max(axis=1)
    bad = w[:, 0] < -rel_tol * scale
    w = np.clip(w, 0.0, None)
    R = np.einsum("nij,nj,nkj->nik", V, np.sqrt(w), V)
    if np.any(bad):
        R[bad] = 0.0
    return R, bad


# ---------------------------------------------------------------------------
# Market price of risk (Markovian construction)


def embed_zero(mu_value, d: int):
    """Embed a (d - m)-vector as (0, ..., 0, mu): zeros on the m traded
    coordinates.  Accepts (k,) or (N, k) arrays; k may be 0."""
    mu_value = np.atleast_1d(np.asarray(mu_value, dtype=float))
    if mu_value.ndim == 1:
        k = mu_value.shape[0]
        out = np.zeros(d)
        if k:
            out[d - k:] = mu_value
        return out
    n, k = mu_value.shape
    out = np.zeros((n, d))
    if k:
        out[:, d - k:] = mu_value
    return out


@dataclass(frozen=True)
class MPRField:
    """Evaluable Markovian market-price-of-risk field
    c(t, x) = -a(t, x)^-1 b(t, x) + (0, mu(t, x))."""

    model: MarketModel
    boundedness: dict          # box radius -> sup |c| over probes in the box
    zero_drift: bool = False

    def eval(self, t, X):
        model = self.model
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        mu = embed_zero(
            model.eval_mu(t, pts) if model.mu else np.zeros((pts.shape[0], 0)),
            model.d,
        )
        if self.zero_drift:
            return mu[0] if single else mu
        A = model.eval_a(t, pts)
        B = model.eval_b(t, pts)
        out = np.empty_like(B)
        for k in range(pts.shape[0]):
            try:
                out[k] = -np.linalg.solve(A[k], B[k])
            except np.linalg.LinAlgError:
                raise SingularDiffusion(
                    "diffusion matrix is singular", t=t, x=pts[k]
                ) from None
        out += mu
        return out[0] if single else out


@dataclass(frozen=True)
class NotConstructible:
    """Failure witness for the Markovian MPR construction.

    kind: 'singular' (a not invertible at a probe), 'interior_unbounded'
    (|a^-1 b| exceeds the cap inside a bounded box), or 'eval_failure'.
    """

    kind: str
    witness: tuple             # (t, x)
    detail: str
    sup_samples: dict          # box radius -> sup |c| where computable


def _masked_eval(fn, points: np.ndarray, tail: tuple, t: float):
    """Evaluate fn on every probe, isolating points where evaluation fails.

    Batch evaluation raises on the first offending point, which would throw
    away the whole probe set; instead split-and-retry so a single bad point
    (say, a 0/0 at the origin) costs only log-many extra batch calls.
    Returns (values, ok_mask, first_failure or None)."""
    n = points.shape[0]
    out = np.zeros((n,) + tail)
    ok = np.zeros(n, dtype=bool)
    first_fail = None

    stack = [(0, n)]
    while stack:
        lo, hi = stack.pop()
        try:
            out[lo:hi] = fn(points[lo:hi])
            ok[lo:hi] = True
        except EvalError as err:
            if hi - lo == 1:
                if first_fail is None:
                    first_fail = (err.t if err.t is not None else t,
                                  points[lo].copy())
                continue
            mid = (lo + hi) // 2
            stack.append((mid, hi))
            stack.append((lo, mid))
    return out, ok, first_fail


def _deep_probe_points(d: int, seed: int) -> np.ndarray:
    """Probe ladder descending far below the plan's smallest radius.

    Interior unboundedness of a^-1 b (e.g. |c| ~ 1/|x| near 0) only shows
    up at radii much smaller than the envelope grids need, so the MPR
    construction probes a dyadic ladder down to 2^-45."""
    radii = 2.0 ** -np.arange(7, 46, dtype=float)
    if d == 1:
        return np.concatenate([radii, -radii])[:, None]
    pieces = []
    for k, r in enumerate(radii):
        g = _nested_gaussians(seed, 70_000 + k, 8, d)
        norms = np.sqrt(np.einsum("nd,nd->n", g, g))
        norms[norms == 0] = 1.0
        pieces.append(r * g / norms[:, None])
    return np.vstack(pieces)


def good_mpr_markov(model: MarketModel, plan: SamplePlan | None = None):
    """Construct the Markovian market-price-of-risk field, or explain why
    it cannot be done.

    Zero drift short-circuits to the (0, mu) field: the defining equations
    only constrain the traded coordinates, and with b = 0 they are solved
    by zero regardless of a's invertibility."""
    plan = plan or SamplePlan.default()
    if model.drift_is_zero():
        return MPRField(model=model, boundedness={}, zero_drift=True)

    points = np.vstack([plan.cloud(model), _deep_probe_points(model.d, plan.seed)])
    times = plan.time_grid(model.T)
    box_edges = [2.0 ** k for k in range(0, 11)]
    sup_by_box = {edge: 0.0 for edge in box_edges}
    first_singular = None
    first_eval_failure = None
    worst = (0.0, None)        # (|c|, (t, x))

    norms = np.sqrt(np.einsum("nd,nd->n", points, points))
    d = model.d
    for t in times:
        A, ok_a, fail_a = _masked_eval(
            lambda P: model.eval_a(t, P), points, (d, d), t)
        B, ok_b, fail_b = _masked_eval(
            lambda P: model.eval_b(t, P), points, (d,), t)
        if first_eval_failure is None:
            first_eval_failure = fail_a or fail_b
        usable = ok_a & ok_b
        if not np.any(usable):
            continue
        A, B = A[usable], B[usable]
        sym = (A + np.transpose(A, (0, 2, 1))) / 2.0
        eigs = np.linalg.eigvalsh(sym)
        lo, hi = eigs[:, 0], eigs[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
        singular = (lo <= 0) | (cond > COND_LIMIT)
        usable_pts = points[usable]
        if np.any(singular) and first_singular is None:
            k = int(np.argmax(singular))
            first_singular = (t, usable_pts[k].copy())
        ok = ~singular
        if np.any(ok):
            sol = np.linalg.solve(A[ok], B[ok][..., None])[..., 0]
            mags = np.sqrt(np.einsum("nd,nd->n", sol, sol))
            k_local = int(np.argmax(mags))
            if mags[k_local] > worst[0]:
                worst = (float(mags[k_local]), (t, usable_pts[ok][k_local].copy()))
            pt_norms = norms[usable][ok]
            for edge in box_edges:
                inside = pt_norms <= edge
                if np.any(inside):
                    sup_by_box[edge] = max(sup_by_box[edge], float(np.max(mags[inside])))

    bounded_sup = {e: s for e, s in sup_by_box.items() if s > 0.0}
    for edge in box_edges:
        if sup_by_box[edge] > INTERIOR_CAP:
            # Unbounded inside a fixed box: find the offending probe.
            return NotConstructible(
                kind="interior_unbounded",
                witness=worst[1],
                detail=(
                    f"|a^-1 b| reaches {sup_by_box[edge]:.3e} inside the box "
                    f"of radius {edge:g}"
                ),
                sup_samples=bounded_sup,
            )
    if first_singular is not None:
        t_s, x_s = first_singular
        # Singular diffusion with nonzero drift demanded nearby: check
        # whether sampled |a^-1 b| blows up at the probes closest to the
        # singular point; those probes live on the surrounding scale ladder.
        return NotConstructible(
            kind="singular",
            witness=first_singular,
            detail="diffusion matrix not invertible at a probe point",
            sup_samples=bounded_sup,
        )
    if first_eval_failure is not None:
        return NotConstructible(
            kind="eval_failure",
            witness=first_eval_failure,
            detail="coefficient evaluation failed at a probe point",
            sup_samples=bounded_sup,
        )
    return MPRField(model=model, boundedness=bounded_sup)


# ---------------------------------------------------------------------------
# Assets


def asset_path(model: MarketModel, X_path, i: int):
    """Discounted asset path along a discrete state path.

    X_path is a (times, states) pair: shapes (K+1,) and (K+1, d).  The
    quadratic-variation integral is discretized left-point, matching the
    Euler scheme of the simulator.  Returns (times, S_i values).
    """
    if not (1 <= i <= model.m):
        raise DimensionMismatch(f"asset index {i} out of range 1..{model.m}")
    times, states = X_path
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if states.shape != (times.shape[0], model.d):
        raise DimensionMismatch("path states must be (K+1, d)")
    aii = np.empty(times.shape[0])
    for k, t in enumerate(times):
        aii[k] = dsl.eval_expr(model.a[i - 1][i - 1], t, states[k])
    dt = np.diff(times)
    integral = np.concatenate([[0.0], np.cumsum(aii[:-1] * dt)])
    exponent = states[:, i - 1] - model.x0[i - 1] - 0.5 * integral
    return times, model.S0[i - 1] * np.exp(exponent)
