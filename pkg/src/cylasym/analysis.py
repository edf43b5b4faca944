"""Norms, decay diagnostics, rate fitting, and report serialization.

Everything here works through one small evaluator protocol: a callable
(axes, alpha) -> grid of D^alpha values on the tensor grid spanned by the
per-axis point arrays.  Discrete fields, constant axial extensions of
cross-section fields, differences, cutoff products, and analytic solutions
all become interchangeable under the quadrature.
"""

import csv
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss

from .multiindex import enumerate_upto, multi_binom, sub, sub_indices

_EPS = 1e-12

CSV_HEADER = (
    "ell,dofs,err_L2,err_Hm,err_H2m_interior,norm_ul_Hm_full,"
    "lemma19_ratio,solver_residual,wall_time_s"
)


# ---------------------------------------------------------------------------
# evaluators

class FieldEvaluator:
    def __init__(self, field):
        self._field = field

    def __call__(self, axes, alpha):
        return self._field.eval_grid(list(axes), tuple(alpha))


class ExtensionEvaluator:
    """Constant axial extension of a cross-section field: axial derivatives
    vanish, cross-sectional derivatives broadcast along the axial axes."""

    def __init__(self, cross_field, p: int):
        self._cross = cross_field
        self.p = int(p)

    def __call__(self, axes, alpha):
        shape = tuple(len(a) for a in axes)
        if any(alpha[k] > 0 for k in range(self.p)):
            return np.zeros(shape)
        vals = self._cross.eval_grid(list(axes[self.p :]), tuple(alpha[self.p :]))
        return np.broadcast_to(vals.reshape((1,) * self.p + vals.shape), shape)


class AnalyticProfileExtension:
    """Extension of an analytic 1D cross-section profile fn(t, order)."""

    def __init__(self, fn, p: int):
        self._fn = fn
        self.p = int(p)

    def __call__(self, axes, alpha):
        shape = tuple(len(a) for a in axes)
        if len(axes) != self.p + 1:
            raise ValueError("analytic extension supports one cross-sectional axis")
        if any(alpha[k] > 0 for k in range(self.p)):
            return np.zeros(shape)
        vals = np.asarray(self._fn(np.asarray(axes[-1], dtype=np.float64), alpha[-1]))
        return np.broadcast_to(vals.reshape((1,) * self.p + (-1,)), shape)


class DifferenceEvaluator:
    def __init__(self, left, right):
        self._left = left
        self._right = right

    def __call__(self, axes, alpha):
        return self._left(axes, alpha) - self._right(axes, alpha)


# ---------------------------------------------------------------------------
# quadrature and norms

def _composite_gauss(extent, cells: int, points_per_cell: int):
    lo, hi = extent
    nodes, weights = leggauss(points_per_cell)
    edges = np.linspace(lo, hi, cells + 1)
    half = 0.5 * (hi - lo) / cells
    mid = 0.5 * (edges[:-1] + edges[1:])
    pts = (mid[:, None] + half * nodes[None, :]).ravel()
    wts = np.broadcast_to(half * weights[None, :], (cells, points_per_cell)).ravel()
    return pts, wts


def norm_Hm(evaluator, box, m: int, resolution: int, points_per_cell: int = 3) -> float:
    """sqrt of sum over |alpha| <= m of the Gauss-quadrature integral of
    (D^alpha u)^2 over the box."""
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    axes = []
    W = np.ones(())
    for lo, hi in box:
        if not lo < hi:
            raise ValueError(f"empty box extent ({lo}, {hi})")
        cells = max(1, round((hi - lo) * resolution))
        pts, wts = _composite_gauss((lo, hi), cells, points_per_cell)
        axes.append(pts)
        W = np.multiply.outer(W, wts)
    total = 0.0
    for alpha in enumerate_upto(len(box), m):
        vals = np.asarray(evaluator(axes, alpha), dtype=np.float64)
        total += float(np.sum(W * vals**2))
    return float(np.sqrt(total))


def _split_p(u_l, u_inf) -> int:
    p = u_l.basis.naxes - u_inf.basis.naxes
    if p < 1:
        raise ValueError("cross-section field must have fewer axes than the full field")
    return p


def error_Hm(u_l, u_inf, ell0: float, m: int, resolution: int) -> float:
    """H^m distance between u_l and the extension of u_inf on the inner
    cylinder (-ell0, ell0)^p x omega."""
    p = _split_p(u_l, u_inf)
    domain = u_l.basis.domain
    for lo, hi in domain[:p]:
        if ell0 > hi + _EPS or -ell0 < lo - _EPS:
            raise ValueError(f"inner half-length {ell0} exceeds the domain {domain[:p]}")
    box = [(-float(ell0), float(ell0))] * p + list(domain[p:])
    w = DifferenceEvaluator(FieldEvaluator(u_l), ExtensionEvaluator(u_inf, p))
    return norm_Hm(w, box, m, resolution)


def lemma19_check(records) -> tuple[float, bool]:
    """Boundedness of the per-record ratio against 3x the first record's."""
    ratios = [r.lemma19_ratio for r in records]
    if not ratios:
        raise ValueError("no records")
    max_ratio = max(ratios)
    return max_ratio, max_ratio <= 3.0 * ratios[0]


# ---------------------------------------------------------------------------
# cutoff and localized energy

class CutoffRho:
    """C^m piecewise-polynomial plateau bump: 1 on [-1/2, 1/2], polynomial
    bridge of degree 2m+1 down to 0 at |t| = 1, zero outside.

    The bridge is the integral of (s(1-s))^m normalized to run from 0 to 1,
    so m derivatives vanish at both joints and max |rho'| stays bounded by a
    constant depending only on m.
    """

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        self.m = int(m)
        kernel = Polynomial([0.0, 1.0]) ** m * Polynomial([1.0, -1.0]) ** m
        s_poly = kernel.integ()
        s_poly = s_poly / s_poly(1.0)
        self._bridge = [s_poly]
        for _ in range(2 * m + 1):
            self._bridge.append(self._bridge[-1].deriv())

    def profile(self, t, der: int = 0):
        """der-th derivative of the 1D profile at t (vectorized, even in t)."""
        if der >= len(self._bridge):
            return np.zeros_like(np.asarray(t, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        out = np.zeros_like(a)
        if der == 0:
            out[a <= 0.5] = 1.0
        bridge = (a > 0.5) & (a < 1.0)
        if np.any(bridge):
            s = 2.0 * a[bridge] - 1.0
            vals = -self._bridge[der](s) * 2.0**der
            if der % 2 == 1:
                vals = vals * np.sign(t[bridge])
            if der == 0:
                vals = 1.0 + vals  # rho = 1 - S(s)
            out[bridge] = vals
        return out

    def derivative_bound(self, der: int, samples: int = 4001) -> float:
        t = np.linspace(-1.0, 1.0, samples)
        return float(np.abs(self.profile(t, der)).max())


class CutoffEvaluator:
    """rho(X1 / ell1) over the full coordinate grid (constant in the cross
    variables, scaled by ell1 per axial derivative)."""

    def __init__(self, rho: CutoffRho, ell1: float, p: int, naxes: int):
        if ell1 <= 0:
            raise ValueError(f"cutoff scale must be positive, got {ell1}")
        self._rho = rho
        self._ell1 = float(ell1)
        self.p = int(p)
        self._naxes = int(naxes)

    def __call__(self, axes, alpha):
        shape = tuple(len(a) for a in axes)
        if any(alpha[k] > 0 for k in range(self.p, self._naxes)):
            return np.zeros(shape)
        out = np.ones(())
        for k in range(self._naxes):
            if k < self.p:
                vals = self._rho.profile(
                    np.asarray(axes[k], dtype=np.float64) / self._ell1, alpha[k]
                ) / self._ell1 ** alpha[k]
            else:
                vals = np.ones(len(axes[k]))
            out = np.multiply.outer(out, vals)
        return out


class ProductEvaluator:
    """Leibniz product of two evaluators: D^alpha(fg) expanded exactly."""

    def __init__(self, left, right):
        self._left = left
        self._right = right

    def __call__(self, axes, alpha):
        alpha = tuple(alpha)
        shape = tuple(len(a) for a in axes)
        out = np.zeros(shape)
        for beta in sub_indices(alpha):
            gamma = sub(alpha, beta)
            out += (
                multi_binom(alpha, beta)
                * self._left(axes, beta)
                * self._right(axes, gamma)
            )
        return out


def cutoff_rho(m: int, ell1: float, points, alpha=None):
    """Convenience wrapper: D^alpha of rho(X1/ell1) at axial points (Q, p)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    p = points.shape[1]
    alpha = tuple(alpha) if alpha is not None else (0,) * p
    rho = CutoffRho(m)
    out = np.ones(points.shape[0])
    for k in range(p):
        out = out * rho.profile(points[:, k] / ell1, alpha[k]) / ell1 ** alpha[k]
    return out


def localized_energy(u_l, u_inf, ell1: float, m: int, resolution: int) -> float:
    """H^m norm of (u_l - extension of u_inf) * rho(X1/ell1) over Omega_ell1."""
    p = _split_p(u_l, u_inf)
    domain = u_l.basis.domain
    if ell1 > domain[0][1] + _EPS:
        raise ValueError(f"scale {ell1} exceeds the axial half-length {domain[0][1]}")
    n = u_l.basis.naxes
    w = DifferenceEvaluator(FieldEvaluator(u_l), ExtensionEvaluator(u_inf, p))
    rho = CutoffEvaluator(CutoffRho(m), ell1, p, n)
    box = [(-float(ell1), float(ell1))] * p + list(domain[p:])
    return norm_Hm(ProductEvaluator(w, rho), box, m, resolution)


# ---------------------------------------------------------------------------
# interior residual of the two-solution identity

def galerkin_interior_residual(
    u_l, u_inf, spec, ell: float, resolution: int, margin: float = 1.0
) -> float:
    """max over a family of interior C^m bump test functions phi of
    |sum_pairs integral a_ab D^a(u_l - ext u_inf) D^b phi|.

    The bumps live outside the trial space, so the value measures how far the
    discrete pair is from satisfying the continuous interior identity; it
    shrinks with the mesh.  Bump supports are unit boxes centered on integer
    axial points well inside (-ell, ell), times a bump spanning the
    cross-section.
    """
    p = _split_p(u_l, u_inf)
    n = u_l.basis.naxes
    m = spec.m
    rho = CutoffRho(m)
    reach = int(np.floor(ell - margin - 1.0 + _EPS))
    if reach < 0:
        raise ValueError(f"no room for unit bumps inside ell={ell} with margin {margin}")
    axial_centers = range(-reach, reach + 1)
    cross = u_l.basis.domain[p:]
    centers_cross = [0.5 * (lo + hi) for lo, hi in cross]
    widths_cross = [0.5 * (hi - lo) for lo, hi in cross]
    degree = max(f.degree for f in u_l.basis.factors)
    ppc = (degree + 2 * m + 3) // 2 + 1
    w = DifferenceEvaluator(FieldEvaluator(u_l), ExtensionEvaluator(u_inf, p))

    worst = 0.0
    for axial in itertools.product(axial_centers, repeat=p):
        centers = [float(c) for c in axial] + centers_cross
        widths = [1.0] * p + widths_cross
        axes = []
        W = np.ones(())
        for k in range(n):
            lo, hi = centers[k] - widths[k], centers[k] + widths[k]
            cells = max(1, round((hi - lo) * resolution))
            pts, wts = _composite_gauss((lo, hi), cells, ppc)
            axes.append(pts)
            W = np.multiply.outer(W, wts)
        grids = np.meshgrid(*axes, indexing="ij")
        total = 0.0
        for (alpha, beta), coef in sorted(spec.coefficients.items()):
            a_vals = np.broadcast_to(coef(tuple(grids)), grids[0].shape)
            w_vals = w(axes, alpha)
            phi = np.ones(())
            for k in range(n):
                vals = rho.profile(
                    (axes[k] - centers[k]) / widths[k], beta[k]
                ) / widths[k] ** beta[k]
                phi = np.multiply.outer(phi, vals)
            total += float(np.sum(W * a_vals * w_vals * phi))
        worst = max(worst, abs(total))
    return worst


# ---------------------------------------------------------------------------
# rate fitting

@dataclass(frozen=True)
class RateFit:
    rate: float
    included: tuple
    floor_detected: bool


def fit_rate(points, ratio_threshold: float = 0.9, abs_floor: float = 1e-12) -> RateFit:
    """Least-squares slope of log(err) against log(ell), floor points excluded.

    A point lands on the floor when it fails to improve on its predecessor by
    the ratio threshold (computed on raw consecutive pairs) or when its error
    sits below abs_floor.  Fewer than 3 surviving points is an error.
    """
    ells = np.array([float(e) for e, _ in points])
    errs = np.array([float(v) for _, v in points])
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    if np.any(errs <= 0.0):
        raise ValueError("errors must be positive to fit a rate")
    if np.any(np.diff(ells) <= 0.0):
        raise ValueError("ell values must be strictly increasing")
    included = np.ones(len(points), dtype=bool)
    for i in range(len(points) - 1):
        if errs[i + 1] / errs[i] > ratio_threshold:
            included[i + 1] = False
    included &= errs >= abs_floor
    if included.sum() < 3:
        raise ValueError(
            f"fewer than 3 usable points after floor exclusion "
            f"({int(included.sum())} of {len(points)})"
        )
    x = np.log(ells[included])
    y = np.log(errs[included])
    xbar = x.mean()
    slope = float(((x - xbar) * (y - y.mean())).sum() / ((x - xbar) ** 2).sum())
    return RateFit(-slope, tuple(bool(b) for b in included), bool(not included.all()))


# ---------------------------------------------------------------------------
# records and reports

@dataclass
class ErrorRecord:
    ell: float
    dofs: int
    err_L2: float
    err_Hm: float
    err_H2m_interior: float
    norm_ul_Hm_full: float
    lemma19_ratio: float
    solver_residual: float
    wall_time_s: float
    solver_iterations: int = 0
    interior_alpha: dict = field(default_factory=dict)
    n1_full_alpha: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "err_L2",
            "err_Hm",
            "err_H2m_interior",
            "norm_ul_Hm_full",
            "lemma19_ratio",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        # the H^m sum includes the L2 term, so this holds up to roundoff
        if self.err_L2 > self.err_Hm * (1.0 + _EPS) + 1e-300:
            raise ValueError("err_Hm must dominate err_L2")


@dataclass
class ConvergenceReport:
    problem_name: str
    problem_hash: str
    plan: dict
    records: list
    fitted_rate_Hm: float | None
    fitted_rate_H2m: float | None
    floor_detected: bool
    hypothesis: object
    localized_table: list = field(default_factory=list)
    rate_masks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        ells = [r.ell for r in self.records]
        if any(b <= a for a, b in zip(ells, ells[1:])):
            raise ValueError("records must be strictly increasing in ell")


def _fmt_float(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def write_report_csv(report: ConvergenceReport, path) -> None:
    """Deterministic CSV: wall_time_s is pinned to 0.0 so byte-identical
    reruns stay byte-identical; real timings live in the JSON report."""
    lines = [CSV_HEADER]
    for r in report.records:
        lines.append(
            ",".join(
                [
                    _fmt_float(r.ell),
                    str(int(r.dofs)),
                    repr(float(r.err_L2)),
                    repr(float(r.err_Hm)),
                    repr(float(r.err_H2m_interior)),
                    repr(float(r.norm_ul_Hm_full)),
                    repr(float(r.lemma19_ratio)),
                    repr(float(r.solver_residual)),
                    "0.0",
                ]
            )
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def report_to_dict(report: ConvergenceReport) -> dict:
    from . import __version__

    hyp = report.hypothesis
    hyp_dict = None
    if hyp is not None:
        hyp_dict = {
            "passed": hyp.passed,
            "lambda_hat": hyp.lambda_hat,
            "ellipticity_ok": hyp.ellipticity_ok,
            "x1_independent": dict(hyp.x1_independent),
            "sup_norms": dict(hyp.sup_norms),
            "sample_count": hyp.sample_count,
            "seed": hyp.seed,
            "warnings": list(hyp.warnings),
        }
    return {
        "version": __version__,
        "problem": {"name": report.problem_name, "config_sha256": report.problem_hash},
        "plan": dict(report.plan),
        "records": [
            {
                "ell": r.ell,
                "dofs": r.dofs,
                "err_L2": r.err_L2,
                "err_Hm": r.err_Hm,
                "err_H2m_interior": r.err_H2m_interior,
                "norm_ul_Hm_full": r.norm_ul_Hm_full,
                "lemma19_ratio": r.lemma19_ratio,
                "solver_residual": r.solver_residual,
                "solver_iterations": r.solver_iterations,
                "wall_time_s": r.wall_time_s,
                "interior_alpha": dict(r.interior_alpha),
                "n1_full_alpha": dict(r.n1_full_alpha),
            }
            for r in report.records
        ],
        "fitted_rate_Hm": report.fitted_rate_Hm,
        "fitted_rate_H2m": report.fitted_rate_H2m,
        "floor_detected": report.floor_detected,
        "rate_masks": {k: list(v) for k, v in report.rate_masks.items()},
        "localized_energy": [
            {"ell1": e, "value": v} for e, v in report.localized_table
        ],
        "hypothesis_report": hyp_dict,
        "warnings": list(report.warnings),
        "timings": dict(report.timings),
    }


def write_report_json(report: ConvergenceReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_refinement_csv(rows, path) -> None:
    """Refinement study table; one row per resolution."""
    header = ["resolution", "h", "dofs_limit", "err_Hm_limit", "order", "err_Hm_cyl_vs_limit"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    _fmt_float(row["resolution"]),
                    repr(float(row["h"])),
                    str(int(row["dofs_limit"])),
                    repr(float(row["err_Hm_limit"])),
                    "" if row["order"] is None else repr(float(row["order"])),
                    ""
                    if row.get("err_Hm_cyl_vs_limit") is None
                    else repr(float(row["err_Hm_cyl_vs_limit"])),
                ]
            )
