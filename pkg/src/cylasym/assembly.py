"""Galerkin assembly on the cylinder and on the cross-section.

Both problems share one element loop: per-axis local basis derivative tables
are contracted cell-by-cell against quadrature weights and coefficient values
with a single einsum per coefficient pair, then scattered into COO triplets.
Every evaluation and scatter runs in a fixed order, so assembling the same
problem twice gives bitwise-identical matrices.

The cross-section (limit) problem keeps only coefficient pairs whose
multi-indices have no axial components; axial coordinates are pinned to zero
when evaluating coefficients and forcing there, which is exactly the
axis-independence the hypothesis validator enforces.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .problem import ProblemSpec
from .splines import SplineBasis1D, TensorBasis

_CELL_LETTERS = "abc"
_QUAD_LETTERS = "uvw"
_ROW_LETTERS = "ijk"
_COL_LETTERS = "lmn"


class AssemblyError(RuntimeError):
    pass


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    basis: TensorBasis
    spec: ProblemSpec
    symmetric: bool
    ell: float | None = None

    @property
    def ndofs(self) -> int:
        return self.basis.ndofs


def cells_for(extent, resolution: int) -> int:
    lo, hi = extent
    return max(1, round((hi - lo) * resolution))


def _local_tables(factors, nders, points_per_cell):
    """Per-axis quadrature and local basis values.

    Returns (pts, wts, B) per axis with B of shape
    (cells, points_per_cell, nders + 1, degree + 1); quadrature points are
    cell-major, so row c of B holds the functions active on cell c.
    """
    tables = []
    for f in factors:
        pts, wts = f.quadrature(points_per_cell)
        ders, first = f.local_ders(pts, nders)
        expect = np.repeat(np.arange(f.cells), points_per_cell)
        if not np.array_equal(first, expect):
            raise AssemblyError("quadrature points not aligned with cells")
        B = ders.reshape(f.cells, points_per_cell, nders + 1, f.degree + 1)
        tables.append((pts, wts.reshape(f.cells, points_per_cell), B))
    return tables


def _index_tensors(factors):
    """Flat constrained row index and validity per (cell, local function)."""
    dims = [f.dim for f in factors]
    n = len(factors)
    strides = [int(np.prod(dims[k + 1 :])) for k in range(n)]
    R = np.zeros((1,) * (2 * n), dtype=np.int64)
    V = np.ones((1,) * (2 * n), dtype=bool)
    for k, f in enumerate(factors):
        idx = np.arange(f.cells)[:, None] + np.arange(f.degree + 1)[None, :] - f.bc_order
        ok = (idx >= 0) & (idx < f.dim)
        shape = [1] * (2 * n)
        shape[k] = f.cells
        shape[n + k] = f.degree + 1
        R = R + np.where(ok, idx, 0).reshape(shape) * strides[k]
        V = V & ok.reshape(shape)
    return R, V


def _grid_coords(tables, n_coords, axial_zero_count):
    """Coordinate arrays for coefficient evaluation on the quadrature grid.

    The first axial_zero_count coordinates are pinned to 0.0 (the limit
    problem evaluates fields on the cross-section only); remaining coordinates
    come from the tensor grid of per-axis quadrature points.
    """
    axes = [t[0] for t in tables]
    grids = np.meshgrid(*axes, indexing="ij") if axes else []
    coords = [0.0] * axial_zero_count + list(grids)
    if len(coords) != n_coords:
        raise AssemblyError("coordinate count mismatch in assembly")
    return tuple(coords), tuple(len(a) for a in axes)


def _assemble(spec: ProblemSpec, factors, pairs, axial_zero_count: int):
    n = len(factors)
    if n > len(_CELL_LETTERS):
        raise AssemblyError("assembly supports at most 3 tensor axes")
    degree = max(f.degree for f in factors)
    points_per_cell = degree + 1
    nders = min(spec.m, degree)
    tables = _local_tables(factors, nders, points_per_cell)

    coords, grid_shape = _grid_coords(tables, spec.n, axial_zero_count)
    W = np.ones(())
    for _, wts, _B in tables:
        W = np.multiply.outer(W, wts)  # shape (c1, q1, c2, q2, ...)
    cq_shape = W.shape

    R, V = _index_tensors(factors)
    loc_shape = tuple(f.degree + 1 for f in factors)
    cells_shape = tuple(f.cells for f in factors)
    rows_view = R.reshape(cells_shape + loc_shape + (1,) * n)
    cols_view = R.reshape(cells_shape + (1,) * n + loc_shape)
    vrows = V.reshape(cells_shape + loc_shape + (1,) * n)
    vcols = V.reshape(cells_shape + (1,) * n + loc_shape)
    pair_mask = (vrows & vcols).ravel()
    full_shape = cells_shape + loc_shape + loc_shape
    rows_flat = np.broadcast_to(rows_view, full_shape).ravel()[pair_mask]
    cols_flat = np.broadcast_to(cols_view, full_shape).ravel()[pair_mask]

    cw_sub = "".join(c + q for c, q in zip(_CELL_LETTERS[:n], _QUAD_LETTERS[:n]))
    out_sub = _CELL_LETTERS[:n] + _ROW_LETTERS[:n] + _COL_LETTERS[:n]

    data_parts = []
    for alpha, beta, coef in pairs:
        vals = np.broadcast_to(coef(coords), grid_shape)
        CW = W * vals.reshape(cq_shape)
        ops = []
        subs = []
        for k in range(n):
            B = tables[k][2]
            # trial function carries alpha, test function carries beta
            ops.append(B[:, :, alpha[k], :])
            subs.append(_CELL_LETTERS[k] + _QUAD_LETTERS[k] + _COL_LETTERS[k])
            ops.append(B[:, :, beta[k], :])
            subs.append(_CELL_LETTERS[k] + _QUAD_LETTERS[k] + _ROW_LETTERS[k])
        ops.append(CW)
        subs.append(cw_sub)
        E = np.einsum(",".join(subs) + "->" + out_sub, *ops, optimize=True)
        data_parts.append(E.ravel()[pair_mask])

    data = np.add.reduce(data_parts)
    ndofs = int(np.prod([f.dim for f in factors]))
    A = sp.coo_matrix((data, (rows_flat, cols_flat)), shape=(ndofs, ndofs)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise AssemblyError("assembled matrix contains non-finite entries")

    # rhs: forcing against test functions
    f_vals = np.broadcast_to(spec.forcing(coords), grid_shape)
    FW = W * f_vals.reshape(cq_shape)
    ops = []
    subs = []
    for k in range(n):
        ops.append(tables[k][2][:, :, 0, :])
        subs.append(_CELL_LETTERS[k] + _QUAD_LETTERS[k] + _ROW_LETTERS[k])
    ops.append(FW)
    subs.append(cw_sub)
    Fv = np.einsum(",".join(subs) + "->" + _CELL_LETTERS[:n] + _ROW_LETTERS[:n], *ops,
                   optimize=True)
    rhs = np.zeros(ndofs)
    vflat = V.ravel()
    np.add.at(rhs, R.ravel()[vflat], Fv.ravel()[vflat])
    if not np.all(np.isfinite(rhs)):
        raise AssemblyError("assembled rhs contains non-finite entries")

    symmetric = spec.symmetric
    if symmetric:
        A = ((A + A.T) * 0.5).tocsr()
        A.sort_indices()
    return A, rhs, symmetric


def _validate_degree(spec: ProblemSpec, degree: int) -> int:
    if degree is None:
        degree = spec.m + 1
    if degree < spec.m:
        raise AssemblyError(
            f"degree {degree} cannot conform for derivative order m={spec.m}"
        )
    return degree


def assemble_cylinder(
    spec: ProblemSpec, ell: float, resolution: int, degree: int | None = None
) -> AssembledSystem:
    """Full problem on (-ell, ell)^p x omega with Dirichlet order m."""
    degree = _validate_degree(spec, degree)
    if ell <= 0:
        raise AssemblyError(f"half-length must be positive, got {ell}")
    extents = [(-float(ell), float(ell))] * spec.p + list(spec.omega)
    factors = [
        SplineBasis1D(lo, hi, cells_for((lo, hi), resolution), degree, spec.m)
        for (lo, hi) in extents
    ]
    pairs = [
        (alpha, beta, spec.coefficients[(alpha, beta)])
        for (alpha, beta) in sorted(spec.coefficients)
    ]
    A, rhs, symmetric = _assemble(spec, factors, pairs, axial_zero_count=0)
    return AssembledSystem(A, rhs, TensorBasis(factors), spec, symmetric, ell=float(ell))


def assemble_limit(
    spec: ProblemSpec, resolution: int, degree: int | None = None
) -> AssembledSystem:
    """Cross-section problem: pairs with purely cross-sectional indices."""
    degree = _validate_degree(spec, degree)
    factors = [
        SplineBasis1D(lo, hi, cells_for((lo, hi), resolution), degree, spec.m)
        for (lo, hi) in spec.omega
    ]
    pairs = [
        (alpha[spec.p :], beta[spec.p :], spec.coefficients[(alpha, beta)])
        for (alpha, beta) in sorted(spec.limit_pairs())
    ]
    if not pairs:
        raise AssemblyError("limit problem has no coefficient pairs")
    A, rhs, symmetric = _assemble(spec, factors, pairs, axial_zero_count=spec.p)
    return AssembledSystem(A, rhs, TensorBasis(factors), spec, symmetric, ell=None)


def export_triplets(matrix, path) -> None:
    """Debug dump: one 'row col value' line per stored entry, CSR order."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
