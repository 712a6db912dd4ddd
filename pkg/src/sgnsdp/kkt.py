"""KKT residual, merit function, tangent frames and the stratum Jacobian.

The residual is F(z) = (F1, F2) with F1 = grad f(x) + adjoint_dg(x, y)
and F2 = -g(x) + PSD-projection of G(z), where G(z) = g(x) + y.  The
merit is phi(z) = ||F(z)||^2 / 2.  On the stratum fixed by an IED of
G(z), F is smooth and its differential in the coordinates (v_x, H) of
the tangent-space isomorphism is the block operator

    [ Hess_xx L - dg dg*   dg  ]
    [       -dg*           xi  ]

assembled here as a dense matrix.  All tangent inner products are taken
in (v_x, H) coordinates with the Frobenius product on the matrix part;
the matrix rows of the assembled Jacobian live in the full orthonormal
basis of the symmetric matrices.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import NlsdpProblem, PrimalDualPoint
from .spectral import (
    IED,
    frob_inner,
    make_ied,
    normal_project_pi2,
    nsd_part,
    project_psd,
    psd_part,
    stratum_differential,
    sym,
    sym_to_vec,
    tangent_pairs,
)

_SQRT2 = np.sqrt(2.0)


def big_g(problem: NlsdpProblem, z: PrimalDualPoint) -> np.ndarray:
    """G(z) = g(x) + y, the matrix whose eigenstructure drives everything."""
    return problem.eval_g(z.x) + z.y


@dataclass(frozen=True)
class KktResidual:
    """Residual snapshot at a point, with G(z) and its IED cached."""

    f1: np.ndarray
    f2: np.ndarray
    g_matrix: np.ndarray
    ied: IED

    @property
    def phi(self) -> float:
        return 0.5 * (float(np.sum(self.f1**2)) + float(np.sum(self.f2**2)))

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.f1**2) + np.sum(self.f2**2)))

    def as_vec(self) -> np.ndarray:
        """Coefficients of F in (R^m, orthonormal symmetric basis)."""
        return np.concatenate([self.f1, sym_to_vec(self.f2)])


def residual(
    problem: NlsdpProblem, z: PrimalDualPoint, zero_tol: float | None = None
) -> KktResidual:
    """Evaluate the KKT residual; phi(z) is available as ``.phi``."""
    g_val = problem.eval_g(z.x)
    big = sym(g_val + z.y)
    ied = make_ied(big, zero_tol)
    f1 = problem.grad_f(z.x) + problem.adjoint_dg(z.x, z.y)
    f2 = -g_val + project_psd(ied)
    return KktResidual(f1=f1, f2=sym(f2), g_matrix=big, ied=ied)


# ---------------------------------------------------------------------------
# tangent coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TangentFrame:
    """Coordinate frame for the lifted stratum at a fixed point.

    Carries the tangent-pair enumeration of the matrix part and the
    isomorphism between ambient pairs (v_x, v_y) and coordinates
    (v_x, H) with H = apply_dg(x, v_x) + v_y tangent at G(z).
    """

    problem: NlsdpProblem
    x: np.ndarray
    ied: IED

    @cached_property
    def pairs(self) -> np.ndarray:
        return tangent_pairs(self.ied)

    @property
    def dim_tangent(self) -> int:
        return self.pairs.shape[0]

    @property
    def dim(self) -> int:
        return self.problem.m + self.dim_tangent

    def matrix_from_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Tangent matrix with the given orthonormal-basis coefficients."""
        n = self.ied.n
        ht = np.zeros((n, n))
        k, l = self.pairs[:, 0], self.pairs[:, 1]
        off = k != l
        ht[k[off], l[off]] = coeffs[off] / _SQRT2
        ht[l[off], k[off]] = ht[k[off], l[off]]
        diag = ~off
        ht[k[diag], k[diag]] = coeffs[diag]
        return sym(self.ied.basis @ ht @ self.ied.basis.T)

    def coeffs_from_matrix(self, h: np.ndarray) -> np.ndarray:
        """Coefficients of the tangent component of ``h``."""
        ht = self.ied.basis.T @ h @ self.ied.basis
        k, l = self.pairs[:, 0], self.pairs[:, 1]
        vals = ht[k, l] * np.where(k == l, 1.0, _SQRT2)
        return vals

    def to_coords(self, v_x: np.ndarray, v_y: np.ndarray):
        """phi_z: ambient (v_x, v_y) -> (v_x, H)."""
        return v_x, self.problem.apply_dg(self.x, v_x) + v_y

    def from_coords(self, v_x: np.ndarray, h: np.ndarray):
        """phi_z^{-1}: (v_x, H) -> ambient (v_x, v_y)."""
        return v_x, h - self.problem.apply_dg(self.x, v_x)


def tangent_coords(
    problem: NlsdpProblem, z: PrimalDualPoint, ied: IED
) -> TangentFrame:
    """Coordinate frame at ``z``; ``ied`` must decompose G(z)."""
    return TangentFrame(problem=problem, x=z.x.copy(), ied=ied)


@dataclass(frozen=True)
class TangentVector:
    """A tangent direction in coordinate form (v_x, coefficient vector)."""

    frame: TangentFrame
    v_x: np.ndarray
    coeffs: np.ndarray

    @property
    def signature(self) -> tuple:
        return (self.frame.ied.n, self.frame.ied.p, self.frame.ied.q)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.frame.matrix_from_coeffs(self.coeffs)

    def ambient(self):
        """(v_x, v_y) with v_y = H - apply_dg(x, v_x)."""
        return self.frame.from_coords(self.v_x, self.matrix)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.v_x**2) + np.sum(self.coeffs**2)))

    def scaled(self, t: float) -> "TangentVector":
        return TangentVector(frame=self.frame, v_x=t * self.v_x, coeffs=t * self.coeffs)

    def as_vec(self) -> np.ndarray:
        return np.concatenate([self.v_x, self.coeffs])


# ---------------------------------------------------------------------------
# the stratum Jacobian
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssembledJacobian:
    """Dense differential of F along the stratum, in frame coordinates.

    Columns follow (e_1..e_m, tangent pairs); rows are the m residual
    components followed by the orthonormal coordinates of the matrix
    residual.  ``gram`` caches J^T J for the regularized normal
    equations.
    """

    matrix: np.ndarray
    frame: TangentFrame

    @cached_property
    def gram(self) -> np.ndarray:
        return self.matrix.T @ self.matrix

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def apply_adjoint(self, w: np.ndarray) -> np.ndarray:
        return self.matrix.T @ w

    def sigma_min(self) -> float:
        if self.matrix.shape[1] == 0:
            return np.inf
        return float(np.linalg.svd(self.matrix, compute_uv=False)[-1])


def assemble_dF(
    problem: NlsdpProblem, z: PrimalDualPoint, frame: TangentFrame
) -> AssembledJacobian:
    """Assemble the block operator column by column.

    A coordinate direction (v_x, H) maps to
    (Hess L v_x - dg(dg* v_x) + dg H, -dg* v_x + xi(H)).
    """
    ied = frame.ied
    m, n = problem.m, ied.n
    n_sym = n * (n + 1) // 2
    cols = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        dg_e = problem.apply_dg(z.x, e)
        top = problem.apply_hess_lagrangian(z.x, z.y, e) - problem.adjoint_dg(
            z.x, dg_e
        )
        bottom = sym_to_vec(-dg_e)
        cols.append(np.concatenate([top, bottom]))
    for idx in range(frame.dim_tangent):
        coeffs = np.zeros(frame.dim_tangent)
        coeffs[idx] = 1.0
        h = frame.matrix_from_coeffs(coeffs)
        top = problem.adjoint_dg(z.x, h)
        bottom = sym_to_vec(stratum_differential(ied, h))
        cols.append(np.concatenate([top, bottom]))
    matrix = (
        np.stack(cols, axis=1) if cols else np.zeros((m + n_sym, 0))
    )
    return AssembledJacobian(matrix=matrix, frame=frame)


# ---------------------------------------------------------------------------
# directional derivative of the merit function
# ---------------------------------------------------------------------------

def dir_derivative_phi(
    problem: NlsdpProblem,
    z: PrimalDualPoint,
    v_x: np.ndarray,
    v_y: np.ndarray,
    res: KktResidual | None = None,
    jac: AssembledJacobian | None = None,
) -> float:
    """One-sided directional derivative of phi at ``z`` along an ambient direction.

    Splits H = apply_dg(x, v_x) + v_y into its tangent part H1 and normal
    part H2.  The tangent part pairs with the pulled-back residual
    J^T r; the normal part contributes through the two one-sided cone
    projections, which is where the nonsmoothness of phi lives:

        phi'(z; v) = <J^T r, (v_x, H1)>
                     + <dg F1, NSD(H2)> + <dg F1 + F2, PSD(H2)>.
    """
    if res is None:
        res = residual(problem, z)
    ied = res.ied
    if jac is None:
        frame = tangent_coords(problem, z, ied)
        jac = assemble_dF(problem, z, frame)
    else:
        frame = jac.frame
    h = problem.apply_dg(z.x, v_x) + v_y
    h2 = normal_project_pi2(ied, h)
    h1 = h - h2
    u1 = np.concatenate([v_x, frame.coeffs_from_matrix(h1)])
    pulled = jac.apply_adjoint(res.as_vec())
    term_tangent = float(pulled @ u1)
    dg_f1 = problem.apply_dg(z.x, res.f1)
    term_neg = frob_inner(dg_f1, nsd_part(h2))
    term_pos = frob_inner(dg_f1 + res.f2, psd_part(h2))
    return term_tangent + term_neg + term_pos
