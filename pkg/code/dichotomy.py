"""
连接轨道上的变分方程与伴随变分方程：有界解基、约化的微分代数方程及其渐近矩阵。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from families import MichelsonParams, four_d_jacobian, four_d_translated_rhs, michelson_jacobian
from hamiltonian import first_integral_gradient_4d
from numerics import ConstraintViolation, PreconditionError, ToleranceConfig, Trajectory, integrate
from orbits import HomoclinicProfile, KuramotoOrbit, linearization_4d

logger = logging.getLogger(__name__)

# φ₁, φ₃, ψ₂ 为奇函数；φ₂, ψ₁, ψ₃ 为偶函数
PHI_PARITY = (-1, 1, -1)
PSI_PARITY = (1, -1, 1)


@dataclass(frozen=True)
class AdjointBasis:
    solutions: list
    initial_conditions: list
    labels: tuple = ("phi", "psi")

    @property
    def d(self) -> int:
        return len(self.solutions)

    def __getitem__(self, label: str) -> Trajectory:
        return self.solutions[self.labels.index(label)]


# ---------- Michelson 伴随方程 ----------

def michelson_adjoint_rhs(orbit: KuramotoOrbit) -> Callable:
    """w′ = −Df(p(t))ᵀw = (p₁w₃, −w₁ + w₃, −w₂)。"""

    def rhs(t, w):
        p1 = orbit.p(t)[0]
        return np.array([p1 * w[2], -w[0] + w[2], -w[1]])

    return rhs


def flow_projector(orbit: KuramotoOrbit, drift_tol: float = 1e-6) -> Callable:
    """把 w 投影回 f(p(t)) 的正交补；投影前的相对漂移超过 drift_tol 时报错。"""

    def project(t, w):
        f = orbit.p_dot(t)
        ff = f @ f
        if ff == 0.0:
            return w
        inner = w @ f
        scale = np.linalg.norm(w) * np.sqrt(ff)
        if scale > 0 and abs(inner) / scale > drift_tol:
            raise ConstraintViolation(f"t={t:.6g} 处正交性漂移 {abs(inner) / scale:.2e}，容差过松")
        return w - (inner / ff) * f

    return project


def michelson_initial_conditions(orbit: Optional[KuramotoOrbit] = None):
    """φ(0) = (0, −1, 0)，ψ(0) = (1 − c_k²/p₂(0), 0, 1)。"""
    orbit = orbit or KuramotoOrbit()
    p2_0 = orbit.p(0.0)[1]
    phi0 = np.array([0.0, -1.0, 0.0])
    psi0 = np.array([1.0 - orbit.c_k**2 / p2_0, 0.0, 1.0])
    return phi0, psi0


def adjoint_basis_michelson(T: float = 20.0, tol: Optional[ToleranceConfig] = None) -> AdjointBasis:
    """
    从两个初值分别向前积分到 T、向后积分到 −T，每一步都投影回 f(p(t))^⊥，抑制无界模态。
    """
    if T < 20.0:
        raise PreconditionError(f"伴随解的积分区间 T={T} 过短（至少 20）")
    tol = tol or ToleranceConfig.tight()
    orbit = KuramotoOrbit()
    rhs = michelson_adjoint_rhs(orbit)
    project = flow_projector(orbit)
    solutions = []
    initial = list(michelson_initial_conditions(orbit))
    for w0 in initial:
        backward = integrate(rhs, w0, (0.0, -T), tol, project=project)
        forward = integrate(rhs, w0, (0.0, T), tol, project=project)
        solutions.append(Trajectory.join(backward, forward))
    logger.info("Michelson 伴随解基完成：T=%g，节点数 %s", T, [len(s) for s in solutions])
    return AdjointBasis(solutions, initial)


def orthogonality_defect(traj: Trajectory, orbit: Optional[KuramotoOrbit] = None) -> float:
    orbit = orbit or KuramotoOrbit()
    f = orbit.p_dot(traj.t)
    return float(np.max(np.abs(np.sum(traj.x * f, axis=1))))


def adjoint_residual(traj: Trajectory, jacobian_along: Callable, h: float = 1e-5) -> float:
    """
    节点处 ‖w′ + Df(p(t))ᵀw‖∞，导数取稠密插值的中心差分。
    jacobian_along(t) 返回 Df(p(t))。
    """
    lo, hi = traj.span
    t = traj.t[(traj.t > lo + h) & (traj.t < hi - h)]
    deriv = (traj(t + h) - traj(t - h)) / (2.0 * h)
    worst = 0.0
    for k, tk in enumerate(t):
        jac = jacobian_along(tk)
        worst = max(worst, float(np.max(np.abs(deriv[k] + jac.T @ traj.x[np.searchsorted(traj.t, tk)]))))
    return worst


def michelson_jacobian_along(orbit: Optional[KuramotoOrbit] = None) -> Callable:
    orbit = orbit or KuramotoOrbit()
    params = MichelsonParams.kuramoto()
    return lambda t: michelson_jacobian(orbit.p(t), params)


# ---------- 四维同宿轨道 ----------

def adjoint_psi_4d(profile: HomoclinicProfile) -> Trajectory:
    """沿同宿轨道的有界伴随解 ψ(t) = ∇H(p(t))，定义在 [−T, T] 上。"""
    eta3 = -profile.P
    orbit = profile.full_orbit()
    psi = first_integral_gradient_4d(orbit.x.T, eta3).T
    return Trajectory(orbit.t, psi, orbit.order, lambda s: first_integral_gradient_4d(orbit(s).T, eta3))


def variational_phi_4d(profile: HomoclinicProfile) -> Trajectory:
    """变分方程的有界解 f(p(t))。"""
    params = profile.params
    orbit = profile.full_orbit()
    phi = four_d_translated_rhs(orbit.x.T, params).T
    return Trajectory(orbit.t, phi, orbit.order, lambda s: four_d_translated_rhs(orbit(s).T, params))


def four_d_jacobian_along(profile: HomoclinicProfile) -> Callable:
    orbit = profile.full_orbit()
    params = profile.params
    return lambda t: four_d_jacobian(orbit(t), params)


# ---------- 有界解计数 ----------

def manifold_dimensions(jacobian: np.ndarray, tol: float = 1e-10) -> tuple[int, int]:
    """(dim Wˢ, dim Wᵘ)，按特征值实部的符号计数。"""
    eig = np.linalg.eigvals(np.asarray(jacobian, dtype=float))
    if np.any(np.abs(eig.real) < tol):
        raise PreconditionError("平衡点不是双曲的")
    return int(np.sum(eig.real < 0)), int(np.sum(eig.real > 0))


def count_bounded_solutions(n: int, dim_ws: int, dim_wu: int, intersection_dim: int = 1) -> int:
    """非退化连接轨道上伴随方程线性无关有界解的个数。"""
    d = n - dim_ws - dim_wu + intersection_dim
    if d < 1:
        raise PreconditionError(f"维数组合 (n={n}, {dim_ws}, {dim_wu}) 不对应非退化连接")
    return d


def bounded_solution_count_michelson() -> int:
    # 轨道从 Q₋ 出发趋于 Q₊
    params = MichelsonParams.kuramoto()
    q_minus, q_plus = KuramotoOrbit().limits()
    dim_ws, _ = manifold_dimensions(michelson_jacobian(q_plus, params))
    _, dim_wu = manifold_dimensions(michelson_jacobian(q_minus, params))
    return count_bounded_solutions(3, dim_ws, dim_wu)


def bounded_solution_count_4d(P: float = -2.0) -> int:
    dim_ws, dim_wu = manifold_dimensions(linearization_4d(P))
    return count_bounded_solutions(4, dim_ws, dim_wu)


# ---------- 约化的微分代数方程 ----------

@dataclass(frozen=True)
class DaeSystem:
    """
    A(t)v′ = B(t)v，v = (w₃, −w₂)，A = diag(1, p₂)，B = [[0, 1], [p₁²/2 − c², p₃]]。
    """

    orbit: KuramotoOrbit = field(default_factory=KuramotoOrbit)
    singular_times: tuple = ()
    Q: np.ndarray = field(default=None, repr=False)
    P_eig: np.ndarray = field(default=None, repr=False)
    a: float = 0.0

    def A(self, t) -> np.ndarray:
        return np.diag([1.0, float(self.orbit.p(t)[1])])

    def B(self, t) -> np.ndarray:
        p = self.orbit.p(t)
        return np.array([[0.0, 1.0], [float(self.orbit.half_p1_squared_minus_c2(t)), p[2]]])

    def _ratio_terms(self, t):
        s, u = self.orbit.tanh_sech2(t)
        return s, u, 24.0 - 33.0 * u

    def reduced_matrix(self, t) -> np.ndarray:
        """A⁻¹B，公因子 sech²(βt) 已约去。"""
        alpha, beta = self.orbit.alpha, self.orbit.beta
        s, u, denom = self._ratio_terms(t)
        if abs(denom) < 1e-14:
            raise PreconditionError(f"t={t} 是 A(t) 的奇异时刻")
        m21 = alpha / beta * (-24.0 + 82.5 * u - 60.5 * u**2) / denom
        m22 = beta * s * (-48.0 + 132.0 * u) / denom
        return np.array([[0.0, 1.0], [m21, m22]])

    def r_matrix(self, t) -> np.ndarray:
        """R(t) = A⁻¹B − Q，不经过相减，直接按 sech² 的幂展开。"""
        alpha, beta = self.orbit.alpha, self.orbit.beta
        s, u, denom = self._ratio_terms(t)
        r21 = alpha / beta * u * (49.5 - 60.5 * u) / denom
        r22 = beta * u * (48.0 / (1.0 + s) + 132.0 * s - 66.0) / denom
        return np.array([[0.0, 0.0], [r21, r22]])

    def r_norm(self, t) -> float:
        return float(np.linalg.norm(self.r_matrix(t), np.inf))

    def reduced_rhs(self, t, v):
        return self.reduced_matrix(t) @ v

    def lift(self, t, v) -> np.ndarray:
        """由 v 和正交约束恢复三维伴随解 w。"""
        p = self.orbit.p(t)
        forcing = -self.orbit.half_p1_squared_minus_c2(t) - p[1]  # c² − p₂ − p₁²/2
        w3, w2 = v[0], -v[1]
        w1 = (-p[2] * w2 - forcing * w3) / p[1]
        return np.array([w1, w2, w3])

    @staticmethod
    def drop(w) -> np.ndarray:
        return np.array([w[2], -w[1]])


def dae_build() -> DaeSystem:
    orbit = KuramotoOrbit()
    beta = orbit.beta
    t_hat = float(np.arctanh(np.sqrt(3.0 / 11.0)) / beta)
    Q = np.array([[0.0, 1.0], [-30.0 / 19.0, -np.sqrt(11.0 / 19.0)]])
    root = np.sqrt(2071.0)
    P_eig = np.array([
        [(-np.sqrt(209.0) - 1j * root) / 60.0, (-np.sqrt(209.0) + 1j * root) / 60.0],
        [1.0, 1.0],
    ])
    a = -np.sqrt(209.0) / 38.0
    return DaeSystem(orbit, (-t_hat, t_hat), Q, P_eig, a)


def q_eigenvalues() -> np.ndarray:
    """Q 的特征值 (−√209 ± i√2071)/38。"""
    return np.array([(-np.sqrt(209.0) + 1j * np.sqrt(2071.0)) / 38.0, (-np.sqrt(209.0) - 1j * np.sqrt(2071.0)) / 38.0])


def r_norm(t) -> float:
    return dae_build().r_norm(t)


def r_norm_monotone(t0: float, t1: float, num: int = 2001) -> bool:
    dae = dae_build()
    values = np.array([dae.r_norm(t) for t in np.linspace(t0, t1, num)])
    return bool(np.all(np.diff(values) < 0))


def _segments(t0: float, t1: float, singular: Sequence[float], half_width: float):
    """把 [t0, t1] 按奇异时刻切分，返回 (起点, 终点, 是否提升到三维)。"""
    lo, hi = min(t0, t1), max(t0, t1)
    cuts = []
    for ts in singular:
        a, b = ts - half_width, ts + half_width
        if b <= lo or a >= hi:
            continue
        cuts.append((max(a, lo), min(b, hi)))
    pieces = []
    cursor = lo
    for a, b in sorted(cuts):
        if a > cursor:
            pieces.append((cursor, a, False))
        pieces.append((a, b, True))
        cursor = b
    if cursor < hi:
        pieces.append((cursor, hi, False))
    if t1 < t0:
        pieces = [(b, a, lifted) for a, b, lifted in reversed(pieces)]
    return pieces


def dae_solve_reduced(
    v0,
    span: tuple[float, float],
    tol: Optional[ToleranceConfig] = None,
    dae: Optional[DaeSystem] = None,
    half_width: float = 0.25,
) -> Trajectory:
    """
    远离奇异时刻时显式积分 v′ = A⁻¹Bv；穿过 ±t̂ 时提升为正则的三维伴随方程，再落回二维。
    """
    tol = tol or ToleranceConfig.tight()
    dae = dae or dae_build()
    t0, t1 = float(span[0]), float(span[1])
    for ts in dae.singular_times:
        if abs(t0 - ts) < half_width:
            raise PreconditionError(f"起始时刻 {t0} 距奇异时刻 {ts:.6g} 过近")
    adjoint = michelson_adjoint_rhs(dae.orbit)
    project = flow_projector(dae.orbit)
    state = np.asarray(v0, dtype=float)
    pieces = []
    for a, b, lifted in _segments(t0, t1, dae.singular_times, half_width):
        if lifted:
            w = integrate(adjoint, dae.lift(a, state), (a, b), tol, project=project)
            v_nodes = np.column_stack([w.x[:, 2], -w.x[:, 1]])
            piece = Trajectory(w.t, v_nodes, w.order, lambda s, w=w: np.vstack([w(s).T[2], -w(s).T[1]]))
            end = w(b)
            f = dae.orbit.p_dot(b)
            defect = abs(end @ f) / max(np.linalg.norm(end) * np.linalg.norm(f), 1e-300)
            if defect > 1e-6:
                raise ConstraintViolation(f"t={b:.6g} 处落回二维时约束残差 {defect:.2e}")
            state = DaeSystem.drop(end)
        else:
            piece = integrate(dae.reduced_rhs, state, (a, b), tol)
            state = piece(b)
        pieces.append(piece)
    pieces.sort(key=lambda tr: tr.t[0])
    result = pieces[0]
    for piece in pieces[1:]:
        result = Trajectory.join(result, piece)
    logger.info("约化方程在 [%g, %g] 上求解完成，分段 %d", t0, t1, len(pieces))
    return result
