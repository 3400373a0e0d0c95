"""
连接轨道：Michelson 系统的 Kuramoto 异宿轨道（闭式），以及四维极限族中偶对称同宿轨道的数值计算与参数延拓。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_bvp
from scipy.linalg import schur

from families import ALPHA, BETA, C_K, FourDParams, four_d_translated_rhs
from numerics import ConvergenceError, NumericalError, PreconditionError, SingularJacobian, ToleranceConfig, Trajectory

logger = logging.getLogger(__name__)

P_WINDOW = (-3.0, -1.5)
# 四阶方程在 P = -13/6 有闭式同宿解 (35/24)·sech⁴(t/√24)
P_EXACT = -13.0 / 6.0
HOMOCLINIC_PARITY = (1, -1, 1, -1)


def _sech2(beta_t):
    # sech²(z) = 4e^{-2|z|}/(1+e^{-2|z|})²，大 |z| 时不溢出
    e = np.exp(-2.0 * np.abs(beta_t))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class KuramotoOrbit:
    """c = c_k 时 Michelson 系统的显式异宿解 p(t)。"""

    alpha: float = ALPHA
    beta: float = BETA
    c_k: float = C_K

    def __post_init__(self):
        if abs(self.c_k**2 - 2.0 * self.alpha**2) > 1e-14 or abs(self.alpha / self.beta - 30.0 / 19.0) > 1e-14:
            raise PreconditionError("Kuramoto 常数不满足 c_k² = 2α²、α/β = 30/19")

    def tanh_sech2(self, t):
        t = np.asarray(t, dtype=float)
        return np.tanh(self.beta * t), _sech2(self.beta * t)

    def p(self, t) -> np.ndarray:
        """(p₁, p₁′, p₁″)，形状为 t.shape + (3,)。"""
        a, b = self.alpha, self.beta
        s, u = self.tanh_sech2(t)
        p1 = a * s * (2.0 - 11.0 * u)
        p2 = a * b * u * (24.0 - 33.0 * u)
        p3 = a * b**2 * u * s * (-48.0 + 132.0 * u)
        return np.stack([p1, p2, p3], axis=-1)

    def p_dot(self, t) -> np.ndarray:
        a, b = self.alpha, self.beta
        s, u = self.tanh_sech2(t)
        p = self.p(t)
        p4 = a * b**3 * u * (96.0 - 672.0 * u + 660.0 * u**2)
        return np.stack([p[..., 1], p[..., 2], p4], axis=-1)

    def half_p1_squared_minus_c2(self, t) -> np.ndarray:
        """p₁²/2 − c_k²，按 sech² 展开避免相消。"""
        _, u = self.tanh_sech2(t)
        return self.alpha**2 * u * (-24.0 + 82.5 * u - 60.5 * u**2)

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([-2.0 * self.alpha, 0.0, 0.0]), np.array([2.0 * self.alpha, 0.0, 0.0])

    def trajectory(self, t_grid) -> Trajectory:
        t_grid = np.asarray(t_grid, dtype=float)
        return Trajectory(t_grid, self.p(t_grid), order=0, interpolant=lambda s: self.p(s).T)


def kuramoto_p(t) -> np.ndarray:
    return KuramotoOrbit().p(t)


def kuramoto_p_dot(t) -> np.ndarray:
    return KuramotoOrbit().p_dot(t)


# ---------- 四维同宿轨道 ----------

@dataclass(frozen=True)
class HomoclinicProfile:
    """
    u'''' + P u'' + u − u² = 0 的偶同宿解在 [0, T] 上的轨道 (u, u′, u″, u‴)。
    """

    P: float
    u0: float
    u2_0: float
    trajectory: Trajectory
    T: float
    boundary_residual: float

    @property
    def params(self) -> FourDParams:
        return FourDParams.from_P(self.P)

    def full_orbit(self) -> Trajectory:
        # u 为偶函数，[-T, 0) 段由对称性给出
        return self.trajectory.reflect(HOMOCLINIC_PARITY)

    def to_frame(self):
        return self.trajectory.to_frame(["u", "du", "d2u", "d3u"])


def linearization_4d(P: float) -> np.ndarray:
    jac = np.eye(4, k=1)
    jac[3] = [-1.0, 0.0, -P, 0.0]
    return jac


def stable_decay_rate(P: float) -> float:
    """原点线性化稳定特征值实部绝对值的最小值。"""
    roots = np.roots([1.0, 0.0, P, 0.0, 1.0])
    return float(np.min(np.abs(roots.real[roots.real < 0]))) if np.any(roots.real < 0) else 0.0


def unstable_left_subspace(A: np.ndarray) -> np.ndarray:
    """
    Aᵀ 对应不稳定特征值的不变子空间的正交基（列），即稳定子空间的正交补。
    特征值重根时仍然适用。
    """
    T, Z, sdim = schur(A.T, output="real", sort="rhp")
    return Z[:, :sdim]


def sech4_seed(P: float) -> Callable:
    """
    以 (35/24)·sech⁴(kt) 为初始猜测，k 取稳定衰减率的四分之一（P = -13/6 时即为精确解）。
    """
    k = stable_decay_rate(P) / 4.0
    amp = 35.0 / 24.0

    def seed(t):
        t = np.asarray(t, dtype=float)
        th = np.tanh(k * t)
        S = _sech2(k * t)
        u = amp * S**2
        du = -4.0 * amp * k * S**2 * th
        d2u = amp * k**2 * (16.0 * S**2 - 20.0 * S**3)
        d3u = amp * k**3 * th * (-64.0 * S**2 + 120.0 * S**3)
        return np.vstack([u, du, d2u, d3u])

    return seed


def exact_homoclinic(t) -> np.ndarray:
    """P = -13/6 时的闭式同宿解，形状 (4, len(t))。"""
    return sech4_seed(P_EXACT)(t)


def shoot_homoclinic_4d(
    P: float,
    T: float = 25.0,
    tol: Optional[ToleranceConfig] = None,
    seed: Optional[Callable] = None,
    boundary_tol: float = 1e-10,
    grid_step: float = 0.0025,
) -> HomoclinicProfile:
    """
    计算 [0, T] 上的偶同宿解：t=0 处 u′ = u‴ = 0，t=T 处状态落在原点线性化的稳定子空间内
    （向不稳定左不变子空间的投影为零）。

    长区间上的单纯打靶会把误差放大 e^T 倍，这里用 solve_bvp 做配置法求解同一个两点边值问题，
    并以 z = e^{γt}x（γ 为最慢衰减率的一半）加权，使尾部保持相对精度。

    Parameters:
    - P: 四阶方程参数，要求位于 [-3, -1.5]
    - T: 截断时间
    - seed: 可选的初始猜测 seed(t) -> (4, m)
    """
    tol = tol or ToleranceConfig()
    if not P_WINDOW[0] <= P <= P_WINDOW[1]:
        raise PreconditionError(f"P={P} 不在可用区间 {P_WINDOW} 内")
    rate = stable_decay_rate(P)
    if rate < 1e-3:
        raise PreconditionError(f"P={P} 时原点不是双曲的")
    if T < 10.0:
        raise PreconditionError(f"截断时间 T={T} 过短")
    if np.exp(-rate * T) > 1e3 * boundary_tol:
        logger.warning("T=%g 时尾部 e^{-rT}=%.2e 相对边界容差 %.1e 偏大", T, np.exp(-rate * T), boundary_tol)

    eta3 = -P
    gamma = rate / 2.0
    A = linearization_4d(P)
    W = unstable_left_subspace(A)
    if W.shape[1] != 2:
        raise PreconditionError(f"P={P} 时不稳定子空间维数为 {W.shape[1]}，应为 2")

    def fun(t, z):
        return np.vstack([
            gamma * z[0] + z[1],
            gamma * z[1] + z[2],
            gamma * z[2] + z[3],
            gamma * z[3] - z[0] + eta3 * z[2] + np.exp(-gamma * t) * z[0] ** 2,
        ])

    def fun_jac(t, z):
        jac = np.zeros((4, 4, t.size))
        for i in range(4):
            jac[i, i] = gamma
        for i in range(3):
            jac[i, i + 1] = 1.0
        jac[3, 0] = -1.0 + 2.0 * np.exp(-gamma * t) * z[0]
        jac[3, 2] = eta3
        return jac

    def bc(za, zb):
        return np.concatenate([[za[1], za[3]], W.T @ zb])

    dbc_a = np.zeros((4, 4))
    dbc_a[0, 1] = 1.0
    dbc_a[1, 3] = 1.0
    dbc_b = np.zeros((4, 4))
    dbc_b[2:] = W.T

    def bc_jac(za, zb):
        return dbc_a, dbc_b

    mesh = np.linspace(0.0, T, 801)
    guess = (seed or sech4_seed(P))(mesh) * np.exp(gamma * mesh)
    result = solve_bvp(
        fun, bc, mesh, guess, fun_jac=fun_jac, bc_jac=bc_jac,
        tol=max(tol.rel_tol * 10.0, 1e-10), bc_tol=boundary_tol, max_nodes=200_000,
    )
    t_grid = np.linspace(0.0, T, int(round(T / grid_step)) + 1)
    weight = np.exp(-gamma * t_grid)
    x = (result.sol(t_grid) * weight).T
    failure = None
    if result.status == 2:
        failure = SingularJacobian(f"P={P} 时配置法 Jacobian 奇异")
    elif not result.success:
        failure = ConvergenceError(f"P={P} 时同宿边值问题未收敛：{result.message}")
    elif x[0, 0] < 1e-3:
        failure = ConvergenceError(f"P={P} 时收敛到平凡解 u ≡ 0")
    if failure is not None:
        if seed is None and P != P_EXACT:
            # 直接求解失败时从闭式解所在的 P = -13/6 出发延拓
            logger.info("P=%g 直接求解失败，改为从 P=%g 延拓", P, P_EXACT)
            steps = max(1, int(np.ceil(abs(P - P_EXACT) / 0.05)))
            profiles = continuation_in_P(P_EXACT, P, steps, T, tol)
            if np.isclose(profiles[-1].P, P):
                return profiles[-1]
        raise failure

    x_end = x[-1]
    boundary = float(np.max(np.abs(np.concatenate([[x[0, 1], x[0, 3]], W.T @ x_end]))))

    def dense(s):
        s = np.atleast_1d(s)
        return result.sol(s) * np.exp(-gamma * s)

    trajectory = Trajectory(t_grid, x, order=3, interpolant=dense)
    logger.info("P=%g 同宿轨道收敛：u(0)=%.12g，u″(0)=%.12g，配置节点 %d", P, x[0, 0], x[0, 2], result.x.size)
    return HomoclinicProfile(P, float(x[0, 0]), float(x[0, 2]), trajectory, T, boundary)


def homoclinic_rhs_residual(profile: HomoclinicProfile) -> float:
    """节点处 ‖x′ − f(x)‖∞，导数取自稠密插值的中心差分。"""
    traj = profile.trajectory
    h = 1e-4
    t = traj.t[(traj.t > h) & (traj.t < traj.t[-1] - h)]
    deriv = (traj(t + h) - traj(t - h)) / (2.0 * h)
    field = four_d_translated_rhs(traj(t).T, profile.params).T
    return float(np.max(np.abs(deriv - field)))


def continuation_in_P(
    P_start: float,
    P_end: float,
    steps: int,
    T: float = 25.0,
    tol: Optional[ToleranceConfig] = None,
) -> list[HomoclinicProfile]:
    """
    自然参数延拓：每一步以前一个解作为初始猜测。某一步失败（不收敛或配置法 Jacobian 奇异，
    通常意味着折点）时记录警告，停止并返回已得到的部分。
    """
    if steps < 1:
        raise PreconditionError("延拓步数至少为 1")
    values = [P_start] if P_start == P_end else list(np.linspace(P_start, P_end, steps + 1))
    profiles: list[HomoclinicProfile] = []
    seed = None
    for P in values:
        try:
            profile = shoot_homoclinic_4d(P, T, tol, seed=seed)
        except NumericalError as err:
            if not profiles:
                raise
            logger.warning("延拓在 P=%g 处停止（可能遇到折点）：%s", P, err)
            break
        profiles.append(profile)
        previous = profile.trajectory
        seed = lambda s, prev=previous: prev(s).T  # noqa: E731
    return profiles
