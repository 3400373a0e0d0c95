"""
幂零奇点展开族：一般 n 维展开、重标度族与极限族、Michelson 系统、平移后的四维族，
以及对称变换与可逆集合。

所有高阶余项 O(ε²) 取为零；需要时可通过 remainder 参数传入自定义余项。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from numerics import PreconditionError

logger = logging.getLogger(__name__)

# Kuramoto 轨道常数
ALPHA = 15.0 * np.sqrt(11.0 / 19.0**3)
BETA = np.sqrt(11.0 / 19.0) / 2.0
C_K = np.sqrt(2.0) * ALPHA

# 四维方向坐标卡的时间缩放因子
FOUR_D_TIME_FACTOR = 2.0 ** (-0.25)


def _vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} 含有非有限数")
    return arr


@dataclass(frozen=True)
class UnfoldingParams:
    """一般展开族的参数 μ 与非退化系数 κ。"""

    n: int
    mu: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        mu = _vector(self.mu, "mu")
        if self.n < 3:
            raise PreconditionError(f"维数 n 至少为 3，当前为 {self.n}")
        if mu.size != self.n:
            raise PreconditionError(f"mu 的长度应为 {self.n}，当前为 {mu.size}")
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class RescaledParams:
    """
    重标度后的参数。chart 取 "sphere"（‖ν‖=1）或 "directional"（某个分量固定为 ±1）。
    """

    nu: np.ndarray
    epsilon: float = 0.0
    kappa: float = 1.0
    chart: str = "sphere"

    def __post_init__(self):
        nu = _vector(self.nu, "nu")
        if nu.size < 3:
            raise PreconditionError("nu 至少需要 3 个分量")
        if self.epsilon < 0:
            raise PreconditionError(f"epsilon 不能为负，当前为 {self.epsilon}")
        if self.chart == "sphere":
            if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
                raise PreconditionError(f"球面坐标卡要求 ‖ν‖=1，当前为 {np.linalg.norm(nu)}")
        elif self.chart == "directional":
            if not np.any(np.abs(np.abs(nu) - 1.0) == 0.0):
                raise PreconditionError("方向坐标卡要求某个 ν_i 恰为 ±1")
        else:
            raise PreconditionError(f"未知的坐标卡 {self.chart}")
        object.__setattr__(self, "nu", nu)

    @property
    def n(self) -> int:
        return self.nu.size


@dataclass(frozen=True)
class MichelsonParams:
    c: float
    nu3_bar: float = 0.0
    epsilon: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.c) or self.c < 0:
            raise PreconditionError(f"Michelson 参数 c 必须非负，当前为 {self.c}")
        if self.epsilon < 0:
            raise PreconditionError(f"epsilon 不能为负，当前为 {self.epsilon}")

    @classmethod
    def kuramoto(cls, kappa: float = 1.0) -> "MichelsonParams":
        return cls(c=C_K, kappa=kappa)


@dataclass(frozen=True)
class FourDParams:
    """
    平移后四维族的参数 λ = (η₂, η₃−2, η₄, ε̄)。
    """

    lam: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        lam = _vector(self.lam, "lambda")
        if lam.size != 4:
            raise PreconditionError(f"lambda 必须有 4 个分量，当前为 {lam.size}")
        object.__setattr__(self, "lam", lam)

    @property
    def eta2(self) -> float:
        return float(self.lam[0])

    @property
    def eta3(self) -> float:
        return float(self.lam[1] + 2.0)

    @property
    def eta4(self) -> float:
        return float(self.lam[2])

    @property
    def eps_bar(self) -> float:
        return float(self.lam[3])

    @classmethod
    def from_P(cls, P: float, kappa: float = 1.0) -> "FourDParams":
        # 四阶方程 u'''' + P u'' + u - u² = 0 对应 η₃ = -P
        return cls(np.array([0.0, -P - 2.0, 0.0, 0.0]), kappa)


def as_nu(nu) -> np.ndarray:
    if isinstance(nu, RescaledParams):
        return nu.nu
    return _vector(nu, "nu")


def _check_dim(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[0] != n:
        raise PreconditionError(f"状态维数应为 {n}，当前为 {y.shape[0]}")
    return y


# ---------- 向量场 ----------

def general_unfolding_rhs(x, params: UnfoldingParams, h: Optional[Callable] = None) -> np.ndarray:
    """
    未重标度的展开族 x' = (x₂,…,xₙ, μ₁ + Σ μₖxₖ + x₁² + h(x, μ))。
    h 默认取 κ·x₁x₂。
    """
    x = _check_dim(x, params.n)
    extra = params.kappa * x[0] * x[1] if h is None else h(x, params.mu)
    last = params.mu[0] + np.dot(params.mu[1:], x[1:]) + x[0] ** 2 + extra
    return np.concatenate([x[1:], [last]])


def limit_family_rhs(y, nu) -> np.ndarray:
    nu = as_nu(nu)
    y = _check_dim(y, nu.size)
    last = nu[0] + np.dot(nu[1:], y[1:]) + y[0] ** 2
    return np.concatenate([y[1:], [last]])


def rescaled_family_rhs(y, params: RescaledParams, remainder: Optional[Callable] = None) -> np.ndarray:
    out = limit_family_rhs(y, params.nu)
    out[-1] += params.epsilon * params.kappa * y[0] * y[1]
    if remainder is not None:
        out[-1] += remainder(np.asarray(y, dtype=float), params)
    return out


def limit_family_jacobian(y, nu, epsilon: float = 0.0, kappa: float = 0.0) -> np.ndarray:
    nu = as_nu(nu)
    y = _check_dim(y, nu.size)
    n = nu.size
    jac = np.eye(n, k=1)
    jac[-1, :] = nu
    jac[-1, 0] = 2.0 * y[0] + epsilon * kappa * y[1]
    jac[-1, 1] += epsilon * kappa * y[0]
    return jac


def michelson_rhs(x, params: MichelsonParams) -> np.ndarray:
    x = _check_dim(x, 3)
    last = (
        params.c**2
        - x[1]
        + params.nu3_bar * x[2]
        - 0.5 * x[0] ** 2
        - 2.0 * params.epsilon * params.kappa * x[0] * x[1]
    )
    return np.array([x[1], x[2], last])


def michelson_jacobian(x, params: MichelsonParams) -> np.ndarray:
    x = _check_dim(x, 3)
    ek = 2.0 * params.epsilon * params.kappa
    return np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-x[0] - ek * x[1], -1.0 - ek * x[0], params.nu3_bar],
    ])


def four_d_translated_rhs(x, params: FourDParams) -> np.ndarray:
    x = _check_dim(x, 4)
    last = (
        -x[0]
        + params.eta2 * x[1]
        + params.eta3 * x[2]
        + params.eta4 * x[3]
        + x[0] ** 2
        + params.eps_bar * params.kappa * x[0] * x[1]
    )
    return np.array([x[1], x[2], x[3], last])


def four_d_jacobian(x, params: FourDParams) -> np.ndarray:
    x = _check_dim(x, 4)
    ek = params.eps_bar * params.kappa
    jac = np.eye(4, k=1)
    jac[3] = [-1.0 + 2.0 * x[0] + ek * x[1], params.eta2 + ek * x[0], params.eta3, params.eta4]
    return jac


def four_d_parameter_field(x, kappa: float = 1.0) -> np.ndarray:
    """∂f/∂λ 的第四分量，依次对应 λ₁…λ₄；前三个分量恒为零。"""
    x = _check_dim(x, 4)
    return np.array([x[1], x[2], x[3], kappa * x[0] * x[1]])


def michelson_parameter_field(x, kappa: float = 1.0) -> np.ndarray:
    """∂f/∂λ 的第三分量，λ = (c²−c_k², ν̄₃, ε)。"""
    x = _check_dim(x, 3)
    return np.array([np.ones_like(x[0]), x[2], -2.0 * kappa * x[0] * x[1]])


def divergence(nu) -> float:
    return float(as_nu(nu)[-1])


# ---------- 对称性 ----------

def _reversal_signs(n: int) -> np.ndarray:
    # 第 k 个分量的符号为 (-1)^(n-k+1)
    k = np.arange(1, n + 1)
    return (-1.0) ** (n - k + 1)


def involution_R(n: int) -> np.ndarray:
    if n < 3:
        raise PreconditionError(f"维数 n 至少为 3，当前为 {n}")
    return np.diag(_reversal_signs(n))


def sign_symmetry(nu, y, n: int):
    """(ν, y) ↦ (ν₁, (-1)^(n-1)ν₂, …, -νₙ, (-1)^n y₁, …, -yₙ)。"""
    nu = as_nu(nu)
    y = np.asarray(y, dtype=float)
    if nu.size != n or y.shape[0] != n:
        raise PreconditionError("ν 与 y 的维数必须等于 n")
    signs = _reversal_signs(n)
    nu_new = nu * signs
    nu_new[0] = nu[0]
    return nu_new, y * signs if y.ndim == 1 else y * signs[:, None]


def in_reversibility_set(nu, tol: float = 1e-10) -> bool:
    """ν_{n-2i} = 0（i = 0, …, ⌊(n-2)/2⌋）。"""
    nu = as_nu(nu)
    n = nu.size
    indices = [n - 2 * i for i in range((n - 2) // 2 + 1)]
    return bool(np.all(np.abs(nu[np.asarray(indices) - 1]) <= tol))


def reduce_to_region(nu):
    """
    必要时施加符号对称，使参数落在 ν₁ ≤ 0、νₙ ≤ 0 的区域内。

    Returns:
    - (nu, flipped)
    """
    nu = as_nu(nu).copy()
    if nu[0] > 0:
        raise PreconditionError("ν₁ > 0 时极限族没有平衡点，最大紧不变集为空")
    if nu[-1] > 0:
        nu, _ = sign_symmetry(nu, np.zeros(nu.size), nu.size)
        return nu, True
    return nu, False


def monotone_functional_L(y, nu):
    """
    L(y) = yₙ − ν₂y₁ − … − νₙyₙ₋₁，以及沿流的导数 ν₁ + y₁²。
    """
    nu = as_nu(nu)
    y = _check_dim(y, nu.size)
    value = y[-1] - np.dot(nu[1:], y[:-1])
    return value, nu[0] + y[0] ** 2


def michelson_involution() -> np.ndarray:
    return np.diag([-1.0, 1.0, -1.0])


def four_d_involution() -> np.ndarray:
    return np.diag([1.0, -1.0, 1.0, -1.0])


# ---------- 重标度与坐标卡 ----------

def _param_exponents(n: int) -> np.ndarray:
    # μ₁ = ε^(2n)ν₁，μₖ = ε^(n-k+1)νₖ
    k = np.arange(1, n + 1)
    exps = (n - k + 1).astype(float)
    exps[0] = 2.0 * n
    return exps


def _state_exponents(n: int) -> np.ndarray:
    return (n + np.arange(1, n + 1) - 1).astype(float)


def rescale_params(nu, epsilon: float) -> np.ndarray:
    """由 (ν, ε) 得到 μ。"""
    nu = as_nu(nu)
    return nu * epsilon ** _param_exponents(nu.size)


def unscale_params(mu, epsilon: float) -> np.ndarray:
    """由 (μ, ε) 得到 ν。"""
    mu = _vector(mu, "mu")
    if epsilon <= 0:
        raise PreconditionError("epsilon 必须为正")
    return mu / epsilon ** _param_exponents(mu.size)


def rescale_state(y, epsilon: float) -> np.ndarray:
    """y ↦ x，xₖ = ε^(n+k-1) yₖ。"""
    y = np.asarray(y, dtype=float)
    return y * epsilon ** _state_exponents(y.shape[0])


def unscale_state(x, epsilon: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if epsilon <= 0:
        raise PreconditionError("epsilon 必须为正")
    return x / epsilon ** _state_exponents(x.shape[0])


def spherical_chart(mu, kappa: float = 1.0) -> RescaledParams:
    """求 ε > 0 使 ‖ν‖ = 1，返回球面坐标卡下的参数。"""
    mu = _vector(mu, "mu")
    if not np.any(mu != 0):
        raise PreconditionError("μ = 0 没有球面坐标")
    exps = _param_exponents(mu.size)

    def excess(log_eps):
        return np.sum((mu * np.exp(-exps * log_eps)) ** 2) - 1.0

    lo, hi = -1.0, 1.0
    while excess(lo) < 0:
        lo *= 2.0
    while excess(hi) > 0:
        hi *= 2.0
    log_eps = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    epsilon = float(np.exp(log_eps))
    nu = unscale_params(mu, epsilon)
    nu = nu / np.linalg.norm(nu)
    return RescaledParams(nu, epsilon, kappa)


def directional_chart_4d(nu2_bar: float, nu3_bar: float, nu4_bar: float, epsilon: float, kappa: float = 1.0) -> FourDParams:
    """ν₁ = -1 的方向坐标卡到平移四维族参数 λ 的映射。"""
    eta2 = 2.0 ** (-0.75) * (nu2_bar - epsilon * kappa)
    eta3 = 2.0 ** (-0.5) * nu3_bar
    eta4 = 2.0 ** (-0.25) * nu4_bar
    eps_bar = 2.0 ** 0.25 * epsilon
    return FourDParams(np.array([eta2, eta3 - 2.0, eta4, eps_bar]), kappa)


_TRANSLATE_SCALE = np.array([1.0, 2.0 ** 1.25, 2.0 ** 1.5, 2.0 ** 1.75])


def translate_to_origin_4d(y) -> np.ndarray:
    """方向坐标卡中的 y ↦ 平移族中的 x（把 q₋ 移到原点）。"""
    y = np.asarray(y, dtype=float)
    x = y / _TRANSLATE_SCALE
    x[0] = (y[0] + 1.0) / 2.0
    return x


def translate_from_origin_4d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = x * _TRANSLATE_SCALE
    y[0] = 2.0 * x[0] - 1.0
    return y


def michelson_chart(nu1_bar: float, nu3_bar: float, epsilon: float = 0.0, kappa: float = 1.0) -> MichelsonParams:
    """
    ν₂ = -1 的三维方向坐标卡到 Michelson 参数：c² = -2ν̄₁。
    在 x = -2y 下 εκy₁y₂ 变为 -(εκ/2)x₁x₂，因此 Michelson 形式中的 κ 为原 κ 的四分之一。
    """
    if nu1_bar > 0:
        raise PreconditionError("ν̄₁ > 0 时没有对应的 Michelson 参数")
    return MichelsonParams(np.sqrt(-2.0 * nu1_bar), nu3_bar, epsilon, kappa / 4.0)


def michelson_coordinates(y) -> np.ndarray:
    return -2.0 * np.asarray(y, dtype=float)


def michelson_lambda(params: MichelsonParams) -> np.ndarray:
    return np.array([params.c**2 - C_K**2, params.nu3_bar, params.epsilon])


def directional_rhs_3d(y, nu1_bar: float, nu3_bar: float, epsilon: float = 0.0, kappa: float = 1.0) -> np.ndarray:
    nu = RescaledParams(np.array([nu1_bar, -1.0, nu3_bar]), epsilon, kappa, chart="directional")
    return rescaled_family_rhs(y, nu)


def directional_rhs_4d(y, nu_bar: Sequence[float], epsilon: float = 0.0, kappa: float = 1.0) -> np.ndarray:
    nu = RescaledParams(np.concatenate([[-1.0], np.asarray(nu_bar, dtype=float)]), epsilon, kappa, chart="directional")
    return rescaled_family_rhs(y, nu)
