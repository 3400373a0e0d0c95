"""
偶数维极限族在可逆集合上的 Hamilton 结构：反三角矩阵 S 及其递推逆、势函数 V、Hamilton 量 H，
以及四维族的首次积分。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from families import as_nu, in_reversibility_set, limit_family_rhs
from numerics import PreconditionError, ToleranceConfig, integrate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CanonicalSystem:
    """
    q = S·(y₁, y₃, …, yₙ₋₁)，p = (y₂, y₄, …, yₙ) 下的 Hamilton 系统
    H(q, p) = ½⟨Sp, p⟩ + V(q)，V(q) = −⅓q_m³ − ν₁q_m − ½qᵀMq。
    """

    m: int
    nu_odd: np.ndarray
    S: np.ndarray
    b: np.ndarray
    S_inv: np.ndarray = field(repr=False)
    quadratic: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def nu(self) -> np.ndarray:
        full = np.zeros(self.n)
        full[0::2] = self.nu_odd
        return full


def hankel_S(nu_odd: np.ndarray) -> np.ndarray:
    m = nu_odd.size
    S = np.zeros((m, m))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i + j <= m:
                S[i - 1, j - 1] = -nu_odd[i + j - 1]
            elif i + j == m + 1:
                S[i - 1, j - 1] = 1.0
    return S


def recursion_b(nu_odd: np.ndarray) -> np.ndarray:
    """b₁ = 1，b_i = Σ_{ℓ<i} ν_{2(m−i+ℓ)+1} b_ℓ。"""
    m = nu_odd.size
    b = np.zeros(m + 1)  # 1 起始下标，b[0] 不用
    b[1] = 1.0
    for i in range(2, m + 1):
        b[i] = sum(nu_odd[m - i + ell] * b[ell] for ell in range(1, i))
    return b[1:]


def inverse_from_b(b: np.ndarray) -> np.ndarray:
    """下反三角对称矩阵：(S⁻¹)_{ij} = b_{i+j−m}（i + j ≥ m + 1）。"""
    m = b.size
    inv = np.zeros((m, m))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i + j >= m + 1:
                inv[i - 1, j - 1] = b[i + j - m - 1]
    return inv


def potential_quadratic(nu_odd: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    −V 的二次部分 ½qᵀMq 的系数矩阵 M，逐项按闭式累加。
    """
    m = nu_odd.size
    M = np.zeros((m, m))

    def bb(i):
        return b[i - 1]

    def add_cross(i, j, c):
        M[i - 1, j - 1] += c
        M[j - 1, i - 1] += c

    for k in range(1, m):
        nu_k = nu_odd[k]  # ν_{2k+1}
        M[m - 1, m - 1] += nu_k * bb(k + 1)
        for i in range(m - k, m):
            add_cross(i, m, nu_k * bb(i - m + k + 1))
    for j in range(1, m // 2 + 1):
        M[m - j - 1, m - j - 1] += bb(m - 2 * j + 1)
        for i in range(j, m - j):
            add_cross(i, m - j, bb(i - j + 1))
    return M


def build_canonical(n: int, nu) -> CanonicalSystem:
    """
    由 ν ∈ 𝒯（ν₁ ≤ 0）构造正则坐标系统；b 由递推得到，不做稠密求逆。
    """
    nu = as_nu(nu)
    if n % 2 or n < 4:
        raise PreconditionError(f"Hamilton 结构只对偶数 n ≥ 4 给出，当前 n={n}")
    if nu.size != n:
        raise PreconditionError(f"ν 的长度应为 {n}")
    if not in_reversibility_set(nu, tol=1e-10):
        raise PreconditionError("ν 不在可逆集合内（偶数下标分量须为零）")
    if nu[0] > 0:
        raise PreconditionError("要求 ν₁ ≤ 0")
    nu_odd = nu[0::2].copy()
    S = hankel_S(nu_odd)
    b = recursion_b(nu_odd)
    S_inv = inverse_from_b(b)
    M = potential_quadratic(nu_odd, b)
    logger.debug("构造 m=%d 的正则系统，b=%s", nu_odd.size, b)
    return CanonicalSystem(nu_odd.size, nu_odd, S, b, S_inv, M)


def field_matrix(sys: CanonicalSystem) -> np.ndarray:
    """变换后 ṗ 的线性部分：k < m 时为 (S⁻¹) 的第 k+1 行，k = m 时为 Σ ν_{2k+1}(S⁻¹)_{k+1,·}。"""
    m = sys.m
    G = np.zeros((m, m))
    G[: m - 1] = sys.S_inv[1:]
    G[m - 1] = sys.nu_odd[1:] @ sys.S_inv[1:]
    return G


def potential_V(q, sys: CanonicalSystem) -> float:
    q = np.asarray(q, dtype=float)
    qm = q[-1]
    return float(-qm**3 / 3.0 - sys.nu_odd[0] * qm - 0.5 * q @ sys.quadratic @ q)


def grad_V(q, sys: CanonicalSystem) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    grad = -(sys.quadratic @ q)
    grad[-1] -= q[-1] ** 2 + sys.nu_odd[0]
    return grad


def hamiltonian_H(q, p, sys: CanonicalSystem) -> float:
    p = np.asarray(p, dtype=float)
    return float(0.5 * p @ sys.S @ p) + potential_V(q, sys)


def hamiltonian_field(q, p, sys: CanonicalSystem):
    """(∂H/∂p, −∂H/∂q)。"""
    return sys.S @ np.asarray(p, dtype=float), -grad_V(q, sys)


def canonical_transform(y, sys: CanonicalSystem):
    y = np.asarray(y, dtype=float)
    if y.shape[0] != sys.n:
        raise PreconditionError(f"状态维数应为 {sys.n}")
    return sys.S @ y[0::2], y[1::2].copy()


def inverse_canonical_transform(q, p, sys: CanonicalSystem) -> np.ndarray:
    y = np.empty(sys.n)
    y[0::2] = sys.S_inv @ np.asarray(q, dtype=float)
    y[1::2] = p
    return y


def transformed_field(q, p, sys: CanonicalSystem):
    """把极限族向量场写到 (q, p) 坐标下。"""
    y = inverse_canonical_transform(q, p, sys)
    dy = limit_family_rhs(y, sys.nu)
    return sys.S @ dy[0::2], dy[1::2]


def energy(y, sys: CanonicalSystem) -> float:
    q, p = canonical_transform(y, sys)
    return hamiltonian_H(q, p, sys)


def reversible_nu_with_center(omegas) -> np.ndarray:
    """
    构造 ν ∈ 𝒯，使 p₋ 的线性化特征值为 ±iω_j。
    特征方程在 z = r² 下为 z^m − ν_{2m−1}z^{m−1} − … − ν₃z + 2√(−ν₁)。
    """
    omegas = np.asarray(omegas, dtype=float)
    coeffs = np.poly(-omegas**2)  # z^m + e₁z^{m−1} + … + e_m
    m = omegas.size
    nu = np.zeros(2 * m)
    for k in range(1, m):
        # z^{m−k} 的系数 e_k = −ν_{2(m−k)+1}
        nu[2 * (m - k)] = -coeffs[k]
    nu[0] = -(coeffs[m] / 2.0) ** 2
    return nu


def equilibrium_minus(nu) -> np.ndarray:
    nu = as_nu(nu)
    if nu[0] > 0:
        raise PreconditionError("ν₁ > 0 时没有平衡点")
    y = np.zeros(nu.size)
    y[0] = -np.sqrt(-nu[0])
    return y


def energy_drift(sys: CanonicalSystem, y0, t_end: float, tol: ToleranceConfig) -> float:
    """沿极限族轨道积分，返回 max |H(t) − H(0)|。"""
    nu = sys.nu
    traj = integrate(lambda t, y: limit_family_rhs(y, nu), y0, (0.0, t_end), tol)
    values = np.array([energy(y, sys) for y in traj.x])
    drift = float(np.max(np.abs(values - values[0])))
    logger.info("n=%d，t∈[0,%g] 上能量漂移 %.3e", sys.n, t_end, drift)
    return drift


def first_integral_4d(x, eta3: float = 2.0):
    """
    平移四维族（η₂ = η₄ = ε̄ = 0）的首次积分
    H = ½x₁² − ⅓x₁³ − (η₃/2)x₂² + x₂x₄ − ½x₃²。
    """
    x = np.asarray(x, dtype=float)
    return 0.5 * x[0] ** 2 - x[0] ** 3 / 3.0 - 0.5 * eta3 * x[1] ** 2 + x[1] * x[3] - 0.5 * x[2] ** 2


def first_integral_gradient_4d(x, eta3: float = 2.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([x[0] - x[0] ** 2, x[3] - eta3 * x[1], -x[2], x[1]])
