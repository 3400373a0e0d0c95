"""
平衡点的谱分类：可逆曲线上 p± 的标签、四维平移族在原点的特征多项式、
判别面 𝒟± 的局部图像与区域划分，以及 Michelson 系统两个平衡点的谱。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from families import FourDParams, MichelsonParams, four_d_jacobian, limit_family_jacobian, michelson_jacobian
from numerics import AmbiguousClassification, ConstraintViolation, PreconditionError, ToleranceConfig, newton_solve

logger = logging.getLogger(__name__)

# 分类容差
DOUBLE_SEPARATION = 1e-6
IMAG_TOL = 1e-8
SURFACE_TOL = 1e-8
NORMALIZATION_TOL = 1e-10

# 判别面在 λ = 0 处的法向量
N_D_MINUS = np.array([1.0, -1.0, 1.0, 0.0])
N_D_PLUS = np.array([1.0, 1.0, 1.0, 0.0])

# 可逆曲线上 BD 与 HH 点：ν₃² = 8√(−ν₁)，ν₁² + ν₃² = 1。
# 记 w = √(−ν₁)，则 w⁴ + 8w − 1 = 0
_BD_W = float(brentq(lambda w: w**4 + 8.0 * w - 1.0, 0.0, 0.5, xtol=1e-16))
BD_POINT = (-_BD_W**2, float(np.sqrt(8.0 * _BD_W)))
HH_POINT = (-_BD_W**2, -float(np.sqrt(8.0 * _BD_W)))

REVERSIBILITY_LABELS = ("BT", "HDZ", "BD", "HH_point", "SR", "DF", "HH_arc", "saddle_center", "other")
REGION_LABELS = ("FF", "N⁺F⁻", "F⁺N⁻", "NN")


@dataclass(frozen=True)
class EquilibriumClassification:
    """
    平衡点、首一特征多项式系数（按降幂）、特征值与谱类型标签。
    """

    point: np.ndarray
    char_coeffs: np.ndarray
    eigenvalues: np.ndarray
    label: str

    def polynomial_residual(self) -> float:
        """特征值代回特征多项式的最大残差，按系数规模归一。"""
        scale = max(1.0, float(np.max(np.abs(self.char_coeffs))))
        return float(np.max(np.abs(np.polyval(self.char_coeffs, self.eigenvalues)))) / scale

    def vieta_defects(self) -> tuple[float, float]:
        """特征值之和、之积与系数给出值的偏差。"""
        deg = self.char_coeffs.size - 1
        total = -self.char_coeffs[1]
        product = (-1) ** deg * self.char_coeffs[-1]
        return (
            float(abs(np.sum(self.eigenvalues) - total)),
            float(abs(np.prod(self.eigenvalues) - product)),
        )

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "char_coeffs": self.char_coeffs.tolist(),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "label": self.label,
        }


def _companion_coeffs(jac: np.ndarray) -> np.ndarray:
    # 伴随矩阵最后一行 (a₀, …, a_{n−1}) 对应 rⁿ − a_{n−1}r^{n−1} − … − a₀
    last = jac[-1]
    return np.concatenate([[1.0], -last[::-1]])


def _sorted(eigs) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=complex)
    return eigs[np.lexsort((eigs.imag, eigs.real))]


def char_poly_limit_4d(nu, sign: int = -1) -> EquilibriumClassification:
    """
    四维极限族在 p± = (±√(−ν₁), 0, 0, 0) 的特征多项式
    r⁴ − ν₄r³ − ν₃r² − ν₂r ∓ 2√(−ν₁)，系数取自 Jacobian，根由伴随矩阵求得。
    标签此处统一记为 other，可逆曲线上的细分见 classify_reversibility_4d。
    """
    nu = np.asarray(nu, dtype=float)
    if nu.size != 4:
        raise PreconditionError("char_poly_limit_4d 只处理 n = 4")
    if sign not in (-1, 1):
        raise PreconditionError("sign 只能取 ±1")
    if nu[0] > 0:
        raise PreconditionError("ν₁ > 0 时没有平衡点")
    point = np.zeros(4)
    point[0] = sign * np.sqrt(-nu[0])
    jac = limit_family_jacobian(point, nu)
    eigs = _sorted(np.linalg.eigvals(jac))
    return EquilibriumClassification(point, _companion_coeffs(jac), eigs, "other")


def _pair_separation(z: complex) -> complex:
    return np.sqrt(complex(z))


def _biquadratic_roots(b: float, q: float) -> tuple[complex, complex]:
    """z² − bz + q = 0 的两个根，小根由 Vieta 关系给出以避免相消。"""
    disc = complex(b * b - 4.0 * q)
    sq = np.sqrt(disc)
    big = 0.5 * (b + sq) if b.real >= 0 else 0.5 * (b - sq)
    if big == 0:
        return 0j, 0j
    return big, q / big


def _reversible_label_minus(z1: complex, z2: complex) -> str:
    small, large = sorted((z1, z2), key=abs)
    r_small = _pair_separation(small)
    r_large = _pair_separation(large)
    # 双零特征值
    if 2.0 * abs(r_small) < DOUBLE_SEPARATION:
        return "BT" if large.real > 0 else "HDZ"
    if abs(r_small - r_large) < DOUBLE_SEPARATION:
        return "BD" if large.real > 0 else "HH_point"
    roots = np.array([r_small, r_large])
    if np.all(np.abs(roots.imag) < IMAG_TOL):
        return "SR"
    if np.all(np.abs(roots.real) < IMAG_TOL):
        return "HH_arc"
    if np.all(np.abs(roots.real) >= IMAG_TOL) and np.all(np.abs(roots.imag) >= IMAG_TOL):
        return "DF"
    return "other"


def classify_reversibility_4d(nu1: float, nu3: float, point: str = "p-") -> EquilibriumClassification:
    """
    单位圆上 (ν₁, ν₃)（ν₂ = ν₄ = 0）处 p₋ 或 p₊ 的谱分类。

    Parameters:
    - nu1, nu3: 满足 ν₁ ≤ 0，ν₁² + ν₃² = 1
    - point: "p-" 或 "p+"

    Returns:
    - EquilibriumClassification，p₋ 的标签取 BT/HDZ/BD/HH_point/SR/DF/HH_arc，
      p₊ 的标签为 saddle_center（ν₁ = 0 时与 p₋ 重合）
    """
    if point not in ("p-", "p+"):
        raise PreconditionError(f"point 只能是 p- 或 p+，当前为 {point}")
    if abs(nu1 * nu1 + nu3 * nu3 - 1.0) > NORMALIZATION_TOL:
        raise PreconditionError(f"(ν₁, ν₃) 不在单位圆上：ν₁²+ν₃²={nu1 * nu1 + nu3 * nu3:.12g}")
    if nu1 > NORMALIZATION_TOL:
        raise PreconditionError("可逆曲线只取 ν₁ ≤ 0 的半圆")
    nu1 = min(nu1, 0.0)
    root = np.sqrt(-nu1)
    sign = -1 if point == "p-" else 1
    # p± 处 z = r² 满足 z² − ν₃z ∓ 2√(−ν₁) = 0
    q = -sign * 2.0 * root
    z1, z2 = _biquadratic_roots(nu3, q)
    r1, r2 = _pair_separation(z1), _pair_separation(z2)
    eigs = _sorted([r1, -r1, r2, -r2])
    coeffs = np.array([1.0, 0.0, -nu3, 0.0, q])
    location = np.array([sign * root, 0.0, 0.0, 0.0])

    small = min(z1, z2, key=abs)
    if point == "p-" or 2.0 * abs(_pair_separation(small)) < DOUBLE_SEPARATION:
        label = _reversible_label_minus(z1, z2)
    else:
        real_pair = [z for z in (z1, z2) if z.real > 0 and abs(z.imag) < IMAG_TOL]
        imag_pair = [z for z in (z1, z2) if z.real < 0 and abs(z.imag) < IMAG_TOL]
        label = "saddle_center" if real_pair and imag_pair else "other"
    logger.debug("(ν₁, ν₃)=(%.6g, %.6g) 处 %s 的标签为 %s", nu1, nu3, point, label)
    return EquilibriumClassification(location, coeffs, eigs, label)


def reversibility_special_points() -> dict[str, tuple[float, float]]:
    return {"BT": (0.0, 1.0), "BD": BD_POINT, "HH_point": HH_POINT, "HDZ": (0.0, -1.0)}


def scan_reversibility_curve(num: int = 200) -> pd.DataFrame:
    """
    沿 (ν₁, ν₃) = (−sin θ, cos θ)，θ ∈ [0, π] 扫描 p± 的标签。
    BD、HH 两点精确插入；SR 与 HH 两段弧长只有约 0.0156，另各插入其中点。
    """
    if num < 2:
        raise PreconditionError("扫描点数至少为 2")
    theta_bd = np.arctan2(-BD_POINT[0], BD_POINT[1])
    theta_hh = np.arctan2(-HH_POINT[0], HH_POINT[1])
    extra = [theta_bd, theta_hh, 0.5 * theta_bd, 0.5 * (theta_hh + np.pi)]
    thetas = np.unique(np.concatenate([np.linspace(0.0, np.pi, num), extra]))
    rows = []
    for theta in thetas:
        nu1, nu3 = -np.sin(theta), np.cos(theta)
        if theta == 0.0 or theta == np.pi:
            nu1 = 0.0
        minus = classify_reversibility_4d(nu1, nu3, "p-")
        plus = classify_reversibility_4d(nu1, nu3, "p+")
        rows.append({
            "theta": theta,
            "nu1": nu1,
            "nu3": nu3,
            "label_minus": minus.label,
            "label_plus": plus.label,
            "max_abs_re_minus": float(np.max(np.abs(minus.eigenvalues.real))),
            "max_abs_im_minus": float(np.max(np.abs(minus.eigenvalues.imag))),
        })
    frame = pd.DataFrame(rows)
    logger.info("可逆曲线扫描完成，共 %d 个点", len(frame))
    return frame


def char_poly_4d_perturbed(lam: FourDParams) -> np.ndarray:
    """
    原点处 Q(r, λ) = r⁴ − D r³ − C r² − B r − A 的系数 (A, B, C, D)，直接读自 Jacobian 末行。
    """
    row = four_d_jacobian(np.zeros(4), lam)[3]
    return np.array([row[0], row[1], row[2], row[3]])


def _quartic(coeffs: np.ndarray) -> np.ndarray:
    A, B, C, D = coeffs
    return np.array([1.0, -D, -C, -B, -A])


@dataclass(frozen=True)
class DiscriminantChart:
    """判别面 𝒟⁻ 或 𝒟⁺ 在 λ = 0 附近的图像 λ₁ = g(λ₂, λ₃)（λ₄ = 0）。"""

    sign: int
    points: pd.DataFrame
    gradient: np.ndarray
    normal: np.ndarray
    expected: np.ndarray
    normal_error: float


def _discriminant_residual(lam2: float, lam3: float):
    def residual(x):
        r, lam1 = x
        A, B, C, D = char_poly_4d_perturbed(FourDParams(np.array([lam1, lam2, lam3, 0.0])))
        q = r**4 - D * r**3 - C * r**2 - B * r - A
        dq = 4.0 * r**3 - 3.0 * D * r**2 - 2.0 * C * r - B
        return np.array([q, dq])

    def jacobian(x):
        r, lam1 = x
        _, _, C, D = char_poly_4d_perturbed(FourDParams(np.array([lam1, lam2, lam3, 0.0])))
        ddq = 12.0 * r**2 - 6.0 * D * r - 2.0 * C
        # B = λ₁
        return np.array([[4.0 * r**3 - 3.0 * D * r**2 - 2.0 * C * r - lam1, -r], [ddq, -1.0]])

    return residual, jacobian


def _cubic_design(l2: np.ndarray, l3: np.ndarray) -> np.ndarray:
    cols = []
    for total in range(4):
        for a in range(total + 1):
            cols.append(l2**a * l3 ** (total - a))
    return np.stack(cols, axis=1)


def discriminant_surface(sign: int, radius: float = 0.05, num: int = 9, tol: Optional[ToleranceConfig] = None) -> DiscriminantChart:
    """
    在 (λ₂, λ₃) ∈ [−radius, radius]² 网格上对 (r, λ₁) 解 Q = ∂Q/∂r = 0，
    从 (sign, 0) 出发沿蛇形顺序做延拓，再以三次多项式曲面拟合求 λ = 0 处的法向量。
    """
    if sign not in (-1, 1):
        raise PreconditionError("sign 只能取 ±1")
    if radius <= 0 or num < 4:
        raise PreconditionError("radius 必须为正且网格每边至少 4 个点")
    tol = tol or ToleranceConfig(abs_tol=1e-13, rel_tol=1e-13)
    axis = np.linspace(-radius, radius, num)
    rows = []
    guess = np.array([float(sign), 0.0])
    for i, lam3 in enumerate(axis):
        order = axis if i % 2 == 0 else axis[::-1]
        for lam2 in order:
            residual, jacobian = _discriminant_residual(lam2, lam3)
            sol = newton_solve(residual, guess, tol, jacobian)
            guess = sol
            q, dq = residual(sol)
            rows.append({"lambda1": sol[1], "lambda2": lam2, "lambda3": lam3, "lambda4": 0.0, "r": sol[0], "Q": q, "dQ": dq})
    points = pd.DataFrame(rows)
    design = _cubic_design(points["lambda2"].to_numpy(), points["lambda3"].to_numpy())
    coef, *_ = np.linalg.lstsq(design, points["lambda1"].to_numpy(), rcond=None)
    # 列顺序：1, λ₃, λ₂, …
    gradient = np.array([coef[2], coef[1]])
    normal = np.array([1.0, -gradient[0], -gradient[1], 0.0])
    normal /= np.linalg.norm(normal)
    expected = (N_D_MINUS if sign < 0 else N_D_PLUS) / np.linalg.norm(N_D_MINUS)
    error = float(np.max(np.abs(normal - expected)))
    logger.info("𝒟%s 的拟合法向量 %s，与理论方向偏差 %.2e", "⁻" if sign < 0 else "⁺", normal, error)
    return DiscriminantChart(sign, points, gradient, normal, expected, error)


def discriminant_surfaces(radius: float = 0.05, num: int = 9, tol: Optional[ToleranceConfig] = None) -> dict[str, DiscriminantChart]:
    return {
        "D-": discriminant_surface(-1, radius, num, tol),
        "D+": discriminant_surface(1, radius, num, tol),
    }


def _pair_kind(pair: np.ndarray) -> str:
    a, b = pair
    disc = ((a - b) ** 2).real
    if abs(disc) < SURFACE_TOL:
        raise AmbiguousClassification(f"根对 {a:.6g}, {b:.6g} 处在判别面附近，无法区分结点与焦点")
    return "N" if disc > 0 else "F"


def classify_region_4d(lam) -> EquilibriumClassification:
    """
    原点的区域标签：稳定根对与不稳定根对各自为结点（N）或焦点（F）。
    不稳定根对记上标 ⁺，稳定根对记上标 ⁻；两者相同时记 FF 或 NN。
    """
    params = lam if isinstance(lam, FourDParams) else FourDParams(np.asarray(lam, dtype=float))
    jac = four_d_jacobian(np.zeros(4), params)
    eigs = _sorted(np.linalg.eigvals(jac))
    coeffs = _companion_coeffs(jac)
    if np.any(np.abs(eigs.real) < IMAG_TOL):
        raise PreconditionError(f"λ={params.lam} 处原点不是双曲平衡点")
    stable = eigs[eigs.real < 0]
    unstable = eigs[eigs.real > 0]
    if stable.size != 2 or unstable.size != 2:
        return EquilibriumClassification(np.zeros(4), coeffs, eigs, "other")
    up = _pair_kind(unstable)
    down = _pair_kind(stable)
    label = up + down if up == down else f"{up}⁺{down}⁻"
    return EquilibriumClassification(np.zeros(4), coeffs, eigs, label)


def scan_region_4d(lambda1_values: Iterable[float], lambda2_values: Iterable[float], lambda3: float = 0.0, lambda4: float = 0.0) -> pd.DataFrame:
    """在 (λ₁, λ₂) 网格上扫描区域标签；判别面附近记为 ambiguous，非双曲点记为 other。"""
    rows = []
    for lam1 in lambda1_values:
        for lam2 in lambda2_values:
            lam = np.array([lam1, lam2, lambda3, lambda4], dtype=float)
            try:
                label = classify_region_4d(lam).label
            except AmbiguousClassification:
                label = "ambiguous"
            except PreconditionError:
                label = "other"
            rows.append({"lambda1": lam[0], "lambda2": lam[1], "lambda3": lam[2], "lambda4": lam[3], "label": label})
    return pd.DataFrame(rows)


def cubic_real_root(q: float) -> float:
    """r³ + r − q = 0 的唯一实根（Cardano 公式）。"""
    s = np.sqrt(q * q / 4.0 + 1.0 / 27.0)
    return float(np.cbrt(q / 2.0 + s) + np.cbrt(q / 2.0 - s))


@dataclass(frozen=True)
class MichelsonSpectrum:
    minus: EquilibriumClassification
    plus: EquilibriumClassification
    real_rate: float
    rho: float
    omega: float

    @property
    def divergence_defect(self) -> float:
        return abs(self.real_rate - 2.0 * self.rho)


def _michelson_classification(x1: float, c: float) -> tuple[EquilibriumClassification, float, float, float]:
    point = np.array([x1, 0.0, 0.0])
    jac = michelson_jacobian(point, MichelsonParams(c))
    eigs = _sorted(np.linalg.eigvals(jac))
    real = eigs[np.argmin(np.abs(eigs.imag))]
    pair = eigs[np.abs(eigs.imag) > IMAG_TOL]
    if pair.size != 2:
        raise ConstraintViolation(f"c={c} 时平衡点 {x1:.6g} 没有复特征值对")
    rate = abs(real.real)
    rho = abs(pair[0].real)
    omega = abs(pair[0].imag)
    return EquilibriumClassification(point, _companion_coeffs(jac), eigs, "saddle_focus"), rate, rho, omega


def michelson_spectrum(c: float) -> MichelsonSpectrum:
    """
    Michelson 系统（ν̄₃ = ε = 0）在 Q± = (±√2c, 0, 0) 的谱：特征方程 r³ + r ± √2c = 0。
    两个平衡点各有实根 ∓λ 与复根对 ±ρ ± iω，检查 λ = 2ρ 与 0 < ρ < λ。
    """
    if not np.isfinite(c) or c <= 0:
        raise PreconditionError(f"要求 c > 0，当前为 {c}")
    x = np.sqrt(2.0) * c
    minus, rate, rho, omega = _michelson_classification(-x, c)
    plus, rate_p, rho_p, _ = _michelson_classification(x, c)
    if abs(rate - rate_p) > 1e-12 or abs(rho - rho_p) > 1e-12:
        raise ConstraintViolation("Q₋ 与 Q₊ 的谱不对称")
    if abs(rate - 2.0 * rho) > 1e-10:
        raise ConstraintViolation(f"散度条件 λ − 2ρ = {rate - 2.0 * rho:.3e} 不成立")
    if not 0.0 < rho < rate:
        raise ConstraintViolation(f"0 < ρ < λ 不成立：ρ={rho}, λ={rate}")
    logger.info("c=%.8g：λ=%.8f, ρ=%.8f, ω=%.8f", c, rate, rho, omega)
    return MichelsonSpectrum(minus, plus, rate, rho, omega)
