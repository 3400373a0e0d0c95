"""
Melnikov 分裂积分、尾部上界，以及分岔流形的切空间与秩检验（三维 Bykov 情形与四维双焦点情形）。
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import expm, null_space, schur

from dichotomy import AdjointBasis, DaeSystem, adjoint_basis_michelson, adjoint_psi_4d, dae_build, dae_solve_reduced, variational_phi_4d
from equilibria import N_D_MINUS, N_D_PLUS
from families import C_K
from numerics import NumericalError, PreconditionError, QuadratureError, QuadratureResult, ToleranceConfig, Trajectory, quad_nodes
from orbits import HomoclinicProfile, linearization_4d, stable_decay_rate

logger = logging.getLogger(__name__)

# [0, 20] 上的积分值与 t₀ = 20 处的尾部上界
REFERENCE_TABLE1 = {"int_psi1": -2.65596540, "int_phi1_p3": 3.42424892, "int_phi1_p1p2": 2.19190641}
REFERENCE_TABLE2 = {"tail_psi1": 4.219110e-2, "tail_phi1_p3": 2.103834e-7, "tail_phi1_p1p2": 3.321829e-7}
TABLE1_TOL = 1e-4
TABLE2_RTOL = 1e-2

NORM_P = 2.0
NORM_P_INV = np.sqrt(30.0 / 109.0) + 30.0 / np.sqrt(2071.0)

N_LAMBDA4 = np.array([0.0, 0.0, 0.0, 1.0])


def node_integral(traj: Trajectory, integrand: Callable, a: float, b: float) -> QuadratureResult:
    """
    在 traj 的节点上对 integrand(t, x) 做梯形求积，区间端点不是节点时用插值补上。
    """
    lo, hi = traj.span
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise PreconditionError(f"积分区间 [{a}, {b}] 超出轨道范围 [{lo}, {hi}]")
    mask = (traj.t > a) & (traj.t < b)
    t = np.concatenate([[a], traj.t[mask], [b]])
    x = np.vstack([traj(a), traj.x[mask], traj(b)])
    return quad_nodes(t, integrand(t, x))


# ---------- 三维情形 ----------

@dataclass
class SplittingReport3D:
    xi: np.ndarray
    parity_zeros: np.ndarray
    parity_checks: np.ndarray
    half_line: dict
    quadrature_errors: dict
    tails: np.ndarray
    t0: float
    het_tangent: np.ndarray
    determinant: float
    determinant_budget: float
    rank_ok: bool
    kappa: float = 1.0

    def budget(self) -> np.ndarray:
        """每个 ξ 的误差预算：两倍的（尾部上界 + Richardson 估计）。"""
        q = self.quadrature_errors
        out = np.zeros((2, 3))
        out[1, 0] = 2.0 * (self.tails[0] + q["int_psi1"])
        out[0, 1] = 2.0 * (self.tails[1] + q["int_phi1_p3"])
        out[0, 2] = 4.0 * abs(self.kappa) * (self.tails[2] + q["int_phi1_p1p2"])
        return out

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, np.ndarray):
                data[key] = value.tolist()
        data["budget"] = self.budget().tolist()
        return data


def tail_bounds(dae: DaeSystem, t0: float, endpoint_values: Sequence[float]) -> np.ndarray:
    """
    Gronwall 型尾部上界：L‖ψ̂(t₀)‖、|p₃(t₀)|L‖φ̂(t₀)‖、|p₁(t₀)p₂(t₀)|L‖φ̂(t₀)‖，
    L = −‖P‖‖P⁻¹‖/(a + ‖P‖‖P⁻¹‖‖R(t₀)‖)，范数均为 ∞ 范数。

    Parameters:
    - endpoint_values: (‖ψ̂(t₀)‖∞, ‖φ̂(t₀)‖∞)
    """
    norm_p = np.linalg.norm(dae.P_eig, np.inf)
    norm_p_inv = np.linalg.norm(np.linalg.inv(dae.P_eig), np.inf)
    if abs(norm_p - NORM_P) > 1e-12 or abs(norm_p_inv - NORM_P_INV) > 1e-12:
        raise NumericalError(f"‖P‖={norm_p}、‖P⁻¹‖={norm_p_inv} 与闭式值不符")
    growth = norm_p * norm_p_inv
    r0 = dae.r_norm(t0)
    grid = np.linspace(t0, t0 + 40.0, 801)
    r_values = np.array([dae.r_norm(t) for t in grid])
    if np.any(np.diff(r_values) >= 0):
        raise PreconditionError(f"‖R(t)‖ 在 [{t0}, ∞) 上不是严格递减的")
    if growth * r0 >= 0.5 * abs(dae.a):
        raise PreconditionError(f"t₀={t0} 时 ‖P‖‖P⁻¹‖‖R(t₀)‖={growth * r0:.3e} 相对 |a| 不够小")
    L = -growth / (dae.a + growth * r0)
    p = dae.orbit.p(t0)
    psi_end, phi_end = endpoint_values
    return np.array([L * psi_end, abs(p[2]) * L * phi_end, abs(p[0] * p[1]) * L * phi_end])


def _reduced_norm(w) -> float:
    # ψ̂ = (w₃, −w₂)
    return float(max(abs(w[2]), abs(w[1])))


def xi_matrix_3d(
    basis: AdjointBasis,
    t_cut: float = 20.0,
    kappa: float = 1.0,
    dae: Optional[DaeSystem] = None,
) -> SplittingReport3D:
    """
    Melnikov 系数矩阵 ξ（2×3）：非零元取 2∫₀^{t_cut}，由奇偶性为零的元素存为 0，并用对称求积复核。
    """
    if t_cut < 20.0:
        raise PreconditionError(f"t_cut={t_cut} 小于 20")
    dae = dae or dae_build()
    orbit = dae.orbit
    phi, psi = basis["phi"], basis["psi"]

    def p_at(t):
        return orbit.p(t)

    integrals = {
        "int_psi1": node_integral(psi, lambda t, w: w[:, 2], 0.0, t_cut),
        "int_phi1_p3": node_integral(phi, lambda t, w: w[:, 2] * p_at(t)[:, 2], 0.0, t_cut),
        "int_phi1_p1p2": node_integral(phi, lambda t, w: w[:, 2] * p_at(t)[:, 0] * p_at(t)[:, 1], 0.0, t_cut),
    }
    errors = {k: v.error_estimate for k, v in integrals.items()}
    for name, err in errors.items():
        if err > TABLE1_TOL:
            raise QuadratureError(f"{name} 的 Richardson 估计 {err:.2e} 超过 1e-4，积分过粗")
        if err > 0.1 * TABLE1_TOL:
            logger.warning("%s 的 Richardson 估计 %.2e 接近预算", name, err)
    values = {k: v.richardson for k, v in integrals.items()}

    parity_checks = np.array([
        node_integral(phi, lambda t, w: w[:, 2], -t_cut, t_cut).richardson,
        node_integral(psi, lambda t, w: w[:, 2] * p_at(t)[:, 2], -t_cut, t_cut).richardson,
        node_integral(psi, lambda t, w: -2.0 * kappa * w[:, 2] * p_at(t)[:, 0] * p_at(t)[:, 1], -t_cut, t_cut).richardson,
    ])
    if np.any(np.abs(parity_checks) > 1e-6):
        raise QuadratureError(f"奇偶性为零的积分数值为 {parity_checks}，超过 1e-6")

    xi = np.zeros((2, 3))
    xi[1, 0] = 2.0 * values["int_psi1"]
    xi[0, 1] = 2.0 * values["int_phi1_p3"]
    xi[0, 2] = -4.0 * kappa * values["int_phi1_p1p2"]
    parity_zeros = np.array([[True, False, False], [False, True, True]])

    tails = tail_bounds(dae, t_cut, (_reduced_norm(psi(t_cut)), _reduced_norm(phi(t_cut))))
    het_tangent = np.array([0.0, -xi[0, 2] / xi[0, 1], 1.0])
    determinant = float(np.linalg.det(xi[:, :2]))
    report = SplittingReport3D(
        xi, parity_zeros, parity_checks, values, errors, tails, t_cut,
        het_tangent, determinant, 0.0, False, kappa,
    )
    budget = report.budget()
    report.determinant_budget = float(abs(xi[0, 1]) * budget[1, 0] + abs(xi[1, 0]) * budget[0, 1])
    report.rank_ok = bool(abs(determinant) > report.determinant_budget)
    logger.info("ξ 矩阵完成：det=%.10g，预算 %.3e", determinant, report.determinant_budget)
    return report


def het_tangent_residual(report: SplittingReport3D) -> np.ndarray:
    """切向量代入两条切平面方程的残差。"""
    return report.xi @ report.het_tangent


def genericity_determinant(report: SplittingReport3D, chart: str = "lambda") -> float:
    """
    (λ₁, λ₂) 坐标下为 −ξ_{1,λ₂}·ξ_{2,λ₁}；(c, ν̄₃) 坐标下再乘以 ∂λ₁/∂c = 2c_k。
    """
    det = -report.xi[0, 1] * report.xi[1, 0]
    if chart == "lambda":
        return float(det)
    if chart == "c_nu":
        return float(2.0 * C_K * det)
    raise PreconditionError(f"未知的坐标卡 {chart}")


def table1_frame(report: SplittingReport3D) -> pd.DataFrame:
    rows = []
    for name, reference in REFERENCE_TABLE1.items():
        value = report.half_line[name]
        rows.append({
            "integral": name,
            "value": value,
            "richardson_error": report.quadrature_errors[name],
            "reference": reference,
            "difference": value - reference,
            "ok": abs(value - reference) <= TABLE1_TOL,
        })
    return pd.DataFrame(rows)


def table2_frame(tails: Sequence[float], t0: float) -> pd.DataFrame:
    rows = []
    for (name, reference), value in zip(REFERENCE_TABLE2.items(), tails):
        row = {"bound": name, "t0": t0, "value": float(value)}
        if t0 == 20.0:
            row["reference"] = reference
            row["relative_difference"] = (value - reference) / reference
            row["ok"] = abs(value - reference) <= TABLE2_RTOL * reference
        rows.append(row)
    return pd.DataFrame(rows)


def tolerance_sweep_3d(tols: Sequence[ToleranceConfig], t_cut: float = 20.0) -> pd.DataFrame:
    """在不同容差下重算三个半直线积分，观察收敛。"""
    rows = []
    for tol in tols:
        basis = adjoint_basis_michelson(max(t_cut, 20.0), tol)
        report = xi_matrix_3d(basis, t_cut)
        rows.append({"abs_tol": tol.abs_tol, "rel_tol": tol.rel_tol, **report.half_line})
    return pd.DataFrame(rows)


def cross_validate_3d(basis: AdjointBasis, t_cut: float = 20.0, tol: Optional[ToleranceConfig] = None) -> pd.DataFrame:
    """投影三维伴随积分与约化方程两种方法得到的三个积分之差。"""
    dae = dae_build()
    orbit = dae.orbit
    psi_hat = dae_solve_reduced([1.0, 0.0], (0.0, t_cut), tol, dae)
    phi_hat = dae_solve_reduced([0.0, 1.0], (0.0, t_cut), tol, dae)
    reduced = {
        "int_psi1": node_integral(psi_hat, lambda t, v: v[:, 0], 0.0, t_cut).richardson,
        "int_phi1_p3": node_integral(phi_hat, lambda t, v: v[:, 0] * orbit.p(t)[:, 2], 0.0, t_cut).richardson,
        "int_phi1_p1p2": node_integral(phi_hat, lambda t, v: v[:, 0] * orbit.p(t)[:, 0] * orbit.p(t)[:, 1], 0.0, t_cut).richardson,
    }
    projected = xi_matrix_3d(basis, t_cut, dae=dae).half_line
    frame = pd.DataFrame({
        "integral": list(reduced),
        "projected_3d": [projected[k] for k in reduced],
        "reduced_dae": list(reduced.values()),
    })
    frame["difference"] = frame["projected_3d"] - frame["reduced_dae"]
    return frame


# ---------- 四维情形 ----------

@dataclass
class SplittingReport4D:
    xi: np.ndarray
    xi3_by_parts: float
    parity_check: float
    errors: np.ndarray
    tails: np.ndarray
    signs: dict
    hom_tangent_normal: np.ndarray
    region_ranks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, np.ndarray):
                data[key] = value.tolist()
        data["region_ranks"] = {k: {"rank": r, "sv_ratio": s} for k, (r, s) in self.region_ranks.items()}
        return data


def numerical_rank(rows: np.ndarray, ratio: float = 1e-3) -> tuple[int, float]:
    """按奇异值阈值（最小奇异值 > ratio·最大奇异值）判定秩，同时返回最小/最大奇异值之比。"""
    sv = np.linalg.svd(np.atleast_2d(rows), compute_uv=False)
    return int(np.sum(sv > ratio * sv[0])), float(sv[-1] / sv[0])


def stable_envelope(P: float, horizon: float = 40.0) -> tuple[float, float]:
    """
    原点线性化在稳定子空间上的包络 ‖e^{As}Π_s‖∞ ≤ K(1+s)e^{−rs}，返回 (K, r)。
    """
    A = linearization_4d(P)
    rate = stable_decay_rate(P)
    _, Zs, ks = schur(A, output="real", sort="lhp")
    _, Zu, ku = schur(A, output="real", sort="rhp")
    basis = np.hstack([Zs[:, :ks], Zu[:, :ku]])
    projector = basis @ np.diag([1.0] * ks + [0.0] * ku) @ np.linalg.inv(basis)
    K = 0.0
    for s in np.linspace(0.0, horizon, 401):
        K = max(K, np.linalg.norm(expm(A * s) @ projector, np.inf) / ((1.0 + s) * np.exp(-rate * s)))
    return float(K), rate


def tail_bounds_4d(profile: HomoclinicProfile, kappa: float = 1.0) -> np.ndarray:
    """
    四维积分尾部 2∫_T^∞ 的线性化上界：T 之后按原点的线性流估计轨道，
    二次被积函数用 K²‖x(T)‖²∫(1+s)²e^{−2rs}，三次的 κp₁p₂² 用 K³‖x(T)‖³∫(1+s)³e^{−3rs}。
    """
    K, r = stable_envelope(profile.P)
    x_end = float(np.linalg.norm(profile.trajectory.x[-1], np.inf))
    quad_weight = 1.0 / (2 * r) + 2.0 / (2 * r) ** 2 + 2.0 / (2 * r) ** 3
    cubic_weight = 1.0 / (3 * r) + 3.0 / (3 * r) ** 2 + 6.0 / (3 * r) ** 3 + 6.0 / (3 * r) ** 4
    quadratic = 2.0 * K**2 * x_end**2 * quad_weight
    cubic = 2.0 * abs(kappa) * K**3 * x_end**3 * cubic_weight
    return np.array([quadratic, 0.0, quadratic, cubic])


def xi_gradient_4d(profile: HomoclinicProfile, kappa: float = 1.0) -> SplittingReport4D:
    """
    ξ = (∫p₂², ∫p₂p₃, ∫p₂p₄, κ∫p₁p₂²)，偶被积函数取 2∫₀^T；
    ∫p₂p₃ 按奇偶性记为 0，并在对称网格上复核。
    """
    if not np.isclose(profile.P, -2.0):
        logger.warning("P=%g 不是 λ=0 对应的 P=-2，符号判定仅供参考", profile.P)
    half = profile.trajectory
    t, x = half.t, half.x
    p1, p2, p3, p4 = x.T

    def twice(values) -> QuadratureResult:
        q = quad_nodes(t, values)
        return QuadratureResult(2 * q.value, 2 * q.half_grid, 2 * q.richardson, 2 * q.error_estimate)

    parts = [twice(p2**2), None, twice(p2 * p4), twice(kappa * p1 * p2**2)]
    by_parts = twice(-(p3**2))
    full = profile.full_orbit()
    parity = quad_nodes(full.t, full.x[:, 1] * full.x[:, 2]).richardson
    if abs(parity) > 1e-8:
        raise QuadratureError(f"∫p₂p₃ 的对称求积为 {parity:.2e}，应为 0")

    xi = np.array([parts[0].richardson, 0.0, parts[2].richardson, parts[3].richardson])
    if abs(xi[0]) < 1e-8:
        raise QuadratureError("积分低于噪声水平，同宿轨道截断过短")
    tails = tail_bounds_4d(profile, kappa)
    errors = np.array([parts[0].error_estimate, 0.0, parts[2].error_estimate, parts[3].error_estimate]) + tails

    def exceeds(value, budget, sign):
        return bool(sign * value > budget)

    diff_budget = errors[0] + errors[2]
    signs = {
        "xi1_positive": exceeds(xi[0], errors[0], 1),
        "xi3_negative": exceeds(xi[2], errors[2], -1),
        "xi4_sign_kappa": exceeds(xi[3], errors[3], np.sign(kappa)) if kappa != 0 else False,
        "xi1_minus_xi3_positive": exceeds(xi[0] - xi[2], diff_budget, 1),
        "by_parts_agree": bool(abs(xi[2] - by_parts.richardson) <= 1e-6),
    }
    normal = xi.copy()
    ranks = {
        "hom_dminus_lambda4": numerical_rank(np.vstack([normal, N_D_MINUS, N_LAMBDA4])),
        "hom_dplus_lambda4": numerical_rank(np.vstack([normal, N_D_PLUS, N_LAMBDA4])),
        "all_four": numerical_rank(np.vstack([normal, N_D_MINUS, N_D_PLUS, N_LAMBDA4])),
    }
    logger.info("四维 ξ = %s，分部积分 %.12g", xi, by_parts.richardson)
    return SplittingReport4D(xi, by_parts.richardson, parity, errors, tails, signs, normal, ranks)


def region_ranks_ok(report: SplittingReport4D) -> bool:
    expected = {"hom_dminus_lambda4": 3, "hom_dplus_lambda4": 3, "all_four": 4}
    return all(report.region_ranks[k][0] == v for k, v in expected.items())


def hom_tangent_directions(report: SplittingReport4D) -> dict:
    """
    Hom、Hom∓ = Hom ∩ 𝒟∓ 以及曲线 Hom^± 的切空间基，并检查是否都有非零的 λ₄ 分量（与 λ₄ = 0 横截）。
    """
    normal = report.hom_tangent_normal
    spaces = {
        "hom": null_space(normal[None, :]),
        "hom_dminus": null_space(np.vstack([normal, N_D_MINUS])),
        "hom_dplus": null_space(np.vstack([normal, N_D_PLUS])),
        "hom_curve": null_space(np.vstack([normal, N_D_MINUS, N_D_PLUS])),
    }
    result = {}
    for name, basis in spaces.items():
        result[name] = {
            "basis": basis,
            "transverse_to_lambda4": bool(np.max(np.abs(basis[3])) > 1e-3),
        }
    return result


def adjoint_psi_residual_4d(profile: HomoclinicProfile) -> float:
    """⟨ψ, f(p)⟩ 在节点上的最大值（ψ = ∇H 与流方向正交）。"""
    psi = adjoint_psi_4d(profile)
    phi = variational_phi_4d(profile)
    return float(np.max(np.abs(np.sum(psi.x * phi.x, axis=1))))
