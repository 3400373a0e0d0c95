"""
共享数值内核：自适应积分、牛顿迭代、节点求积、有限差分以及异常类型。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import RK45, OdeSolution
from scipy.linalg import lu_factor, lu_solve

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class NilpotentError(Exception):
    """所有库内异常的基类。"""


class PreconditionError(NilpotentError, ValueError):
    """输入不满足前置条件（维数不符、参数不在可逆集合内等）。"""


class NumericalError(NilpotentError, RuntimeError):
    """数值计算失败。"""


class StepSizeUnderflow(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class ConstraintViolation(NumericalError):
    pass


class AmbiguousClassification(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


@dataclass(frozen=True)
class ToleranceConfig:
    """
    积分与迭代的容差设置。

    Parameters:
    - abs_tol: float，绝对容差
    - rel_tol: float，相对容差
    - max_step: float，积分最大步长（同时决定梯形求积的节点密度）
    - max_iters: int，牛顿迭代最大次数
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_step: float = 0.05
    max_iters: int = 50

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "max_step"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise PreconditionError(f"{name} 必须为正数，当前为 {value}")
        if int(self.max_iters) < 1:
            raise PreconditionError(f"max_iters 至少为 1，当前为 {self.max_iters}")

    @classmethod
    def tight(cls) -> "ToleranceConfig":
        # 复现参考积分值与尾部上界时使用的设置
        return cls(abs_tol=1e-11, rel_tol=1e-11, max_step=0.005, max_iters=50)

    def refined(self, factor: float = 0.5) -> "ToleranceConfig":
        return ToleranceConfig(self.abs_tol * factor, self.rel_tol * factor, self.max_step, self.max_iters)


class _PiecewiseInterpolant:
    """按断点拼接多个稠密输出。"""

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[Callable]):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.pieces = list(pieces)

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        index = np.searchsorted(self.breakpoints, t_arr, side="right")
        out = None
        for k, piece in enumerate(self.pieces):
            mask = index == k
            if not np.any(mask):
                continue
            values = np.asarray(piece(t_arr[mask]))
            if out is None:
                out = np.empty((values.shape[0], t_arr.size))
            out[:, mask] = values
        return out[:, 0] if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class Trajectory:
    """
    积分器输出：严格递增的节点时间 t、对应状态 x（形状 (N, d)），以及节点之间的插值。
    """

    t: np.ndarray
    x: np.ndarray
    order: int = 1
    interpolant: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or t.size != x.shape[0]:
            raise PreconditionError("节点时间与状态数量不一致")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise PreconditionError("节点时间必须严格递增")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def __len__(self) -> int:
        return self.t.size

    def __call__(self, t):
        """在任意时刻求值；恰好落在节点上时返回存储的状态。"""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.span
        if np.any(t_arr < lo - 1e-12 * max(1.0, abs(lo))) or np.any(t_arr > hi + 1e-12 * max(1.0, abs(hi))):
            raise PreconditionError(f"求值时刻超出轨道范围 [{lo}, {hi}]")
        if self.interpolant is not None:
            values = np.asarray(self.interpolant(t_arr)).reshape(self.dim, t_arr.size).T.copy()
        else:
            values = np.column_stack([np.interp(t_arr, self.t, self.x[:, j]) for j in range(self.dim)])
        idx = np.clip(np.searchsorted(self.t, t_arr), 0, self.t.size - 1)
        on_node = self.t[idx] == t_arr
        values[on_node] = self.x[idx[on_node]]
        return values[0] if np.ndim(t) == 0 else values

    def component(self, j: int) -> np.ndarray:
        return self.x[:, j]

    def reflect(self, parity: Sequence[int]) -> "Trajectory":
        """
        由 [0, T] 上的轨道按分量奇偶性生成 [-T, T] 上的轨道。
        parity 中 +1 表示偶函数分量，-1 表示奇函数分量。
        """
        if self.t[0] != 0.0:
            raise PreconditionError("反射要求轨道从 t=0 开始")
        sign = np.asarray(parity, dtype=float)
        if sign.size != self.dim:
            raise PreconditionError("奇偶性向量维数与状态维数不一致")
        t = np.concatenate([-self.t[:0:-1], self.t])
        x = np.vstack([self.x[:0:-1] * sign, self.x])
        base = self

        def mirrored(s):
            s = np.atleast_1d(s)
            return (base(np.abs(s)) * np.where(s[:, None] < 0, sign, 1.0)).T

        return Trajectory(t, x, self.order, mirrored)

    @staticmethod
    def join(left: "Trajectory", right: "Trajectory") -> "Trajectory":
        """拼接两段首尾相接的轨道（left 的终点时刻等于 right 的起点时刻）。"""
        if not np.isclose(left.t[-1], right.t[0]):
            raise PreconditionError("两段轨道在连接时刻不相接")
        t = np.concatenate([left.t, right.t[1:]])
        x = np.vstack([left.x, right.x[1:]])
        interpolant = _PiecewiseInterpolant([right.t[0]], [lambda s: left(s).T, lambda s: right(s).T])
        return Trajectory(t, x, min(left.order, right.order), interpolant)

    def to_frame(self, columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
        names = list(columns) if columns is not None else [f"x{j + 1}" for j in range(self.dim)]
        frame = pd.DataFrame(self.x, columns=names)
        frame.insert(0, "t", self.t)
        return frame


def integrate(
    rhs: Callable,
    x0,
    t_span: tuple[float, float],
    tol: ToleranceConfig,
    project: Optional[Callable] = None,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """
    Dormand–Prince 5(4) 自适应积分（4 阶稠密输出），支持正向或反向时间区间。

    Parameters:
    - rhs: 向量场 f(t, x)
    - x0: 初值
    - t_span: (t0, t1)，t1 可以小于 t0
    - tol: ToleranceConfig
    - project: 可选的逐步投影 project(t, x) -> x，用于抑制约束漂移

    Returns:
    - Trajectory（时间总是按递增顺序存储）
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 == t1:
        raise PreconditionError("积分区间退化")
    y0 = np.asarray(x0, dtype=float).ravel()
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("初值含有非有限数")

    solver = RK45(rhs, t0, y0, t1, max_step=tol.max_step, rtol=tol.rel_tol, atol=tol.abs_tol)
    times = [t0]
    states = [y0.copy()]
    interpolants = []
    while solver.status == "running":
        if len(times) > max_steps:
            raise ConvergenceError(f"积分步数超过上限 {max_steps}")
        message = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(f"t={solver.t:.6g} 处步长下溢：{message}")
        if not np.all(np.isfinite(solver.y)):
            raise NonFiniteState(f"t={solver.t:.6g} 处状态发散")
        interpolants.append(solver.dense_output())
        if project is not None:
            projected = np.asarray(project(solver.t, solver.y), dtype=float)
            solver.y = projected
            solver.f = solver.fun(solver.t, projected)
        times.append(solver.t)
        states.append(np.array(solver.y, copy=True))

    logger.debug("积分 [%g, %g] 完成，共 %d 步，%d 次函数求值", t0, t1, len(times) - 1, solver.nfev)
    dense = OdeSolution(np.asarray(times), interpolants)
    t_nodes = np.asarray(times)
    x_nodes = np.asarray(states)
    if t1 < t0:
        t_nodes = t_nodes[::-1]
        x_nodes = x_nodes[::-1]
    return Trajectory(t_nodes, x_nodes, order=4, interpolant=dense)


def finite_difference_jacobian(f: Callable, x, h: Optional[float] = None) -> np.ndarray:
    """中心差分 Jacobian，默认步长 eps^(1/3)·max(1, |x_j|)。"""
    x = np.asarray(x, dtype=float).ravel()
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = h if h is not None else EPS ** (1.0 / 3.0) * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        forward = np.atleast_1d(np.asarray(f(x + e), dtype=float))
        backward = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(backward))):
            raise NonFiniteState(f"差分求值在第 {j} 个分量附近出现非有限数")
        jac[:, j] = (forward - backward) / (2.0 * step)
    return jac


def newton_solve(
    residual: Callable,
    x0,
    tol: ToleranceConfig,
    jacobian: Optional[Callable] = None,
) -> np.ndarray:
    """
    带回溯的牛顿迭代；残差无法下降的迭代被拒绝。

    Returns:
    - 满足 ‖residual(x)‖∞ ≤ tol.abs_tol 的 x
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    if r.size != x.size:
        raise PreconditionError("残差维数必须与未知量维数相同")
    norm = np.max(np.abs(r))
    for iteration in range(int(tol.max_iters)):
        logger.debug("牛顿迭代 %d：残差 %.3e", iteration, norm)
        if norm <= tol.abs_tol:
            return x
        jac = jacobian(x) if jacobian is not None else finite_difference_jacobian(residual, x)
        jac = np.atleast_2d(np.asarray(jac, dtype=float))
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1.0 / EPS:
            raise SingularJacobian(f"第 {iteration} 次迭代时 Jacobian 奇异")
        dx = lu_solve(lu_factor(jac), -r)
        step = 1.0
        while True:
            candidate = x + step * dx
            r_candidate = np.atleast_1d(np.asarray(residual(candidate), dtype=float))
            norm_candidate = np.max(np.abs(r_candidate)) if np.all(np.isfinite(r_candidate)) else np.inf
            if norm_candidate < norm or norm_candidate <= tol.abs_tol:
                break
            step *= 0.5
            if step < 1.0 / 64.0:
                raise ConvergenceError(f"牛顿迭代发散：残差停留在 {norm:.3e}")
        x, r, norm = candidate, r_candidate, norm_candidate
    if norm <= tol.abs_tol:
        return x
    raise ConvergenceError(f"牛顿迭代 {tol.max_iters} 次后残差仍为 {norm:.3e}")


@dataclass(frozen=True)
class QuadratureResult:
    """复合梯形积分值，附带隔点（半网格）比较与 Richardson 外推。"""

    value: float
    half_grid: float
    richardson: float
    error_estimate: float


def trapezoid(t, values) -> float:
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(t)))


def quad_nodes(t, values) -> QuadratureResult:
    """
    在积分器节点上做复合梯形求积。

    Parameters:
    - t: 节点时间
    - values: 被积函数在节点上的取值
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.size < 2 or values.shape[0] != t.size:
        raise PreconditionError("梯形求积至少需要 2 个节点且节点数与函数值数量一致")
    value = trapezoid(t, values)
    idx = np.arange(0, t.size, 2)
    if idx[-1] != t.size - 1:
        idx = np.append(idx, t.size - 1)
    half = trapezoid(t[idx], values[idx])
    correction = (value - half) / 3.0
    return QuadratureResult(value, half, value + correction, abs(correction))
