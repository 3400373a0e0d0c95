"""
命令行入口：复现积分表、尾部上界、异宿与同宿分岔的切向量、Hamilton 结构的守恒检验、
平衡点分类以及轨道数据导出。

用法示例（在 code 目录下）：
    python cli.py table1
    python cli.py classify --nu1 0 --nu3 1
    python cli.py hamiltonian --n 4 --nu3 0.5
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd

from dichotomy import (
    adjoint_basis_michelson,
    bounded_solution_count_4d,
    bounded_solution_count_michelson,
    orthogonality_defect,
)
from equilibria import (
    classify_region_4d,
    classify_reversibility_4d,
    discriminant_surfaces,
    michelson_spectrum,
    scan_region_4d,
    scan_reversibility_curve,
)
from hamiltonian import build_canonical, energy_drift, equilibrium_minus, field_matrix, hamiltonian_field, transformed_field
from melnikov import (
    REFERENCE_TABLE1,
    TABLE1_TOL,
    adjoint_psi_residual_4d,
    cross_validate_3d,
    genericity_determinant,
    het_tangent_residual,
    hom_tangent_directions,
    region_ranks_ok,
    table1_frame,
    table2_frame,
    tolerance_sweep_3d,
    xi_gradient_4d,
    xi_matrix_3d,
)
from numerics import NumericalError, PreconditionError, ToleranceConfig
from orbits import KuramotoOrbit, homoclinic_rhs_residual, shoot_homoclinic_4d

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_PRECONDITION = 3

ENERGY_DRIFT_TOL = 1e-8
CROSSCHECK_TOL = 1e-4


@dataclass(frozen=True)
class RunConfig:
    """一次运行的全部设置；默认值即复现两张参考表时的取值。"""

    subcommand: str
    tol: ToleranceConfig = field(default_factory=ToleranceConfig.tight)
    t_cut: float = 20.0
    T: float = 25.0
    kappa: float = 1.0
    output_format: str = "json"
    output_path: Optional[str] = None
    options: dict = field(default_factory=dict)


@dataclass
class CommandResult:
    inputs: dict
    results: dict
    budgets: dict
    verdicts: dict
    frame: pd.DataFrame

    @property
    def ok(self) -> bool:
        return all(bool(v) for v in self.verdicts.values() if v is not None)

    def payload(self) -> dict:
        return {"inputs": self.inputs, "results": self.results, "budgets": self.budgets, "verdicts": self.verdicts}


def _base_inputs(cfg: RunConfig) -> dict:
    return {
        "subcommand": cfg.subcommand,
        "abs_tol": cfg.tol.abs_tol,
        "rel_tol": cfg.tol.rel_tol,
        "max_step": cfg.tol.max_step,
        "max_iters": cfg.tol.max_iters,
        "t_cut": cfg.t_cut,
        "T": cfg.T,
        "kappa": cfg.kappa,
        **cfg.options,
    }


def cmd_table1(cfg: RunConfig) -> CommandResult:
    basis = adjoint_basis_michelson(max(cfg.t_cut, 20.0), cfg.tol)
    report = xi_matrix_3d(basis, cfg.t_cut, cfg.kappa)
    frame = table1_frame(report)
    results = {"integrals": report.half_line}
    if cfg.options.get("sweep"):
        tols = [ToleranceConfig(10.0**-k, 10.0**-k, cfg.tol.max_step, cfg.tol.max_iters) for k in (8, 9, 10, 11)]
        sweep = tolerance_sweep_3d(tols, cfg.t_cut)
        results["sweep"] = sweep.to_dict(orient="records")
    reproduce = cfg.t_cut == 20.0
    verdicts = {"table1_match": bool(frame["ok"].all()) if reproduce else None}
    budgets = {"reference": REFERENCE_TABLE1, "tolerance": TABLE1_TOL, "richardson": report.quadrature_errors}
    return CommandResult(_base_inputs(cfg), results, budgets, verdicts, frame)


def cmd_table2(cfg: RunConfig) -> CommandResult:
    t0 = float(cfg.options.get("t0") or cfg.t_cut)
    basis = adjoint_basis_michelson(max(t0, 20.0), cfg.tol)
    report = xi_matrix_3d(basis, t0, cfg.kappa)
    frame = table2_frame(report.tails, t0)
    verdicts = {"table2_match": bool(frame["ok"].all()) if "ok" in frame else None}
    results = {"t0": t0, "tails": report.tails}
    return CommandResult(_base_inputs(cfg), results, {"relative_tolerance": 1e-2}, verdicts, frame)


def cmd_het(cfg: RunConfig) -> CommandResult:
    basis = adjoint_basis_michelson(max(cfg.t_cut, 20.0), cfg.tol)
    report = xi_matrix_3d(basis, cfg.t_cut, cfg.kappa)
    residual = het_tangent_residual(report)
    orthogonality = max(orthogonality_defect(basis["phi"]), orthogonality_defect(basis["psi"]))
    results = {
        "report": report.to_dict(),
        "bounded_solutions": bounded_solution_count_michelson(),
        "tangent_residual": residual,
        "orthogonality_defect": orthogonality,
        "genericity_lambda": genericity_determinant(report, "lambda"),
        "genericity_c_nu": genericity_determinant(report, "c_nu"),
    }
    verdicts = {
        "bounded_solutions_is_2": results["bounded_solutions"] == 2,
        "rank_two": report.rank_ok,
        "tangent_in_kernel": bool(np.max(np.abs(residual)) <= 1e-10),
        "orthogonality": orthogonality <= 1e-6,
    }
    frame = pd.DataFrame(report.xi, index=["phi", "psi"], columns=["lambda1", "lambda2", "lambda3"])
    frame = frame.rename_axis("row").reset_index()
    budgets = {"xi": report.budget(), "determinant": report.determinant_budget}
    return CommandResult(_base_inputs(cfg), results, budgets, verdicts, frame)


def cmd_hom4d(cfg: RunConfig) -> CommandResult:
    P = float(cfg.options.get("P", -2.0))
    profile = shoot_homoclinic_4d(P, cfg.T, cfg.tol)
    report = xi_gradient_4d(profile, cfg.kappa)
    directions = hom_tangent_directions(report)
    psi_residual = adjoint_psi_residual_4d(profile)
    results = {
        "u0": profile.u0,
        "u2_0": profile.u2_0,
        "boundary_residual": profile.boundary_residual,
        "rhs_residual": homoclinic_rhs_residual(profile),
        "bounded_solutions": bounded_solution_count_4d(P),
        "report": report.to_dict(),
        "tangent_directions": {k: v["basis"] for k, v in directions.items()},
        "psi_orthogonality": psi_residual,
    }
    verdicts = {
        "bounded_solutions_is_1": results["bounded_solutions"] == 1,
        **report.signs,
        "region_ranks": region_ranks_ok(report),
        **{f"{k}_transverse": v["transverse_to_lambda4"] for k, v in directions.items()},
    }
    frame = pd.DataFrame({
        "component": ["lambda1", "lambda2", "lambda3", "lambda4"],
        "xi": report.xi,
        "error_budget": report.errors,
        "tail_bound": report.tails,
    })
    return CommandResult(_base_inputs(cfg), results, {"xi": report.errors}, verdicts, frame)


def _hamiltonian_nu(cfg: RunConfig) -> np.ndarray:
    n = cfg.options.get("n")
    nu = cfg.options.get("nu")
    if nu is not None:
        nu = np.asarray(nu, dtype=float)
        if n is not None and int(n) != nu.size:
            raise PreconditionError("--n 与 --nu 的长度不一致")
        return nu
    if n is not None and int(n) != 4:
        raise PreconditionError("n ≠ 4 时需要用 --nu 给出完整的参数向量")
    nu3 = float(cfg.options.get("nu3", 0.5))
    if abs(nu3) > 1.0:
        raise PreconditionError("单位圆上要求 |ν₃| ≤ 1")
    return np.array([-np.sqrt(1.0 - nu3**2), 0.0, nu3, 0.0])


def cmd_hamiltonian(cfg: RunConfig) -> CommandResult:
    nu = _hamiltonian_nu(cfg)
    n = nu.size
    sys_ = build_canonical(n, nu)
    y0 = equilibrium_minus(nu)
    y0[1] += float(cfg.options.get("delta", 1e-6))
    t_end = float(cfg.options.get("t_end", 10.0))
    drift = energy_drift(sys_, y0, t_end, cfg.tol)

    # 在 y0 处比较 Hamilton 向量场与变换后的原向量场
    q = sys_.S @ y0[0::2]
    p = y0[1::2]
    dq, dp = hamiltonian_field(q, p, sys_)
    tq, tp = transformed_field(q, p, sys_)
    field_gap = float(max(np.max(np.abs(dq - tq)), np.max(np.abs(dp - tp))))
    results = {
        "nu": nu,
        "S": sys_.S,
        "b": sys_.b,
        "S_inv": sys_.S_inv,
        "M": sys_.quadratic,
        "field_matrix": field_matrix(sys_),
        "max_energy_drift": drift,
        "field_gap": field_gap,
    }
    verdicts = {"energy_conserved": drift <= ENERGY_DRIFT_TOL, "hamiltonian_field_matches": field_gap <= 1e-10}
    frame = pd.DataFrame({"quantity": ["max_energy_drift", "field_gap"], "value": [drift, field_gap]})
    return CommandResult(_base_inputs(cfg), results, {"energy_drift": ENERGY_DRIFT_TOL}, verdicts, frame)


def cmd_classify(cfg: RunConfig) -> CommandResult:
    opts = cfg.options
    scan = opts.get("scan")
    num = int(opts.get("num", 200))
    results: dict = {}
    verdicts: dict = {}
    if scan == "curve":
        frame = scan_reversibility_curve(num)
        results["labels"] = sorted(frame["label_minus"].unique())
    elif scan == "region":
        axis = np.linspace(-0.1, 0.1, num)
        frame = scan_region_4d(axis, axis)
        results["labels"] = sorted(frame["label"].unique())
    elif scan == "surfaces":
        charts = discriminant_surfaces()
        frame = pd.concat([chart.points.assign(surface=name) for name, chart in charts.items()], ignore_index=True)
        results["normals"] = {name: chart.normal for name, chart in charts.items()}
        verdicts = {f"{name}_normal": chart.normal_error <= 1e-4 for name, chart in charts.items()}
    elif opts.get("lambda") is not None:
        item = classify_region_4d(np.asarray(opts["lambda"], dtype=float))
        results["origin"] = item.to_dict()
        frame = pd.DataFrame([{"label": item.label}])
    elif opts.get("c") is not None:
        spectrum = michelson_spectrum(float(opts["c"]))
        results = {
            "Q_minus": spectrum.minus.to_dict(),
            "Q_plus": spectrum.plus.to_dict(),
            "real_rate": spectrum.real_rate,
            "rho": spectrum.rho,
            "omega": spectrum.omega,
        }
        verdicts = {"divergence_free": spectrum.divergence_defect <= 1e-10, "shilnikov": 0.0 < spectrum.rho < spectrum.real_rate}
        frame = pd.DataFrame([{"real_rate": spectrum.real_rate, "rho": spectrum.rho, "omega": spectrum.omega}])
    elif opts.get("nu1") is not None and opts.get("nu3") is not None:
        minus = classify_reversibility_4d(float(opts["nu1"]), float(opts["nu3"]), "p-")
        plus = classify_reversibility_4d(float(opts["nu1"]), float(opts["nu3"]), "p+")
        results = {"label": minus.label, "p_minus": minus.to_dict(), "p_plus": plus.to_dict()}
        frame = pd.DataFrame([{"point": "p-", "label": minus.label}, {"point": "p+", "label": plus.label}])
    else:
        raise PreconditionError("classify 需要 --nu1/--nu3、--lambda、--c 或 --scan 之一")
    return CommandResult(_base_inputs(cfg), results, {}, verdicts, frame)


def cmd_export_orbit(cfg: RunConfig) -> CommandResult:
    which = cfg.options.get("which", "kuramoto")
    if which == "kuramoto":
        step = float(cfg.options.get("step", 0.01))
        t_max = cfg.t_cut
        grid = np.arange(-t_max, t_max + 0.5 * step, step)
        frame = KuramotoOrbit().trajectory(grid).to_frame(["p1", "p2", "p3"])
    elif which == "homoclinic":
        P = float(cfg.options.get("P", -2.0))
        profile = shoot_homoclinic_4d(P, cfg.T, cfg.tol)
        frame = profile.full_orbit().to_frame(["u", "du", "d2u", "d3u"])
    else:
        raise PreconditionError(f"未知的轨道 {which}")
    results = {"which": which, "rows": len(frame)}
    return CommandResult(_base_inputs(cfg), results, {}, {}, frame)


def cmd_crosscheck(cfg: RunConfig) -> CommandResult:
    basis = adjoint_basis_michelson(max(cfg.t_cut, 20.0), cfg.tol)
    frame = cross_validate_3d(basis, cfg.t_cut, cfg.tol)
    worst = float(frame["difference"].abs().max())
    verdicts = {"methods_agree": worst <= CROSSCHECK_TOL}
    results = {"max_difference": worst, "table": frame.to_dict(orient="records")}
    return CommandResult(_base_inputs(cfg), results, {"difference": CROSSCHECK_TOL}, verdicts, frame)


COMMANDS: dict[str, Callable[[RunConfig], CommandResult]] = {
    "table1": cmd_table1,
    "table2": cmd_table2,
    "het": cmd_het,
    "hom4d": cmd_hom4d,
    "hamiltonian": cmd_hamiltonian,
    "classify": cmd_classify,
    "export-orbit": cmd_export_orbit,
    "crosscheck": cmd_crosscheck,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PRECONDITION, f"{self.prog}: 参数错误: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--abs-tol", type=float, default=1e-11, help="积分绝对容差")
    common.add_argument("--rel-tol", type=float, default=1e-11, help="积分相对容差")
    common.add_argument("--max-step", type=float, default=0.005, help="积分最大步长")
    common.add_argument("--max-iters", type=int, default=50, help="牛顿迭代最大次数")
    common.add_argument("--kappa", type=float, default=1.0)
    common.add_argument("--t-cut", type=float, default=20.0, help="半直线积分的截断时刻")
    common.add_argument("--T", type=float, default=25.0, help="同宿边值问题的半区间长度")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--output", default=None, help="输出文件路径，缺省写到标准输出")
    common.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = _Parser(prog="cli.py", description="幂零奇点展开族中异宿与同宿分岔的数值复现")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    table1 = sub.add_parser("table1", parents=[common], help="[0, t_cut] 上的三个积分")
    table1.add_argument("--sweep", action="store_true", help="同时给出容差扫描")
    table2 = sub.add_parser("table2", parents=[common], help="积分尾部上界")
    table2.add_argument("--t0", type=float, default=None)
    sub.add_parser("het", parents=[common], help="Melnikov 矩阵、异宿分岔曲线切向量与非退化行列式")
    hom = sub.add_parser("hom4d", parents=[common], help="四维同宿轨道与分岔超曲面")
    hom.add_argument("--P", type=float, default=-2.0)
    ham = sub.add_parser("hamiltonian", parents=[common], help="Hamilton 结构与能量守恒检验")
    ham.add_argument("--n", type=int, default=None, help="维数，缺省时取 --nu 的长度，再缺省为 4")
    ham.add_argument("--nu3", type=float, default=0.5)
    ham.add_argument("--nu", type=float, nargs="+", default=None, help="完整参数向量 ν₁ … νₙ")
    ham.add_argument("--delta", type=float, default=1e-6, help="初值相对 p₋ 在 y₂ 方向的扰动")
    ham.add_argument("--t-end", type=float, default=10.0)
    cls = sub.add_parser("classify", parents=[common], help="平衡点谱分类")
    cls.add_argument("--nu1", type=float, default=None)
    cls.add_argument("--nu3", type=float, default=None)
    cls.add_argument("--lambda", dest="lam", type=float, nargs=4, default=None)
    cls.add_argument("--c", type=float, default=None, help="Michelson 参数 c")
    cls.add_argument("--scan", choices=("curve", "region", "surfaces"), default=None)
    cls.add_argument("--num", type=int, default=200)
    export = sub.add_parser("export-orbit", parents=[common], help="导出 Kuramoto 轨道或四维同宿轨道")
    export.add_argument("--which", choices=("kuramoto", "homoclinic"), default="kuramoto")
    export.add_argument("--step", type=float, default=0.01)
    export.add_argument("--P", type=float, default=-2.0)
    sub.add_parser("crosscheck", parents=[common], help="投影三维积分与约化方程的互相验证")
    return parser


_OPTION_KEYS = ("sweep", "t0", "P", "n", "nu3", "nu", "delta", "t_end", "nu1", "lam", "c", "scan", "num", "which", "step")


def build_config(args: argparse.Namespace) -> RunConfig:
    tol = ToleranceConfig(args.abs_tol, args.rel_tol, args.max_step, args.max_iters)
    if args.t_cut <= 0 or args.T <= 0:
        raise PreconditionError("t_cut 与 T 必须为正")
    options = {}
    for key in _OPTION_KEYS:
        if hasattr(args, key):
            options["lambda" if key == "lam" else key] = getattr(args, key)
    return RunConfig(args.subcommand, tol, args.t_cut, args.T, args.kappa, args.format, args.output, options)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, pd.DataFrame):
        return obj.to_dict(orient="records")
    raise TypeError(f"无法序列化 {type(obj).__name__}")


def render(result: CommandResult, output_format: str) -> str:
    if output_format == "csv":
        return result.frame.to_csv(index=False, float_format="%.17g")
    return json.dumps(result.payload(), default=_json_default, ensure_ascii=False, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        result = COMMANDS[cfg.subcommand](cfg)
    except PreconditionError as err:
        print(f"参数错误：{err}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as err:
        print(f"数值计算失败：{err}", file=sys.stderr)
        return EXIT_NUMERICAL

    text = render(result, cfg.output_format)
    if cfg.output_path:
        Path(cfg.output_path).write_text(text, encoding="utf-8")
        print(f"结果已保存为 {cfg.output_path}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    if not result.ok:
        failed = [k for k, v in result.verdicts.items() if v is not None and not v]
        print(f"验收检查未通过：{', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
