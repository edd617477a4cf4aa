"""実験スイート。各スイートは表と判定基準を SuiteResult として返す"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from czlab import cache
from czlab.accretive import (
    ApproxIdentity,
    ParaAccretive,
    ReproducingFamily,
    build_approx_identity,
    build_differences,
    build_reproducing_family,
    double_difference_constant,
    holder_convergence,
)
from czlab.errors import BranchSafetyError
from czlab.experiment import ExperimentConfig, build_b
from czlab.grid_core import Grid, GridFunction, lp_norm, pairing
from czlab.lp_kernels import BilinearOperatorFamily, operator_ao_decay, verify_kernel_family
from czlab.paraproduct import (
    beta_library,
    boundedness_ratio,
    build_paraproduct,
    kernel_family,
    kernel_size_constant,
    ratio_over_sqrt_carleson,
    verify_testing_conditions,
)
from czlab.probes import SmoothBump, gen_probes
from czlab.riesz_curve import (
    CurveKernels,
    LipschitzCurve,
    blowup_exponent,
    cauchy_sanity,
    flat_testing_conditions,
    kernel_bound_ratios,
    lp_sweep,
    pairing_identity_defect,
    representation_agreement,
    riesz_transform_form,
)
from czlab.spaces import approx_identity_convergence, h1_growth_experiment, reproducing_convergence
from czlab.tb_harness import (
    displaced_bump_growth,
    dual_sum_bound,
    extract_theta,
    mean_zero_dictionary,
    paraproduct_form,
    planted_beta_error,
    reduce_and_test,
    wbp_constant,
)

logger = logging.getLogger("czlab")

SIZE_BOUND = math.sqrt(2.0)


@dataclass
class Criterion:
    value: float
    threshold: float
    passed: bool


def _at_most(value: float, threshold: float) -> Criterion:
    # nan は比較が偽になるので不合格
    return Criterion(float(value), float(threshold), bool(value <= threshold))


def _at_least(value: float, threshold: float) -> Criterion:
    return Criterion(float(value), float(threshold), bool(value >= threshold))


def _above(value: float, threshold: float) -> Criterion:
    return Criterion(float(value), float(threshold), bool(value > threshold))


def _worst(values: list[float], pick: Callable[[list[float]], float] = max) -> float:
    """nan を一つでも含めば nan"""
    if not values or any(math.isnan(v) for v in values):
        return math.nan
    return pick(values)


@dataclass
class SuiteResult:
    suite: str
    tables: dict[str, list[dict[str, Any]]]
    criteria: dict[str, Criterion]
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria.values())

    def failed(self) -> list[str]:
        return [key for key, c in self.criteria.items() if not c.passed]


def _para_accretive(config: ExperimentConfig, grid: Grid | None = None) -> list[tuple[str, ParaAccretive]]:
    """設定の b を格子上に作り、ラベル (e.g., 'b0_one') とともに返す"""
    grid = grid if grid is not None else config.grid
    return [
        (f"b{i}_{spec['type']}", ParaAccretive.certify(build_b(spec, grid)))
        for i, spec in enumerate(config.b_specs)
    ]


def _reproducing_family(S: ApproxIdentity, refresh: bool) -> ReproducingFamily:
    if not refresh:
        cached = cache.load_family(S)
        if cached is not None:
            return cached
    family = build_reproducing_family(S)
    path = cache.save(family)
    logger.debug("キャッシュ保存: %s", path)
    return family


def _sup_on(f: GridFunction, mask: np.ndarray) -> float:
    return float(np.abs(f.values[mask]).max(initial=0.0))


def _bilinear_family(S: ApproxIdentity, D: dict[int, Any], b: ParaAccretive) -> BilinearOperatorFamily:
    """Θ_k(f1, f2) = D_k M_b[(S_k f1)(S_k f2)]"""
    inner = {k: S.operators[k] for k in D}
    return BilinearOperatorFamily(D, inner, inner, b.b)


# ---------------------------------------------------------------------------
# approx_identity


def run_approx_identity(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    grid = config.grid
    delta = float(config.params["delta"])
    delta0 = float(config.params["delta0"])
    f = SmoothBump(0.0, grid.half_width / 4).on(grid)
    one = GridFunction.constant(grid)
    identity_rows: list[dict[str, Any]] = []
    convergence_rows: list[dict[str, Any]] = []
    worst_identity = worst_cancel = 0.0
    slopes = []
    for label, b in _para_accretive(config):
        S = build_approx_identity(b, config.k_min, config.k_max)
        D = build_differences(S)
        mask = S.interior_mask()
        for k in S.scales:
            identity = _sup_on(S.operators[k].apply(b.b) - one, mask)
            row: dict[str, Any] = {"b": label, "k": k, "identity": identity,
                                   "double_difference": double_difference_constant(S, k, seed=config.seed)}
            if k in D:
                row["D_b"] = _sup_on(D[k].apply(b.b), mask)
                row["DT_b"] = _sup_on(D[k].transpose().apply(b.b), mask)
                worst_cancel = max(worst_cancel, row["D_b"], row["DT_b"])
            worst_identity = max(worst_identity, identity)
            identity_rows.append(row)

        holder = holder_convergence(S, f, delta, seed=config.seed)
        mollified = approx_identity_convergence(S.mollifiers, f)
        slopes.append(holder.slope)
        for i, k in enumerate(S.scales):
            convergence_rows.append({
                "b": label,
                "k": k,
                "holder_error": holder.errors[i],
                "mollifier_fine": mollified.fine_errors[i],
                "mollifier_coarse": mollified.coarse_norms[i],
                "mollifier_sup_ratio": mollified.sup_ratios[i],
            })
        logger.info("%s: Hölder 収束の傾き %.3f", label, holder.slope)

    return SuiteResult(
        suite="approx_identity",
        tables={"identity": identity_rows, "convergence": convergence_rows},
        criteria={
            "identity": _at_most(worst_identity, config.tolerance("identity")),
            "cancellation": _at_most(worst_cancel, config.tolerance("cancellation")),
            "holder_slope": _at_most(
                _worst(slopes), -(delta0 - delta) + config.tolerance("holder_slack")
            ),
        },
    )


# ---------------------------------------------------------------------------
# almost_orthogonality


def run_almost_orthogonality(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    gamma = float(config.params["gamma"])
    tol = config.tolerance("cancellation")
    rows: list[dict[str, Any]] = []
    slopes = []
    tags: list[str] = []
    for label, b in _para_accretive(config):
        S = build_approx_identity(b, config.k_min, config.k_max)
        D = build_differences(S)
        theta = _bilinear_family(S, D, b)
        reports = {
            "linear": operator_ao_decay(D, D, b.b, "linear", tol=tol),
            "adjoint_bilinear": operator_ao_decay(theta, D, b.b, "adjoint_bilinear", tol=tol),
            "bilinear": operator_ao_decay(theta, D, b.b, "bilinear", tol=tol),
        }
        for mode, report in reports.items():
            for gap, ratio, norm in zip(report.gaps, report.ratios, report.norms):
                rows.append({"b": label, "mode": mode, "gap": gap, "ratio": ratio, "norm": norm})
            slopes.append(report.norm_slope)
            tags += [f"{label}/{mode}: {t}" for t in report.tags]
            logger.info("%s %s: ノルムの減衰傾き %.3f", label, mode, report.norm_slope)
    if tags:
        logger.warning("相殺条件の違反: %s", "; ".join(tags))
    return SuiteResult(
        suite="almost_orthogonality",
        tables={"ao": rows},
        criteria={
            "decay_slope": _at_most(_worst(slopes), -gamma + config.tolerance("slope_slack")),
            "cancellation": _at_most(len(tags), 0),
        },
    )


# ---------------------------------------------------------------------------
# h1_growth


def run_h1_growth(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    scales = list(range(config.k_min, config.k_max + 1))
    threshold = config.tolerance("exponent")
    report = h1_growth_experiment(config.grid, scales, scales, float(config.params["N"]), threshold)
    logger.info("H1 成長指数: %.4f", report.exponent)
    return SuiteResult(
        suite="h1_growth",
        tables={"h1": report.rows},
        criteria={"growth_exponent": _at_most(report.exponent, threshold)},
    )


# ---------------------------------------------------------------------------
# reproducing


def run_reproducing(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    grid = config.grid
    gamma_family = float(config.params["gamma_family"])
    rows: list[dict[str, Any]] = []
    worst_residual = 0.0
    non_monotone = 0
    gammas = []
    for label, b in _para_accretive(config):
        S = build_approx_identity(b, config.k_min, config.k_max)
        family = _reproducing_family(S, refresh)
        logger.info("%s: ランク %d、残差 %.3g", label, family.rank, family.residual)
        for i, phi in enumerate(gen_probes(config.probes, grid, b.b)):
            target = b.b * phi
            scale = lp_norm(target, 2)
            if scale > 0:
                worst_residual = max(worst_residual, lp_norm(family.reproduce(phi) - target, 2) / scale)
            l2 = reproducing_convergence(family, phi, "L2")
            h1 = reproducing_convergence(family, phi, "H1")
            if not l2.decreasing:
                non_monotone += 1
            gammas.append(h1.gamma_fit)
            for mode, report in (("L2", l2), ("H1", h1)):
                for M, error in zip(report.M_values, report.errors):
                    rows.append({"b": label, "probe": i, "mode": mode, "M": M, "error": error})
    return SuiteResult(
        suite="reproducing",
        tables={"errors": rows},
        criteria={
            "residual": _at_most(worst_residual, config.tolerance("residual")),
            "l2_monotone": _at_most(non_monotone, 0),
            "h1_gamma": _at_least(_worst(gammas, min), gamma_family - config.tolerance("gamma_slack")),
        },
    )


# ---------------------------------------------------------------------------
# dual_bound

Triple = tuple[float, float, float]


def _dual_ratios(config: ExperimentConfig, grid: Grid) -> tuple[dict[Triple, float], int]:
    """格子 grid での三つ組ごとの双対和の比（b について最大）と仮定違反の数"""
    scoped = config.with_grid(grid)
    triples: list[Triple] = [(float(p), float(p1), float(p2)) for p, p1, p2 in config.params["triples"]]
    probes = gen_probes(config.probes, grid)
    ratios: dict[Triple, float] = {}
    violations = 0
    for _, b in _para_accretive(scoped, grid):
        S = build_approx_identity(b, scoped.k_min, scoped.k_max)
        theta = _bilinear_family(S, build_differences(S), b)
        for p, p1, p2 in triples:
            report = dual_sum_bound(theta, b, b, b, p, p1, p2, probes, config.tolerance("hypotheses"))
            ratios[(p, p1, p2)] = max(ratios.get((p, p1, p2), 0.0), report.bound_ratio)
            violations += len(report.tags)
    return ratios, violations


def run_dual_bound(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    coarse_grid = config.grid
    fine_grid = Grid(coarse_grid.half_width, coarse_grid.n_points * int(config.params["refine"]))
    coarse, violations_coarse = _dual_ratios(config, coarse_grid)
    fine, violations_fine = _dual_ratios(config, fine_grid)
    rows = []
    drift = []
    for triple in coarse:
        p, p1, p2 = triple
        for grid, ratios in ((coarse_grid, coarse), (fine_grid, fine)):
            rows.append({"n_points": grid.n_points, "p": p, "p1": p1, "p2": p2, "ratio": ratios[triple]})
        if coarse[triple] > 0 and math.isfinite(fine[triple]):
            drift.append(abs(fine[triple] / coarse[triple] - 1.0))
        else:
            drift.append(math.nan)
        logger.info("(p,p1,p2)=(%g,%g,%g): 比 %.4g → %.4g", p, p1, p2, coarse[triple], fine[triple])
    return SuiteResult(
        suite="dual_bound",
        tables={"dual": rows},
        criteria={
            "stability": _at_most(_worst(drift), config.tolerance("stability")),
            "hypotheses": _at_most(violations_coarse + violations_fine, 0),
        },
    )


# ---------------------------------------------------------------------------
# paraproduct


def run_paraproduct(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    grid = config.grid
    R_values = [float(R) for R in config.params["R_values"]]
    gamma = float(config.params["gamma"])
    trials = int(config.params["trials"])
    slack = config.tolerance("slope_slack")
    probes = gen_probes(config.probes, grid)
    testing_rows: list[dict[str, Any]] = []
    bounded_rows: list[dict[str, Any]] = []
    e0_fractions, transpose_slopes, N_fits, normalized = [], [], [], []
    for label, b in _para_accretive(config):
        S = build_approx_identity(b, config.k_min, config.k_max)
        family = _reproducing_family(S, refresh)
        for name, beta in beta_library(grid).items():
            P = build_paraproduct(family, S, S, beta)
            testing = verify_testing_conditions(P, R_values, probes)
            for i, R in enumerate(testing.R_values):
                testing_rows.append({"b": label, "beta": name, "R": R, "e0": testing.e0[i],
                                     "e1": testing.e1[i], "e2": testing.e2[i]})
            target = testing.target
            e0_fractions.append(testing.e0[-1] / target if target > 0 else math.inf)
            transpose_slopes += [testing.slopes["e1"], testing.slopes["e2"]]

            kernel = verify_kernel_family(kernel_family(P, gamma=gamma), n_samples=256, seed=config.seed)
            N_fits.append(kernel.N_fit)
            ratio = boundedness_ratio(P, trials=trials, seed=config.seed)
            over = ratio_over_sqrt_carleson(P, ratio)
            if over > 0:
                normalized.append(over)
            bounded_rows.append({"b": label, "beta": name, "ratio": ratio, "carleson": P.carleson.norm,
                                 "ratio_over_sqrt_carleson": over, "N_fit": kernel.N_fit,
                                 "size_constant": kernel_size_constant(P, seed=config.seed)})
            logger.info("%s β=%s: e0/目標 %.3g、N_fit %.3g", label, name, e0_fractions[-1], kernel.N_fit)
    spread = max(normalized) / min(normalized) if normalized else math.nan
    return SuiteResult(
        suite="paraproduct",
        tables={"testing": testing_rows, "boundedness": bounded_rows},
        criteria={
            "testing_residual": _at_most(_worst(e0_fractions), config.tolerance("testing_fraction")),
            "transpose_decay": _at_most(_worst(transpose_slopes), -gamma + slack),
            "kernel_decay": _above(_worst(N_fits, min), config.tolerance("N_min")),
            "carleson_spread": _at_most(spread, config.tolerance("carleson_spread")),
        },
    )


# ---------------------------------------------------------------------------
# tb_audit


def run_tb_audit(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    grid = config.grid
    R_values = [float(R) for R in config.params["R_values"]]
    order = int(config.params["order"])

    # 平坦な Riesz 型の形式（b_i = γ′ = 1）
    flat = LipschitzCurve("flat")
    one = flat.certify(grid)
    T = riesz_transform_form(flat, grid)
    wbp = wbp_constant(T, one, one, one, R_values, m=order)
    growth = displaced_bump_growth(T, one, one, one, R_values[0],
                                   [float(t) for t in config.params["t_values"]], m=order)
    growth_bound = 1 + 3 * order + config.tolerance("growth_slack")
    logger.info("WBP: C=%.4g、散らばり %.3g、増大指数 %.3g", wbp.C_wbp, wbp.scatter, growth.exponent)

    S_one = build_approx_identity(one, config.k_min, config.k_max)
    family_one = _reproducing_family(S_one, refresh)
    theta_rows = []
    cancel = 0.0
    for k in family_one.scales:
        theta = extract_theta(T, family_one, S_one.operators, S_one.operators, one, one, k, n_y=6)
        cancel = max(cancel, theta.cancel_residual)
        theta_rows.append({"k": k, "A_fit": theta.A_fit, "N_fit": theta.N_fit,
                           "cancel_residual": theta.cancel_residual})

    # β を埋め込んだパラプロダクトからの還元
    label, b = _para_accretive(config)[0]
    S = build_approx_identity(b, config.k_min, config.k_max)
    family = _reproducing_family(S, refresh)
    planted = beta_library(grid)["oscillation"]
    P = build_paraproduct(family, S, S, planted)
    reduction = reduce_and_test(paraproduct_form(P), family, family, family, R_values,
                                dictionary_size=int(config.params["dictionary_size"]))
    dictionary = mean_zero_dictionary(family.b, int(config.params["dictionary_size"]))
    beta_error = planted_beta_error(reduction, planted, family, dictionary)
    scale = max(abs(pairing(planted, b.b * phi)) for phi in dictionary)
    residual_bound = config.tolerance("residual_factor") * max(family.residual, 1e-3) * scale
    worst_residual = max(reduction.residuals.values(), default=0.0)
    reduction_rows = [
        {"b": label, "form": key, "residual": reduction.residuals[key],
         "beta_error": reduction.beta_errors[key]}
        for key in reduction.residuals
    ]
    logger.info("還元: β 誤差 %.3g、残差 %.3g (上限 %.3g)", beta_error, worst_residual, residual_bound)

    wbp_rows = [{"R": R, "ratio": value} for R, value in wbp.by_R.items()]
    growth_rows = [{"t": t, "ratio": r} for t, r in zip(growth.t_values, growth.ratios)]
    return SuiteResult(
        suite="tb_audit",
        tables={"wbp": wbp_rows, "growth": growth_rows, "theta": theta_rows, "reduction": reduction_rows},
        criteria={
            "wbp_scatter": _at_most(wbp.scatter, config.tolerance("wbp_scatter")),
            "theta_cancellation": _at_most(cancel, config.tolerance("theta_cancel")),
            "displaced_growth": _at_most(growth.exponent, growth_bound),
            "planted_beta": _at_most(beta_error, config.tolerance("beta_error")),
            "remainder_residual": _at_most(worst_residual, residual_bound),
        },
        extras={"C_wbp": wbp.C_wbp, "bilinear_ratios": reduction.ratios},
    )


# ---------------------------------------------------------------------------
# riesz_curve


def run_riesz_curve(config: ExperimentConfig, refresh: bool = False) -> SuiteResult:
    grid = config.grid
    sweep_grid = Grid.from_dict(config.params["sweep_grid"])
    R_values = [float(R) for R in config.params["R_values"]]
    p, p1, p2 = (float(v) for v in config.params["p"])
    f1, f2 = SmoothBump(-0.5, 1.5), SmoothBump(0.5, 1.5)
    f0 = SmoothBump(0.0, 1.0)

    kernel_rows: list[dict[str, Any]] = []
    identity, size, agreement = [], [], []
    branch_failures = 0
    curves = [LipschitzCurve.from_dict(spec, support=grid.half_width / 4) for spec in config.curve_specs]
    for curve in curves:
        K = CurveKernels(curve)
        row: dict[str, Any] = {"curve": curve.kind, "lambda": curve.lam}
        try:
            bounds = kernel_bound_ratios(K, seed=config.seed)
            row.update(size=bounds.size, k1=bounds.k1, dy2=bounds.dy2,
                       identity_defect=bounds.identity_defect)
            identity.append(bounds.identity_defect)
            size.append(bounds.size)
            for j in (1, 2):
                row[f"agreement_{j}"] = representation_agreement(K, j, f1, f2, grid)
                agreement.append(row[f"agreement_{j}"])
            defect = pairing_identity_defect(K, f0, f1, f2, grid)
            row.update(pairing_identity_pv=defect.pv, pairing_identity_ibp=defect.ibp)
        except BranchSafetyError as e:
            branch_failures += 1
            logger.error("λ=%.2f: %s", curve.lam, e)
        kernel_rows.append(row)
        logger.info("λ=%.2f: 一致度 %s", curve.lam, row.get("agreement_1"))

    cauchy_rows: list[dict[str, Any]] = []
    cauchy, controls, closed_form = [], [], []
    sweep_curves = [LipschitzCurve("flat"),
                    LipschitzCurve("sawtooth", 0.2, support=sweep_grid.half_width / 4)]
    for curve in sweep_curves:
        sanity = cauchy_sanity(curve, sweep_grid, R_values)
        for R, forward, transpose in zip(sanity.R_values, sanity.forward, sanity.transpose):
            cauchy_rows.append({"curve": curve.kind, "lambda": curve.lam, "R": R,
                                "forward": forward, "transpose": transpose})
        cauchy += [abs(sanity.forward[-1]) / sanity.scale, abs(sanity.transpose[-1]) / sanity.scale]
        controls.append(sanity.control)
        closed_form.append(sanity.closed_form_defect)

    testing = flat_testing_conditions(sweep_grid, R_values)
    testing_rows = [
        {"R": R, "forward": a, "transpose1": b, "transpose2": c}
        for R, a, b, c in zip(testing.R_values, testing.forward, testing.transpose1, testing.transpose2)
    ]
    testing_last = max(testing.forward[-1], testing.transpose1[-1], testing.transpose2[-1]) / testing.scale

    kind = curves[0].kind if curves else "sawtooth"
    sweep = lp_sweep(kind, [c.lam for c in curves], grid, p, p1, p2,
                     trials=int(config.params["trials"]), seed=config.seed)
    lp_rows = [
        {"lambda": lam, "ratio": r, "curve_ratio": cr, "transfer_factor": tf, "transfer_ratio": tr,
         "normalized": nr}
        for lam, r, cr, tf, tr, nr in zip(sweep.lambdas, sweep.ratios, sweep.curve_ratios,
                                          sweep.transfer_factors, sweep.transfer_ratios, sweep.normalized)
    ]
    return SuiteResult(
        suite="riesz_curve",
        tables={"kernels": kernel_rows, "cauchy": cauchy_rows, "testing": testing_rows, "lp": lp_rows},
        criteria={
            "kernel_identity": _at_most(_worst(identity), config.tolerance("identity")),
            "kernel_size": _at_most(_worst(size), SIZE_BOUND),
            "pv_agreement": _at_most(_worst(agreement), config.tolerance("agreement")),
            "branch_safety": _at_most(branch_failures, 0),
            "cauchy_limits": _at_most(_worst(cauchy), config.tolerance("cauchy")),
            "negative_control": _at_least(_worst(controls, min), 0.5),
            "flat_testing": _at_most(testing_last, config.tolerance("testing")),
            "transfer": _at_most(sweep.transfer_defect, config.tolerance("transfer")),
        },
        extras={"blowup_exponent": blowup_exponent(sweep), "blowup_bound": sweep.blowup_bound,
                "closed_form_defect": max(closed_form, default=0.0)},
    )


RUNNERS: dict[str, Callable[[ExperimentConfig, bool], SuiteResult]] = {
    "approx_identity": run_approx_identity,
    "almost_orthogonality": run_almost_orthogonality,
    "h1_growth": run_h1_growth,
    "reproducing": run_reproducing,
    "dual_bound": run_dual_bound,
    "paraproduct": run_paraproduct,
    "tb_audit": run_tb_audit,
    "riesz_curve": run_riesz_curve,
}
