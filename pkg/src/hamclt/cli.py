"""Command line runner: ``ham-clt <subcommand> --config PATH [--seed N] [--radii 4,8,...] [--out DIR]``.

Each subcommand writes ``<subcommand>.csv`` and ``<subcommand>.json`` into the
output directory.

CSV columns (fixed): ``quantity, R, t, s, n, estimate, std_error, bound, check``.
Empty cells mean "not applicable"; ``std_error`` is ``deterministic`` for
values computed without sampling and ``statistic`` for test statistics of a
sample (their sampling error is summarised by the reference rows); ``check`` is ``pass``/``fail`` for asserted
rows and empty otherwise.

Exit codes: 0 when every asserted check passes, 1 when a check fails, 2 for
an invalid configuration or command line, 3 for a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import chaos, clt, noise, stein
from ._backend import configure_threads, get_backend
from .cache import ArrayCache
from .config import ConfigError, ExperimentConfig, load
from .covariance import Kind, ball_volume, heat
from .estimate import Estimate
from .streams import Stream

SCHEMA_VERSION = 1
CSV_COLUMNS = ("quantity", "R", "t", "s", "n", "estimate", "std_error", "bound", "check")
SUBCOMMANDS = ("constants", "variance", "bounds", "simulate", "clt")


class NumericalFailure(RuntimeError):
    """A quantity could not be computed; the message names it."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "fail"
    return format(float(v), ".17g")


@dataclass
class Report:
    subcommand: str
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def row(self, quantity, estimate, std_error="deterministic", bound=None, R=None, t=None, s=None, n=None, check=None):
        if isinstance(estimate, Estimate):
            std_error = estimate.std_error if estimate.count else "deterministic"
            estimate = estimate.value
        if not np.isfinite(estimate):
            raise NumericalFailure(f"{quantity} is not finite (R={R}, t={t}, n={n})")
        self.rows.append({"quantity": quantity, "R": R, "t": t, "s": s, "n": n, "estimate": estimate, "std_error": std_error, "bound": bound, "check": check})
        if check is not None:
            self.checks.append({"name": quantity, "R": R, "t": t, "s": s, "n": n, "passed": bool(check)})

    def check(self, name, passed, **info):
        self.checks.append({"name": name, "passed": bool(passed), **{k: _jsonable(v) for k, v in info.items()}})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def write(self, out: Path) -> tuple[Path, Path]:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.subcommand}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        summary = {
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "version": _version(),
            "backend": get_backend(),
            "seed": self.config.seed,
            "config_hash": self.config.config_hash(),
            "config": self.config.data,
            "model": self.config.model.to_config(),
            "passed": self.passed,
            "checks": self.checks,
            "rows": len(self.rows),
            **{k: _jsonable(v) for k, v in self.extra.items()},
        }
        json_path = out / f"{self.subcommand}.json"
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


# -- discrepancy findings ---------------------------------------------------------------


def discrepancy_findings(model) -> dict:
    """Two normalisation findings recorded in every summary.

    ``first_order_lag_integral``: the lag integral of the first covariance
    term is ``||gamma|| t^2 s^2 / 4``, not ``||gamma|| (t^2 + s^2) / 2``; shown at
    ``t = 1, s = 2`` where the two differ (1 against 2.5 times ``||gamma||``).

    ``ball_energy_growth``: ``int |F 1_{B_R}|^2 d mu`` grows like ``R^d`` for
    integrable ``gamma`` (fitted exponent), not ``R^{d/2}``.
    """
    ref = model if (model.integrable and model.dimension == 1) else heat(1.0, 1)
    t, s = 1.0, 2.0
    brute = chaos.first_order_lag_integral_quadrature(t, s, ref)
    mass = ref.gamma_mass
    product_form = mass * t * t * s * s / 4
    sum_form = mass * (t * t + s * s) / 2
    lag = {
        "model": ref.to_config(),
        "t": t,
        "s": s,
        "brute_force": brute,
        "product_form": product_form,
        "sum_form": sum_form,
        "matches": "product_form" if abs(brute - product_form) < abs(brute - sum_form) else "sum_form",
        "relative_error_product_form": abs(brute - product_form) / product_form,
    }
    ref2 = model if model.integrable else heat(1.0, model.dimension)
    radii = [8.0, 16.0, 32.0, 64.0, 128.0]
    energies = [asy.ball_energy(R, ref2) for R in radii]
    fit = asy.exponent_fit(list(zip(radii, energies)))
    d = ref2.dimension
    growth = {
        "model": ref2.to_config(),
        "radii": radii,
        "ball_energy": energies,
        "fitted_exponent": fit.slope,
        "volume_exponent": float(d),
        "half_volume_exponent": d / 2,
        "matches": "volume_exponent" if abs(fit.slope - d) < abs(fit.slope - d / 2) else "half_volume_exponent",
        "bound_constant": ref2.gamma_mass * ball_volume(d),
        "volume_bound_holds": all(e <= ref2.gamma_mass * ball_volume(d) * R**d * (1 + 1e-9) for R, e in zip(radii, energies)),
    }
    return {"first_order_lag_integral": lag, "ball_energy_growth": growth}


# -- subcommands ---------------------------------------------------------------------------


def _time_pairs(times):
    ts = sorted(set(times))
    return [(a, b) for i, a in enumerate(ts) for b in ts[i:]]


def run_constants(cfg: ExperimentConfig, rep: Report) -> None:
    m = cfg.model
    stream = Stream(cfg.seed, 1)
    cmu = m.dalang_constant
    rep.row("C_mu", cmu, check=bool(np.isfinite(cmu) and cmu > 0))
    if m.kind == Kind.WHITE:
        rep.row("C_mu_white_exact", abs(cmu - 0.5), bound=1e-10, check=abs(cmu - 0.5) <= 1e-10)
    if m.dimension == 2:
        try:
            rep.row("q", m.embed_exponent())
        except ValueError:
            pass
    for i, (t, s) in enumerate(_time_pairs(cfg.times)):
        if m.integrable:
            lc = asy.limit_constant_K(t, s, m, N=cfg.chaos["N"], count=cfg.chaos["mc_count"], rng=stream.child(i))
            rep.row("K", lc.K, lc.K_std_error, bound=lc.K_tail_bound, t=t, s=s)
        if m.kind == Kind.RIESZ:
            lc = asy.limit_constant_Kprime(t, s, m.beta, m.dimension)
            rep.row("Kprime", lc.Kprime, t=t, s=s)
    if m.kind == Kind.RIESZ:
        rep.row("kappa", asy.kappa(m.beta, m.dimension))


def run_variance(cfg: ExperimentConfig, rep: Report) -> None:
    m = cfg.model
    stream = Stream(cfg.seed, 2)
    N = cfg.chaos["N"]
    d = m.dimension
    expected = 2 * d - m.energy_exponent
    for j, t in enumerate(cfg.times):
        totals = []
        for i, R in enumerate(cfg.radii):
            v = asy.variance_estimate(R, t, t, m, N=N, count=cfg.chaos["mc_count"], rng=stream.child(1000 * j + i))
            for n, est in enumerate(v.per_chaos, start=1):
                rep.row("chaos_variance", est, bound=asy.chaos_variance_bound(n, R, t, m), R=R, t=t, s=t, n=n)
            rep.row("variance_total", v.total, bound=v.tail_bound, R=R, t=t, s=t, n=N)
            rep.row("variance_scaled", v.total.value / R**expected, v.total.std_error / R**expected, R=R, t=t, s=t)
            totals.append(v.total.value)
        if len(cfg.radii) >= 4 and max(cfg.radii) / min(cfg.radii) >= 10:
            fit = asy.exponent_fit(list(zip(cfg.radii, totals)))
            rep.row("variance_slope", fit.slope, fit.half_width, bound=expected, t=t, check=abs(fit.slope - expected) <= 0.05)


def run_bounds(cfg: ExperimentConfig, rep: Report) -> None:
    m = cfg.model
    stream = Stream(cfg.seed, 3)
    d = m.dimension
    for j, t in enumerate(cfg.times):
        A, dtv = [], []
        for i, R in enumerate(cfg.radii):
            sb = stein.stein_bound_A(R, t, m, count=cfg.chaos["mc_count"], rng=stream.child(1000 * j + i), N=cfg.chaos["N"], variance_count=cfg.chaos["mc_count"])
            for k, est in enumerate(sb.A_terms, start=1):
                rep.row(f"A{k}", est, R=R, t=t)
            rep.row("A_total", sb.A_total, R=R, t=t)
            rep.row("dtv_bound", sb.dtv_bound, sb.dtv_std_error, R=R, t=t)
            A.append(sb.A_total.value)
            dtv.append(sb.dtv_bound)
            inc = asy.increment_norm(R, t, t / 2, m, N=cfg.chaos["N"], count=cfg.chaos["mc_count"], rng=stream.child(500_000 + 1000 * j + i))
            rep.row("increment_norm", inc.value, inc.std_error, bound=inc.bound, R=R, t=t, s=t / 2, check=inc.value <= inc.bound + 3 * inc.std_error)
        if len(cfg.radii) >= 4 and max(cfg.radii) / min(cfg.radii) >= 10:
            if m.kind == Kind.RIESZ:
                a_exp, v_exp = 4 * d - 3 * m.beta, -m.beta / 2
            else:
                a_exp, v_exp = float(d), -d / 2
            fa = asy.exponent_fit(list(zip(cfg.radii, A)))
            fd = asy.exponent_fit(list(zip(cfg.radii, dtv)))
            rep.row("A_total_slope", fa.slope, fa.half_width, bound=a_exp, t=t, check=abs(fa.slope - a_exp) <= 0.15)
            rep.row("dtv_bound_slope", fd.slope, fd.half_width, bound=v_exp, t=t, check=abs(fd.slope - v_exp) <= 0.15)
    if d == 1:
        _derivative_domination(cfg, rep)


def _derivative_domination(cfg: ExperimentConfig, rep: Report) -> None:
    """Sup of ``||D_z u_N(t, 0)||_2 / f_1(z, 0; t)`` on an interior ``z`` grid, at two grid resolutions."""
    m = cfg.model
    t = max(cfg.times)
    n_sim = cfg.chaos["N_sim"]
    h = cfg.grid["x_resolution"]
    L = t + 2 * h
    sups = []
    for level, cells in enumerate((int(round(2 * L / h)), 2 * int(round(2 * L / h)))):
        grid = noise.build_grid(L, cells, m)
        coeffs = {n: noise.project_kernel(chaos.ChaosKernel(n, t, (0.0,)), grid) for n in range(1, n_sim + 1)}
        zs = np.linspace(-0.8 * t, 0.8 * t, 9)
        ratios = [noise.malliavin_derivative(coeffs, grid, z).l2_exact / (0.5 * (t - abs(z))) for z in zs]
        sups.append(max(ratios))
        rep.row("derivative_ratio_sup", sups[-1], t=t, n=n_sim)
    spread = max(sups) / min(sups)
    rep.row("derivative_ratio_spread", spread, bound=2.0, t=t, check=bool(np.isfinite(spread) and spread < 2.0))


def _simulation_grid(cfg: ExperimentConfig, out: Path):
    m = cfg.model
    if m.dimension != 1:
        raise ConfigError("simulation supports one-dimensional models only")
    return noise.build_grid(cfg.grid["half_width"], cfg.grid["cells"], m, cache=ArrayCache(out / "cache"))


def _simulate_streams(cfg: ExperimentConfig, out: Path):
    grid = _simulation_grid(cfg, out)
    zeta = noise.draw_gaussians(grid, cfg.chaos["samples"], Stream(cfg.seed, 4))
    streams = noise.ball_average_samples(grid, cfg.radii, cfg.times, cfg.chaos["N_sim"], zeta, cfg.grid["quad_order"])
    return grid, zeta, streams


def run_simulate(cfg: ExperimentConfig, rep: Report, out: Path) -> None:
    m = cfg.model
    grid, zeta, streams = _simulate_streams(cfg, out)
    rep.row("grid_clamped_eigenvalues", grid.clamped)
    rep.row("grid_factor_error", grid.factor_error(), bound=1e-8, check=grid.factor_error() <= 1e-8)
    expo = 2 * m.dimension - m.energy_exponent
    for (R, t), F in streams.items():
        mean = Estimate.from_samples(F)
        rep.row("F_mean", mean, R=R, t=t, check=abs(mean.value) <= 3 * mean.std_error + 1e-12)
        var = float(F.var(ddof=1))
        rep.row("F_variance_scaled", var / R**expo, var / R**expo * math.sqrt(2 / (F.size - 1)), R=R, t=t, s=t)
        rep.row("F_variance_discrete_n_le_2", noise.discrete_covariance(grid, R, t, t) / R**expo, R=R, t=t, s=t)
    # mean-one check of u_N at a few points
    t = max(cfg.times)
    xs = np.array([-1.0, 0.0, 1.0]) * min(1.0, grid.half_width - t)
    coeffs = {n: [noise.project_kernel(chaos.ChaosKernel(n, t, (x,)), grid) for x in xs] for n in range(1, cfg.chaos["N_sim"] + 1)}
    sol = noise.sample_solution(grid, coeffs, xs, zeta=zeta)
    for j, x in enumerate(xs):
        est = Estimate.from_samples(sol.values[:, j])
        rep.row("u_mean", est, t=t, s=float(x), check=abs(est.value - 1) <= 3 * est.std_error + 1e-12)
    path = out / "simulate_samples.csv"
    keys = list(streams)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + [f"F_R{_fmt(R)}_t{_fmt(t)}" for R, t in keys])
        for i in range(zeta.shape[0]):
            w.writerow([i] + [_fmt(streams[k][i]) for k in keys])
    rep.extra["samples_file"] = path.name


def run_clt(cfg: ExperimentConfig, rep: Report, out: Path) -> None:
    m = cfg.model
    grid, zeta, streams = _simulate_streams(cfg, out)
    radii = sorted(cfg.radii)
    t = max(cfg.times)
    w1s, kss = [], []
    for R in radii:
        r = clt.normality_report(streams[(R, t)])
        rep.row("ks_stat", r.ks_stat, "statistic", bound=r.ks_pvalue, R=R, t=t)
        rep.row("w1", r.w1, "statistic", R=R, t=t)
        rep.row("skewness", r.skewness, r.skewness_se, R=R, t=t)
        rep.row("excess_kurtosis", r.excess_kurtosis, r.excess_kurtosis_se, R=R, t=t)
        w1s.append(r.w1)
        kss.append(r.ks_stat)
    last = clt.normality_report(streams[(radii[-1], t)])
    rep.row("ks_pvalue_largest_R", last.ks_pvalue, "statistic", bound=0.01, R=radii[-1], t=t, check=last.ks_pvalue > 0.01)
    if len(radii) >= 2:
        rep.row("w1_decrease_first_to_last", w1s[0] - w1s[-1], "statistic", t=t, check=w1s[-1] < w1s[0])
        rep.extra["w1_strictly_decreasing"] = bool(np.all(np.diff(w1s) < 0))
    if len(radii) >= 4:
        table = clt.distance_rate_table(radii, w1s)
        rep.row("w1_slope", table.slope, table.slope_half_width, t=t, check=table.slope < 0)
    floor, spread = clt.gaussian_w1_floor(cfg.chaos["samples"], rng=Stream(cfg.seed, 5))
    rep.row("w1_gaussian_floor", floor, spread)
    times = sorted(set(cfg.times))
    if len(times) >= 2:
        _multi_time(cfg, rep, grid, streams, radii[-1], times[:4])


def _multi_time(cfg, rep, grid, streams, R, times):
    m = cfg.model
    expo = 2 * m.dimension - m.energy_exponent
    norm = math.sqrt(R**expo)
    S = np.stack([streams[(R, t)] for t in times], axis=1)
    target = np.empty((len(times), len(times)))
    tol = np.empty_like(target)
    for i, a in enumerate(times):
        for j, b in enumerate(times):
            if m.kind == Kind.RIESZ:
                target[i, j] = asy.limit_constant_Kprime(a, b, m.beta, m.dimension).Kprime
            else:
                lc = asy.limit_constant_K(a, b, m, N=cfg.chaos["N"], count=cfg.chaos["mc_count"], rng=Stream(cfg.seed, 6).child(10 * i + j))
                target[i, j] = lc.K
            # finite-R and discretisation offset of the exactly computable part
            tol[i, j] = abs(noise.discrete_covariance(grid, R, a, b) / R**expo - target[i, j])
    cmp_ = clt.multi_time_gaussianity(S, target, tol, normaliser=norm)
    for i, a in enumerate(times):
        for j, b in enumerate(times):
            if j < i:
                continue
            ok = abs(cmp_.empirical[i, j] - target[i, j]) <= 3 * cmp_.std_error[i, j] + tol[i, j]
            rep.row("covariance_scaled", cmp_.empirical[i, j], cmp_.std_error[i, j], bound=target[i, j], R=R, t=a, s=b, check=ok)
    gen = Stream(cfg.seed, 7).child(0).blocks(1)
    g = next(gen)[0]
    for k in range(3):
        a, b = g.normal(size=2)
        r = clt.normality_report(a * S[:, 0] + b * S[:, -1])
        rep.row("cramer_wold_ks_pvalue", r.ks_pvalue, "statistic", bound=0.01, R=R, n=k)


# -- entry point ---------------------------------------------------------------------------


def _parse_radii(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--radii: {exc}") from exc
    if not vals:
        raise ConfigError("--radii: empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ham-clt", description="Chaos-expansion experiments for the hyperbolic Anderson model with spatial noise.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="TOML experiment configuration")
    p.add_argument("--seed", type=int, default=None, help="override chaos.seed")
    p.add_argument("--radii", default=None, help="comma-separated radii, e.g. 4,8,16")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load(args.config).with_overrides(
            seed=args.seed,
            radii=_parse_radii(args.radii) if args.radii else None,
            out=args.out,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    configure_threads()
    out = Path(cfg.data["output"]["dir"])
    rep = Report(args.subcommand, cfg)
    try:
        if args.subcommand == "constants":
            run_constants(cfg, rep)
        elif args.subcommand == "variance":
            run_variance(cfg, rep)
        elif args.subcommand == "bounds":
            run_bounds(cfg, rep)
        elif args.subcommand == "simulate":
            run_simulate(cfg, rep, out)
        else:
            run_clt(cfg, rep, out)
        rep.extra["discrepancies"] = discrepancy_findings(cfg.model)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, noise.GramError, ArithmeticError, RuntimeError, ValueError, NotImplementedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    csv_path, json_path = rep.write(out)
    status = "ok" if rep.passed else "checks failed"
    print(f"{args.subcommand}: {status}; wrote {csv_path} and {json_path}")
    return 0 if rep.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
