"""Command line interface.

Subcommands: simulate, fit, test, mc size, mc power, grid-info, report.
Experiment output is a rates CSV plus a JSON log; ``--plot`` (or the report
subcommand) renders rejection-rate figures next to the CSV.  Exit code 2
signals an experiment error (too many failed replications).
"""

from __future__ import annotations

import dataclasses
import json
import sys

import click
import numpy as np

from . import __version__
from .estimation import discretize_theta, estimate_K, qmle, r_estimate_one_step
from .grids import feasible_radial_counts, make_grid
from .innovations import make_sampler
from .montecarlo import (
    ExperimentError,
    McConfig,
    alt_spec_default,
    default_width,
    emit_results,
    null_spec_default,
    run_power_experiment,
    run_size_experiment,
)
from .portmanteau import CSV_HEADER, gaussian_stat, rank_stat
from .scores import make_score
from .varma import SeriesData, VarmaSpec, residuals, simulate, validate_spec

DENSITIES = ("spherical_normal", "gaussian_mixture", "skew_t")


def _load_spec(path: str) -> VarmaSpec:
    with open(path) as fh:
        return VarmaSpec.from_json(fh.read())


def _load_series(path: str) -> SeriesData:
    with open(path) as fh:
        return SeriesData.from_csv(fh.read())


def _parse_m(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


@click.group()
@click.version_option(__version__)
def main():
    """Portmanteau goodness-of-fit tests for VARMA models, classical and
    center-outward rank-based."""


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              help="VarmaSpec JSON; defaults to the built-in VARMA(1,1) null.")
@click.option("--preset", type=click.Choice(["null", "alternative"]),
              default="null", show_default=True)
@click.option("--n", default=500, show_default=True)
@click.option("--burn-in", default=200, show_default=True)
@click.option("--density", type=click.Choice(DENSITIES),
              default="spherical_normal", show_default=True)
@click.option("--mixture-sigma2", type=click.Choice(["upper", "lower"]),
              default="upper", show_default=True,
              help="Which symmetric reading of the mixture's second covariance to use.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--innovations-out", type=click.Path(),
              help="Also write the generated innovations as CSV.")
def simulate_cmd(spec_path, preset, n, burn_in, density, mixture_sigma2,
                 seed, out, innovations_out):
    """Simulate a series and write it as CSV (header t,x1,...,xd)."""
    if spec_path:
        spec = _load_spec(spec_path)
    else:
        spec = null_spec_default() if preset == "null" else alt_spec_default()
    params = {"sigma2": mixture_sigma2} if density == "gaussian_mixture" else {}
    sampler = make_sampler(density, d=spec.d, **params)
    series = simulate(spec, n, sampler, seed=seed, burn_in=burn_in)
    with open(out, "w") as fh:
        fh.write(series.to_csv())
    if innovations_out:
        with open(innovations_out, "w") as fh:
            fh.write(SeriesData(series.innovations).to_csv())
    click.echo(f"wrote {out} ({n} x {spec.d})")


main.add_command(simulate_cmd, name="simulate")


@main.command(name="fit")
@click.option("--series", "series_path", required=True,
              type=click.Path(exists=True))
@click.option("--p", required=True, type=int)
@click.option("--q", required=True, type=int)
@click.option("--method", type=click.Choice(["qmle", "rank"]),
              default="qmle", show_default=True)
@click.option("--scores", type=click.Choice(["sign", "spearman", "vdw"]),
              default="vdw", show_default=True,
              help="Score family for the rank method.")
@click.option("--n-r", "n_R", type=int, default=None,
              help="Radii count for the rank grid (auto when omitted).")
@click.option("--grid-seed", default=0, show_default=True)
@click.option("--discretize", type=float, default=None,
              help="Round the preliminary estimate to a c·n^{-1/2} lattice first.")
@click.option("--out", required=True, type=click.Path())
def fit_cmd(series_path, p, q, method, scores, n_R, grid_seed, discretize, out):
    """Fit a VARMA(p,q) model; writes the fitted spec JSON plus metadata."""
    series = _load_series(series_path)
    fit = qmle(series, p, q)
    meta = {
        "method": "qmle",
        "converged": fit.converged,
        "iterations": fit.iterations,
        "gradient_norm": fit.final_gradient_norm,
        "sigma": fit.sigma_hat.tolist(),
        "n": series.n,
    }
    spec_out = fit.spec
    if method == "rank":
        theta_bar = fit.theta_hat
        if discretize is not None:
            theta_bar = discretize_theta(theta_bar, series.n, discretize)
        spec_bar = VarmaSpec.from_theta(theta_bar, series.d, p, q)
        grid = make_grid(series.n, series.d, n_R, seed=grid_seed)
        score = make_score(scores, series.d)
        K = estimate_K(series, spec_bar, score, grid)
        rest = r_estimate_one_step(series, spec_bar, score, grid, K)
        spec_out = rest.spec
        meta.update({
            "method": "rank",
            "scores": scores,
            "grid": {"n_R": grid.n_R, "n_S": grid.n_S, "n_0": grid.n_0,
                     "seed": grid_seed},
            "upsilon_cond": rest.upsilon_cond,
            "central_seq_norm_prelim":
                float(np.linalg.norm(rest.central_seq_at_prelim)),
            "central_seq_norm_estimate":
                float(np.linalg.norm(rest.central_seq_at_estimate)),
        })
    obj = json.loads(spec_out.to_json())
    obj["fit"] = meta
    with open(out, "w") as fh:
        json.dump(obj, fh, indent=2)
    click.echo(f"wrote {out}")


@main.command(name="test")
@click.option("--series", "series_path", required=True,
              type=click.Path(exists=True))
@click.option("--fit", "fit_path", type=click.Path(exists=True),
              help="Fitted spec JSON; when omitted the model is fit here.")
@click.option("--p", type=int, default=None)
@click.option("--q", type=int, default=None)
@click.option("--m", "m_text", default="5,10,15,20,25", show_default=True)
@click.option("--method", type=click.Choice(["gaussian", "rank"]),
              default="gaussian", show_default=True)
@click.option("--scores", type=click.Choice(["sign", "spearman", "vdw"]),
              default="vdw", show_default=True)
@click.option("--n-r", "n_R", type=int, default=None)
@click.option("--grid-seed", default=0, show_default=True)
@click.option("--literal-normalization", is_flag=True,
              help="Weight the Sigma^{-1}-premultiplied cross-covariances "
                   "by (Sigma x Sigma)^{-1} instead of the classical form.")
@click.option("--out", required=True, type=click.Path(),
              help="Output prefix; writes <out>.json and <out>.csv.")
def test_cmd(series_path, fit_path, p, q, m_text, method, scores, n_R,
             grid_seed, literal_normalization, out):
    """Run portmanteau tests over a list of lag depths."""
    series = _load_series(series_path)
    if fit_path:
        spec = _load_spec(fit_path)
        p, q = spec.p, spec.q
        fit = qmle(series, p, q, init=spec.theta())
    else:
        if p is None or q is None:
            raise click.UsageError("give --fit or both --p and --q")
        fit = qmle(series, p, q)
    m_values = _parse_m(m_text)
    reports = []
    if method == "gaussian":
        for m in m_values:
            reports.append(gaussian_stat(series, fit, m,
                                         literal_normalization=literal_normalization))
    else:
        grid = make_grid(series.n, series.d, n_R, seed=grid_seed)
        score = make_score(scores, series.d)
        K = estimate_K(series, fit.spec, score, grid)
        rest = r_estimate_one_step(series, fit.spec, score, grid, K)
        for m in m_values:
            reports.append(rank_stat(series, rest, score, grid, m, K))
    with open(f"{out}.csv", "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")
    with open(f"{out}.json", "w") as fh:
        fh.write(json.dumps([json.loads(r.to_json()) for r in reports],
                            indent=2))
    for r in reports:
        click.echo(f"m={r.m}: stat={r.statistic:.3f} df={r.df} "
                   f"p={r.p_value:.4f}")
    click.echo(f"wrote {out}.csv and {out}.json")


def _mc_config(density, mixture_sigma2, n, reps, m_text, tests, alpha, seed,
               width, n_R, grid_seed, paper_scale, power):
    if paper_scale:
        n, reps, n_R = 1000, 300, n_R or 25
    params = {"sigma2": mixture_sigma2} if density == "gaussian_mixture" else {}
    return McConfig(
        null_spec=null_spec_default(),
        alt_spec=alt_spec_default() if power else None,
        n=n, N=reps, m_values=_parse_m(m_text),
        tests=tuple(tests), density=density, sampler_params=params,
        n_R=n_R, grid_seed=grid_seed, alpha=alpha,
        master_seed=seed, width=width or default_width(),
    )


def _mc_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     help="Full McConfig JSON (overrides the other options)."),
        click.option("--density", type=click.Choice(DENSITIES),
                     default="spherical_normal", show_default=True),
        click.option("--mixture-sigma2", type=click.Choice(["upper", "lower"]),
                     default="upper", show_default=True),
        click.option("--n", default=500, show_default=True),
        click.option("--reps", "-N", default=200, show_default=True),
        click.option("--m", "m_text", default="5,10,15,20,25",
                     show_default=True),
        click.option("--tests", multiple=True, default=("gaussian", "vdw"),
                     show_default=True,
                     type=click.Choice(["gaussian", "sign", "spearman", "vdw"])),
        click.option("--alpha", default=0.05, show_default=True),
        click.option("--seed", default=20240501, show_default=True),
        click.option("--width", type=int, default=None,
                     help="Parallel replications (default RANKPORT_WORKERS)."),
        click.option("--n-r", "n_R", type=int, default=None),
        click.option("--grid-seed", default=0, show_default=True),
        click.option("--paper-scale", is_flag=True,
                     help="Preset n=1000, N=300, n_R=25."),
        click.option("--out", required=True, type=click.Path(),
                     help="Output prefix for the CSV and JSON files."),
        click.option("--plot", is_flag=True,
                     help="Render rate figures next to the CSV."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@main.group()
def mc():
    """Monte Carlo size and power experiments."""


def _run_mc(power, config_path, out, plot, **kw):
    if config_path:
        with open(config_path) as fh:
            config = McConfig.from_json(fh.read())
        if power and config.alt_spec is None:
            config = dataclasses.replace(config, alt_spec=alt_spec_default())
    else:
        config = _mc_config(power=power, **kw)
    runner = run_power_experiment if power else run_size_experiment
    try:
        result = runner(config)
    except ExperimentError as exc:
        click.echo(f"experiment error: {exc}", err=True)
        sys.exit(2)
    written = emit_results(result, out)
    if plot:
        from .reporting import render_rate_figures
        written += render_rate_figures(f"{out}.csv")
    for key in sorted(result.rates, key=lambda k: (k[0], k[1])):
        rate, se = result.rates[key]
        click.echo(f"{key[0]:>9s} m={key[1]:<3d} rate={rate:.3f} (se {se:.3f})")
    click.echo("wrote " + ", ".join(written))


@mc.command(name="size")
@_mc_options
def mc_size(config_path, out, plot, **kw):
    """Rejection rates under the null VARMA model."""
    _run_mc(False, config_path, out, plot, **kw)


@mc.command(name="power")
@_mc_options
def mc_power(config_path, out, plot, **kw):
    """Rejection rates under the built-in alternative."""
    _run_mc(True, config_path, out, plot, **kw)


@main.command(name="grid-info")
@click.option("--n", required=True, type=int)
@click.option("--d", default=2, show_default=True)
@click.option("--n-r", "n_R", type=int, default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), help="Also write the grid CSV.")
def grid_info(n, d, n_R, seed, out):
    """Show (or export) the grid factorization for a sample size."""
    try:
        grid = make_grid(n, d, n_R, seed=seed)
    except ValueError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo(f"n={n}: n_R={grid.n_R}, n_S={grid.n_S}, n_0={grid.n_0}, "
               f"symmetric={grid.symmetric}")
    click.echo(f"feasible n_R values: {feasible_radial_counts(n)}")
    if out:
        with open(out, "w") as fh:
            fh.write(grid.to_csv())
        click.echo(f"wrote {out}")


@main.command(name="report")
@click.option("--rates", "rates_path", required=True,
              type=click.Path(exists=True), help="Rates CSV from mc size/power.")
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--level", default=0.05, show_default=True)
def report_cmd(rates_path, out_dir, level):
    """Render rejection-rate figures from an emitted rates CSV."""
    from .reporting import render_rate_figures
    written = render_rate_figures(rates_path, out_dir=out_dir, level=level)
    for path in written:
        click.echo(f"wrote {path}")


@main.command(name="validate")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--tol", default=1e-8, show_default=True)
def validate_cmd(spec_path, tol):
    """Check a spec JSON against the stationarity/invertibility conditions."""
    report = validate_spec(_load_spec(spec_path), tol=tol)
    status = "pass" if report.ok else "FAIL"
    click.echo(f"{status}: AR moduli {np.round(report.ar_moduli, 6).tolist()} "
               f"MA moduli {np.round(report.ma_moduli, 6).tolist()}")
    for msg in report.messages:
        click.echo(f"  note: {msg}")
    if not report.ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
