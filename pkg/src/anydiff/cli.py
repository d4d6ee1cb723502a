"""Command-line front door.

Subcommands: sample, sweep-ratio, inverse, metrics, serve.  Every run is
reproducible from (config file, seed): outputs are written with fixed
formatting so re-running produces byte-identical files, and everything
lands under the --out directory.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from .configio import (
    KIND_ALIASES,
    build_operator,
    build_plan,
    build_prior,
    build_schedule,
    default_config,
    load_config,
)
from .denoiser import GmmPrior
from .errors import ParameterError
from .experiments import nested_population, ratio_sweep, sample_population
from .inverse import InverseProblem, degrade, nested_inverse_sample, psnr
from .metrics import (
    AnytimeCurve,
    anytime_curve,
    auc,
    consistency_curve,
    curve_rows,
    fit_gaussian,
    frechet_distance,
    prior_moments,
)
from .sampler import SamplerConfig, Trace, TraceEntry, intermediate_prediction
from .schedule import uniform_grid


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_text(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _jsonable(value):
    # strict JSON has no Infinity/NaN tokens; stringify those floats
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_traces(path: str, traces) -> None:
    lines = ["# traces v1"]
    for i, tr in enumerate(traces):
        lines.append(f"run {i}")
        lines.append(f"total_nfe {tr.total_nfe}")
        for e in tr.entries:
            vals = " ".join(_fmt(v) for v in np.atleast_1d(e.x0_hat))
            lines.append(f"entry {e.nfe} {e.t} {vals}")
        vals = " ".join(_fmt(v) for v in np.atleast_1d(tr.final))
        lines.append(f"final {vals}")
        lines.append("")
    _write_text(path, lines)


def read_traces(path: str) -> list[Trace]:
    traces: list[Trace] = []
    current: Trace | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "run":
                current = Trace()
                traces.append(current)
            elif current is None:
                raise ParameterError(f"malformed trace file {path}: data before run")
            elif tag == "total_nfe":
                current.total_nfe = int(parts[1])
            elif tag == "entry":
                current.entries.append(
                    TraceEntry(
                        int(parts[1]),
                        int(parts[2]),
                        np.array([float(v) for v in parts[3:]]),
                    )
                )
            elif tag == "final":
                current.final = np.array([float(v) for v in parts[1:]])
            else:
                raise ParameterError(f"malformed trace file {path}: tag {tag!r}")
    for tr in traces:
        if tr.final is None:
            raise ParameterError(f"malformed trace file {path}: run without final")
    return traces


def _write_curve(path: str, curve: AnytimeCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(curve_rows(curve))


def _overlay_plan(cfg: dict, outer, inner, eta_inner, eta_outer, kind_inner):
    plan = cfg.setdefault("plan", {})
    if outer is not None:
        plan["outer_steps"] = int(outer)
        plan.pop("outer_grid", None)
    if inner is not None:
        plan["inner_steps"] = int(inner)
    if eta_inner is not None:
        plan.setdefault("inner", {"variant": "ddim"})["eta"] = float(eta_inner)
    if eta_outer is not None:
        plan.setdefault("outer", {"variant": "ddim"})["eta"] = float(eta_outer)
    if kind_inner is not None:
        plan.setdefault("inner", {})["variant"] = kind_inner


def _load(config_path: str | None) -> dict:
    if config_path is None:
        return default_config()
    if not os.path.exists(config_path):
        raise ParameterError(f"config file not found: {config_path}")
    return load_config(config_path)


def _outdir(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


def _curve_from_population(traces, prior: GmmPrior, eval_every: int) -> AnytimeCurve:
    return anytime_curve(traces, prior_moments(prior), eval_every)


_COMMON = [
    click.option("--config", "config_path", type=str, default=None,
                 help="YAML config file; flags override its fields."),
    click.option("--seed", type=int, default=None),
    click.option("--out", type=str, default="outputs"),
]


def _common(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


class _Failure(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _run(body):
    """Uniform error mapping for command bodies."""
    try:
        body()
    except ParameterError as exc:
        raise _Failure(f"config error: {exc}", 2)
    except click.ClickException:
        raise
    except (OSError, RuntimeError, ValueError) as exc:
        raise _Failure(f"runtime error: {exc}", 3)


@click.group()
def main():
    """Anytime nested sampling experiments on analytic mixture targets."""


@main.command()
@_common
@click.option("--outer", type=int, default=None)
@click.option("--inner", type=int, default=None)
@click.option("--eta-inner", type=float, default=None)
@click.option("--eta-outer", type=float, default=None)
@click.option("--kind-inner", type=click.Choice(sorted(set(KIND_ALIASES))), default=None)
@click.option("--runs", type=int, default=None)
@click.option("--eval-every", type=int, default=None)
@click.option("--vanilla", is_flag=True, help="Plain (non-nested) run.")
@click.option("--steps", type=int, default=None, help="Step count for --vanilla.")
def sample(config_path, seed, out, outer, inner, eta_inner, eta_outer,
           kind_inner, runs, eval_every, vanilla, steps):
    """Run a population of samplers; write traces, curves and a summary."""

    def body():
        cfg = _load(config_path)
        _overlay_plan(cfg, outer, inner, eta_inner, eta_outer, kind_inner)
        the_seed = int(cfg.get("seed", 0) if seed is None else seed)
        n_runs = int(cfg.get("runs", 200) if runs is None else runs)
        every = int(cfg.get("eval_every", 5) if eval_every is None else eval_every)
        prior = build_prior(cfg.get("prior", {}))
        schedule = build_schedule(cfg.get("schedule", {}))
        rng = np.random.default_rng(the_seed)
        if vanilla:
            n_steps = int(steps if steps is not None else cfg.get("steps", 60))
            plan_cfg = cfg.get("plan", {})
            from .configio import build_kind

            kind = build_kind(plan_cfg.get("inner", {"variant": "ddim", "eta": 0.85}))
            sconfig = SamplerConfig(uniform_grid(schedule.T, n_steps), kind)
            traces = sample_population(prior, schedule, sconfig, n_runs, rng)
            ratio = 1.0 / n_steps
        else:
            plan = build_plan(cfg.get("plan", {}), schedule)
            traces = nested_population(prior, schedule, plan, n_runs, rng)
            ratio = plan.ratio
        directory = _outdir(out)
        write_traces(os.path.join(directory, "traces.txt"), traces)
        curve = _curve_from_population(traces, prior, every)
        _write_curve(os.path.join(directory, "anytime_curve.csv"), curve)
        finals = np.stack([tr.final for tr in traces])
        summary = {
            "R_ND": ratio,
            "total_nfe": traces[0].total_nfe,
            "auc": auc(curve),
            "final_fd": frechet_distance(fit_gaussian(finals), prior_moments(prior)),
            "runs": n_runs,
            "seed": the_seed,
        }
        _write_json(os.path.join(directory, "summary.json"), summary)
        click.echo(
            f"runs={n_runs} total_nfe={summary['total_nfe']} "
            f"auc={_fmt(summary['auc'])} final_fd={_fmt(summary['final_fd'])}"
        )

    _run(body)


@main.command("sweep-ratio")
@_common
@click.option("--budget", type=int, default=None, help="Shared NFE budget.")
@click.option("--outers", type=str, default=None,
              help="Comma list of outer step counts, e.g. 1,2,4,5,10,20.")
@click.option("--runs", type=int, default=None)
@click.option("--eval-every", type=int, default=None)
def sweep_ratio(config_path, seed, out, budget, outers, runs, eval_every):
    """Equal-budget outer/inner sweep; emits the AUC table."""

    def body():
        cfg = _load(config_path)
        the_seed = int(cfg.get("seed", 0) if seed is None else seed)
        n_runs = int(cfg.get("runs", 200) if runs is None else runs)
        every = int(cfg.get("eval_every", 5) if eval_every is None else eval_every)
        the_budget = int(cfg.get("budget", 60) if budget is None else budget)
        if outers is not None:
            counts = [int(v) for v in outers.split(",") if v.strip()]
        else:
            counts = [int(v) for v in cfg.get("outers", [1, 2, 4, 6, 12])]
        if not counts:
            raise ParameterError("sweep needs at least one outer count")
        counts = sorted(counts)
        prior = build_prior(cfg.get("prior", {}))
        schedule = build_schedule(cfg.get("schedule", {}))
        plan_template = None
        if "plan" in cfg:
            template_cfg = dict(cfg["plan"])
            template_cfg.setdefault("outer_steps", counts[0])
            template_cfg.setdefault("inner_steps", the_budget // counts[0])
            plan_template = build_plan(template_cfg, schedule)
        rng = np.random.default_rng(the_seed)
        rows, curves = ratio_sweep(
            prior, schedule, the_budget, counts, n_runs, every, rng,
            plan_template=plan_template,
        )
        directory = _outdir(out)
        table = ["outer,inner,auc,final_fd"]
        for row in rows:
            table.append(
                f"{row['outer']},{row['inner']},"
                f"{_fmt(row['auc'])},{_fmt(row['final_fd'])}"
            )
        _write_text(os.path.join(directory, "sweep.csv"), table)
        for row, curve in zip(rows, curves):
            _write_curve(
                os.path.join(directory, f"curve_outer{row['outer']}.csv"), curve
            )
        _write_json(
            os.path.join(directory, "summary.json"),
            {"budget": the_budget, "runs": n_runs, "seed": the_seed, "rows": rows},
        )
        for line in table:
            click.echo(line)

    _run(body)


@main.command()
@_common
@click.option("--outer", type=int, default=None)
@click.option("--inner", type=int, default=None)
@click.option("--runs", type=int, default=None)
@click.option("--sigma-y", type=float, default=None)
@click.option("--consistency-tol", type=float, default=1e-8,
              help="Pass threshold on max |Hx - y| when sigma_y is 0.")
def inverse(config_path, seed, out, outer, inner, runs, sigma_y, consistency_tol):
    """Measurement-conditioned runs against a hidden ground truth."""

    def body():
        cfg = _load(config_path)
        _overlay_plan(cfg, outer, inner, None, None, None)
        the_seed = int(cfg.get("seed", 0) if seed is None else seed)
        n_runs = int(cfg.get("runs", 50) if runs is None else runs)
        prior = build_prior(cfg.get("prior", {}))
        schedule = build_schedule(cfg.get("schedule", {}))
        plan = build_plan(cfg.get("plan", {}), schedule)
        op = build_operator(cfg.get("operator", {"kind": "identity"}), prior.dim)
        noise = float(cfg.get("sigma_y", 0.0) if sigma_y is None else sigma_y)
        rng = np.random.default_rng(the_seed)
        truth = prior.sample(1, rng)[0]
        y = degrade(op, noise, truth, rng)
        problem = InverseProblem(op, y, noise)
        x0 = rng.standard_normal((n_runs, prior.dim))
        batched = nested_inverse_sample(prior, schedule, plan, problem, rng, x_init=x0)
        from .experiments import split_trace

        traces = split_trace(batched, n_runs)
        directory = _outdir(out)
        write_traces(os.path.join(directory, "traces.txt"), traces)
        boundary_nfes = np.cumsum(plan.inner_steps)
        rows = ["nfe,psnr"]
        for b in boundary_nfes:
            preds = np.stack(
                [intermediate_prediction(tr, int(b)) for tr in traces]
            )
            rows.append(f"{int(b)},{_fmt(np.mean([psnr(p, truth) for p in preds]))}")
        _write_text(os.path.join(directory, "psnr_curve.csv"), rows)
        finals = np.stack([tr.final for tr in traces])
        residual = finals @ op.matrix.T - y
        worst = np.abs(residual).max(axis=-1)
        report = ["run,max_residual,pass"]
        for i, w in enumerate(worst):
            verdict = "pass" if (noise > 0 or w <= consistency_tol) else "fail"
            report.append(f"{i},{_fmt(w)},{verdict}")
        _write_text(os.path.join(directory, "consistency_report.csv"), report)
        _write_json(
            os.path.join(directory, "summary.json"),
            {
                "sigma_y": noise,
                "runs": n_runs,
                "seed": the_seed,
                "total_nfe": traces[0].total_nfe,
                "mean_final_psnr": float(
                    np.mean([psnr(f, truth) for f in finals])
                ),
                "all_consistent": bool(
                    noise > 0 or np.all(worst <= consistency_tol)
                ),
            },
        )
        click.echo(
            f"runs={n_runs} total_nfe={traces[0].total_nfe} "
            f"all_consistent={noise > 0 or bool(np.all(worst <= consistency_tol))}"
        )

    _run(body)


@main.command()
@_common
@click.option("--traces", "traces_path", type=str, required=True,
              help="traces.txt produced by the sample command.")
@click.option("--eval-every", type=int, default=None)
def metrics(config_path, seed, out, traces_path, eval_every):
    """Recompute curves and summary numbers from stored traces."""

    def body():
        cfg = _load(config_path)
        every = int(cfg.get("eval_every", 5) if eval_every is None else eval_every)
        prior = build_prior(cfg.get("prior", {}))
        if not os.path.exists(traces_path):
            raise ParameterError(f"trace file not found: {traces_path}")
        traces = read_traces(traces_path)
        directory = _outdir(out)
        curve = _curve_from_population(traces, prior, every)
        _write_curve(os.path.join(directory, "anytime_curve.csv"), curve)
        if len(traces[0].entries) >= 2:
            _write_curve(
                os.path.join(directory, "consistency_curve.csv"),
                consistency_curve(traces[0]),
            )
        finals = np.stack([tr.final for tr in traces])
        summary = {
            "total_nfe": traces[0].total_nfe,
            "runs": len(traces),
            "auc": auc(curve),
            "final_fd": frechet_distance(fit_gaussian(finals), prior_moments(prior)),
        }
        _write_json(os.path.join(directory, "metrics.json"), summary)
        click.echo(
            f"runs={len(traces)} auc={_fmt(summary['auc'])} "
            f"final_fd={_fmt(summary['final_fd'])}"
        )

    _run(body)


@main.command()
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--max-sessions", type=int, default=64)
@click.option("--event-log", type=str, default=None,
              help="Directory for per-session append-only event logs.")
@click.option("--static", "static_dir", type=str, default=None,
              help="Directory of static files to serve at /.")
def serve(host, port, max_sessions, event_log, static_dir):
    """Run the interactive session service until interrupted."""

    def body():
        import uvicorn

        from .service import create_app

        app = create_app(
            max_sessions=max_sessions,
            event_log_dir=event_log,
            static_dir=static_dir,
        )
        try:
            uvicorn.run(app, host=host, port=port, log_level="warning")
        except OSError as exc:
            raise _Failure(f"runtime error: could not bind {host}:{port}: {exc}", 3)

    _run(body)


if __name__ == "__main__":
    main()
