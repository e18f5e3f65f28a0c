#!/usr/bin/env python3
"""Typer CLI for flylora: bound checks, gradient checks and toy experiments."""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .core.adapters import AdapterVariant
from .core.checkpoint import load_checkpoint
from .core.config_parser import ExperimentConfig, parse_experiment_config
from .core.errors import ConfigError, FlyLoRAError, InvalidParameterError
from .core.matrix_io import write_matrix
from .core.merging import MergeSpec, interference_report, merge_weight_average
from .core.projection import (
    VARIANCE_TOLERANCE,
    ProjectionSpec,
    make_sparse_projection,
    verify_distance_preservation,
    verify_orthogonality,
)
from .core.report_engine import load_report, summarize_rows, write_json
from .core.training import covariance_attenuation, gradcheck_configs, run_gradcheck
from .main import load_app_config, setup_logging
from .orchestration.base_workflow import WorkflowError
from .orchestration.experiment_workflow import run_merge_experiment, run_single_task, run_sweep

app = typer.Typer(
    name="flylora",
    help="🪰 FlyLoRA - sparse random projection adapters with implicit rank-wise routing",
    add_completion=False,
)
console = Console()

THEOREMS = ('thm1', 'thm2', 'thm3')
# relative tolerance on the masked/dense covariance ratio, and the ceiling when k = 1
ATTENUATION_TOLERANCE = 0.2
ATTENUATION_CEILING = 0.005

SEED_OPTION = typer.Option(None, "--seed", envvar="FLYLORA_SEED", help="Seed; overrides every seed in the config")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Output directory")
THREADS_OPTION = typer.Option(None, "--threads", "-t", help="Worker threads (default 1)")
VERBOSE_OPTION = typer.Option(0, "--verbose", "-v", count=True, help="-v for INFO, -vv for DEBUG")


@dataclass
class CliConfig:
    """Resolved invocation of one subcommand."""
    command: str
    config_path: Optional[Path] = None
    seed: Optional[int] = None
    out: Optional[Path] = None
    verbosity: int = 0
    threads: Optional[int] = None

    @property
    def seed_or_default(self) -> int:
        return 0 if self.seed is None else self.seed

    @property
    def out_dir(self) -> Path:
        return Path('runs') if self.out is None else self.out


def _start(cli: CliConfig) -> CliConfig:
    setup_logging(cli.verbosity)
    return cli


def exit_code(error: Exception) -> int:
    """2 for configuration and parameter errors, 1 for everything else."""
    cause = error.root_cause if isinstance(error, WorkflowError) else error
    return 2 if isinstance(cause, (ConfigError, InvalidParameterError)) else 1


def _fail(error: Exception) -> None:
    code = exit_code(error)
    label = "Usage error" if code == 2 else "Error"
    console.print(f"❌ {label}: {error}", style="red")
    raise typer.Exit(code)


def _app_config() -> Dict[str, Any]:
    try:
        return load_app_config()
    except ConfigError as e:
        _fail(e)


def _load_experiment(cli: CliConfig, app_config: Dict[str, Any]) -> ExperimentConfig:
    defaults = {key: app_config.get(key) for key in ('experiment', 'grid', 'sweep')}
    config = parse_experiment_config(cli.config_path, defaults)
    config = config.with_seed(cli.seed).with_out(None if cli.out is None else str(cli.out))
    if cli.threads is not None:
        config = replace(config, threads=cli.threads)
    return config


def _with_spinner(description: str, func: Callable[[], Any]) -> Any:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    ) as progress:
        progress.add_task(description, total=None)
        return func()


def _summary_table(rows, title: str) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for column in ("Variant", "Metric", "Phase", "N", "Mean", "Std"):
        table.add_column(column, justify="right" if column in ("N", "Mean", "Std") else "left")
    for item in summarize_rows(rows):
        table.add_row(
            item['variant'], item['metric'], item['phase'], str(item['count']),
            f"{item['mean']:.6g}", f"{item['std']:.3g}",
        )
    return table


def _show_files(files: List[str]) -> None:
    if files:
        console.print(f"📁 Wrote {len(files)} files, e.g. {files[0]}")


@app.command("gen-proj")
def gen_proj(
    n: int = typer.Option(..., "--n", help="Input dimension"),
    r: int = typer.Option(..., "--r", help="Rank (rows of A)"),
    p: Optional[int] = typer.Option(None, "--p", help="Nonzeros per row"),
    rho: float = typer.Option(0.25, "--rho", help="Sparsity ratio when --p is not given"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Draw a frozen sparse projection and write it as A.flymat."""
    cli = _start(CliConfig('gen-proj', seed=seed, out=out, verbosity=verbose))
    try:
        if p is None:
            spec = ProjectionSpec.from_ratio(n, r, rho, seed=cli.seed_or_default)
        else:
            spec = ProjectionSpec(n=n, r=r, p=p, seed=cli.seed_or_default)
        A = make_sparse_projection(spec)
        path = write_matrix(A, cli.out_dir / 'A.flymat')
    except FlyLoRAError as e:
        _fail(e)
    console.print(f"✅ {spec.r}x{spec.n} projection, p={spec.p}, seed={spec.seed} -> {path}")
    console.print(f"checksum: {A.checksum()}")


def _verify_params(app_config: Dict[str, Any], which: str, overrides: Dict[str, Any]) -> Dict[str, Any]:
    params = dict((app_config.get('verify') or {}).get(which) or {})
    params.update({key: value for key, value in overrides.items() if value is not None})
    for key in REQUIRED[which]:
        if key not in params:
            raise ConfigError(f"verify.{which}.{key}", 'missing parameter')
    return {key: params[key] for key in REQUIRED[which]}


def _check_thm1(params: Dict[str, Any], seed: int, threads: int) -> Dict[str, Any]:
    spec = ProjectionSpec(n=params['n'], r=params['r'], p=params['p'], seed=seed)
    report = verify_distance_preservation(spec, params['eps'], params['trials'], threads=threads)
    return {
        'passed': report.holds,
        'rows': [('success rate', report.success_rate, f">= {report.bound:.4f}")],
        'report': report.to_dict(),
    }


def _check_thm2(params: Dict[str, Any], seed: int, threads: int) -> Dict[str, Any]:
    result = covariance_attenuation(params['r'], params['k'], params['samples'], seed=seed, threads=threads)
    if result.expected == 0.0:
        passed = abs(result.attenuation) <= ATTENUATION_CEILING
        target = f"<= {ATTENUATION_CEILING}"
    else:
        passed = result.relative_error <= ATTENUATION_TOLERANCE
        target = f"{result.expected:.5f} ± {ATTENUATION_TOLERANCE:.0%}"
    data = result.to_dict()
    data['passed'] = passed
    return {'passed': passed, 'rows': [('covariance ratio', result.attenuation, target)], 'report': data}


def _check_thm3(params: Dict[str, Any], seed: int, threads: int) -> Dict[str, Any]:
    spec = ProjectionSpec(n=params['n'], r=params['r'], p=params['p'], seed=seed)
    report = verify_orthogonality(spec, params['eps'], params['pairs'], threads=threads)
    tail_target = f"<= {report.chebyshev_bound:.4f}" if report.informative else "vacuous"
    return {
        'passed': report.holds,
        'rows': [
            ('entry mean', report.entry_mean, f"|.| <= {report.mean_tolerance:.3g}"),
            ('entry variance', report.entry_variance,
             f"{report.theoretical_variance:.4g} +/- {VARIANCE_TOLERANCE:.0%}"),
            ('tail estimate', report.tail_estimate, tail_target),
        ],
        'report': report.to_dict(),
    }


CHECKS = {'thm1': _check_thm1, 'thm2': _check_thm2, 'thm3': _check_thm3}
REQUIRED = {
    'thm1': ('n', 'r', 'p', 'eps', 'trials'),
    'thm2': ('r', 'k', 'samples'),
    'thm3': ('n', 'r', 'p', 'eps', 'pairs'),
}


@app.command("verify")
def verify(
    which: str = typer.Argument(..., help="thm1 | thm2 | thm3 | all"),
    n: Optional[int] = typer.Option(None, "--n"),
    r: Optional[int] = typer.Option(None, "--r"),
    p: Optional[int] = typer.Option(None, "--p"),
    k: Optional[int] = typer.Option(None, "--k"),
    eps: Optional[float] = typer.Option(None, "--eps"),
    trials: Optional[int] = typer.Option(None, "--trials"),
    pairs: Optional[int] = typer.Option(None, "--pairs"),
    samples: Optional[int] = typer.Option(None, "--samples"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Monte Carlo checks of distance preservation, covariance attenuation and orthogonality."""
    cli = _start(CliConfig('verify', seed=seed, out=out, verbosity=verbose, threads=threads))
    if which not in THEOREMS + ('all',):
        console.print(f"❌ Usage error: unknown check '{which}', expected one of {', '.join(THEOREMS)} or all",
                      style="red")
        raise typer.Exit(2)
    app_config = _app_config()
    overrides = dict(n=n, r=r, p=p, k=k, eps=eps, trials=trials, pairs=pairs, samples=samples)

    table = Table(title="Verification", show_header=True, header_style="bold magenta")
    for column in ("Check", "Quantity", "Value", "Target", "Status"):
        table.add_column(column)
    all_passed = True
    for name in (THEOREMS if which == 'all' else (which,)):
        try:
            params = _verify_params(app_config, name, overrides)
            result = _with_spinner(f"Running {name}...",
                                   lambda: CHECKS[name](params, cli.seed_or_default, cli.threads or 1))
            write_json({'check': name, 'params': params, 'seed': cli.seed_or_default, **result['report']},
                       cli.out_dir / f"verify_{name}.json")
        except FlyLoRAError as e:
            _fail(e)
        status = "[green]pass[/green]" if result['passed'] else "[red]FAIL[/red]"
        for quantity, value, target in result['rows']:
            table.add_row(name, quantity, f"{value:.6g}", target, status)
        all_passed = all_passed and result['passed']

    console.print(table)
    if not all_passed:
        console.print("❌ At least one bound was violated", style="red")
        raise typer.Exit(1)
    console.print("✅ All checks passed")


@app.command("gradcheck")
def gradcheck(
    config_path: Optional[Path] = typer.Argument(None, help="Experiment config; its grid entries are checked"),
    instances: Optional[int] = typer.Option(None, "--instances", help="Random instances per variant"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Analytic vs central finite-difference gradients of B with routing held fixed."""
    cli = _start(CliConfig('gradcheck', config_path=config_path, seed=seed, out=out, verbosity=verbose))
    app_config = _app_config()
    settings = dict(app_config.get('gradcheck') or {})
    try:
        if cli.config_path is None:
            configs = gradcheck_configs(settings['m'], settings['n'], settings['r'], settings['k'])
        else:
            experiment = _load_experiment(cli, app_config)
            configs = {entry.id: experiment.adapter_config(entry) for entry in experiment.grid}
        count = instances if instances is not None else settings['instances']
        worst = _with_spinner("Checking gradients...", lambda: run_gradcheck(
            configs, instances=count, step=settings['step'], seed=cli.seed_or_default,
        ))
        tolerance = settings['tolerance']
        write_json({'instances': count, 'step': settings['step'], 'tolerance': tolerance, 'max_relative_error': worst},
                   cli.out_dir / 'gradcheck.json')
    except KeyError as e:
        _fail(ConfigError(f"gradcheck.{e.args[0]}", 'missing parameter'))
    except FlyLoRAError as e:
        _fail(e)

    table = Table(title="Gradient check", show_header=True, header_style="bold magenta")
    table.add_column("Variant")
    table.add_column("Max relative error", justify="right")
    table.add_column("Status")
    for name, error in worst.items():
        table.add_row(name, f"{error:.3e}", "[green]ok[/green]" if error <= tolerance else "[red]FAIL[/red]")
    console.print(table)
    if max(worst.values()) > tolerance:
        console.print(f"❌ Gradient error above {tolerance:g}", style="red")
        raise typer.Exit(1)
    console.print(f"✅ max relative error {max(worst.values()):.3e} <= {tolerance:g}")


def _run_experiment(cli: CliConfig, runner: Callable[[ExperimentConfig], Dict[str, Any]], title: str) -> None:
    app_config = _app_config()
    try:
        config = _load_experiment(cli, app_config)
        data = _with_spinner(f"Running {title.lower()}...", lambda: runner(config))
    except (FlyLoRAError, WorkflowError) as e:
        _fail(e)
    console.print(_summary_table(data.get('rows', []), title))
    _show_files(data.get('files', []))
    console.print(f"✅ {title} finished, results under {config.out}")


@app.command("train")
def train(
    config_path: Optional[Path] = typer.Argument(None, help="Experiment config file"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Train every grid variant on every task and seed."""
    cli = _start(CliConfig('train', config_path, seed, out, verbose, threads))
    _run_experiment(cli, run_single_task, "Single-task training")


def _merge_checkpoints(cli: CliConfig, paths: List[str]) -> None:
    if len(paths) < 2:
        _fail(InvalidParameterError(f"merging needs at least 2 checkpoints, got {len(paths)}"))
    try:
        adapters = [load_checkpoint(path) for path in paths]
        spec = MergeSpec(adapters)
        merged = merge_weight_average(spec)
        report = interference_report(spec, [str(path) for path in paths])
        files = [
            write_matrix(merged, cli.out_dir / 'merged_delta.flymat'),
            write_json(report.to_dict(), cli.out_dir / 'interference.json'),
        ]
    except FlyLoRAError as e:
        _fail(e)
    console.print(f"✅ Merged {spec.t} adapters, cross-term fraction {report.cross_term_fraction:.4f}, "
                  f"mean |cos| {report.mean_abs_pairwise:.4f}")
    _show_files([str(path) for path in files])


@app.command("merge")
def merge(
    config_path: Optional[Path] = typer.Argument(None, help="Experiment config file"),
    checkpoint: Optional[List[str]] = typer.Option(None, "--checkpoint", "-c",
                                                   help="Saved adapter to merge (repeat for each)"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Train one adapter per task and weight-average them, or merge saved checkpoints."""
    cli = _start(CliConfig('merge', config_path, seed, out, verbose, threads))
    paths = list(checkpoint or [])
    if not paths and cli.config_path is not None:
        try:
            config = _load_experiment(cli, _app_config())
        except FlyLoRAError as e:
            _fail(e)
        paths = config.checkpoints
        if paths:
            cli = replace(cli, out=Path(config.out))
    if checkpoint or paths:
        _merge_checkpoints(cli, paths)
        return
    _run_experiment(cli, run_merge_experiment, "Merge")


@app.command("sweep")
def sweep(
    config_path: Optional[Path] = typer.Argument(None, help="Experiment config file"),
    vary: Optional[str] = typer.Option(None, "--vary", help="experts | rho | k | r (default: sweep.vary)"),
    seed: Optional[int] = SEED_OPTION,
    out: Optional[Path] = OUT_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    verbose: int = VERBOSE_OPTION,
):
    """Expert granularity sweep, or a FlyLoRA sensitivity sweep over rho, k or r."""
    cli = _start(CliConfig('sweep', config_path, seed, out, verbose, threads))

    def run(config: ExperimentConfig) -> Dict[str, Any]:
        if vary is not None:
            config = replace(config, sweep=replace(config.sweep, vary=vary))
        return run_sweep(config)

    _run_experiment(cli, run, "Sweep")


@app.command("report")
def report(
    path: Path = typer.Argument(..., help="CSV or JSON report"),
    verbose: int = VERBOSE_OPTION,
):
    """Summarize a report file per variant, metric and phase."""
    _start(CliConfig('report', verbosity=verbose))
    try:
        rows = load_report(path)
    except FlyLoRAError as e:
        _fail(e)
    console.print(_summary_table(rows, f"{path.name} ({len(rows)} rows)"))


@app.command("info")
def info():
    """Show variants, defaults and parameter formulas."""
    app_config = _app_config()
    experiment = app_config.get('experiment', {})
    variants = ", ".join(v.value for v in AdapterVariant)
    info_text = f"""
[bold blue]flylora[/bold blue] v{__version__}

[bold]Variants:[/bold] {variants}
[bold]Environment:[/bold] {app_config.get('environment')} (set FLYLORA_ENV)
[bold]Toy defaults:[/bold] n={experiment.get('n')}, m={experiment.get('m')}, \
samples={experiment.get('samples')}, epochs={experiment.get('epochs')}, lr={experiment.get('lr')}

[bold]Activated parameters per d x d layer:[/bold]
• LoRA       2dr
• LoRA-FA    dr
• Split-LoRA 2dk + dN
• FlyLoRA    dk

[bold]Commands:[/bold] gen-proj, verify, gradcheck, train, merge, sweep, report
[bold]Exit codes:[/bold] 0 success, 1 violated bound or runtime failure, 2 usage error
"""
    console.print(Panel.fit(info_text, title="About", border_style="blue"))


if __name__ == "__main__":
    app()
