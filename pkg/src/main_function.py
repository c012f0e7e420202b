import json
import logging
import os
from typing import Any, List, Optional, Tuple

import click
import yaml

import experiment_config
import harness

LOG_FORMAT: str = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

logger = logging.getLogger(__name__)


def _parse_values(text: str) -> List[Any]:
    """
    "1,2,5" or "[1, 2, 5]" -> [1, 2, 5]
    """
    parsed: Any = yaml.safe_load(text if text.strip().startswith("[") else f"[{text}]")
    if not isinstance(parsed, list) or not parsed:
        raise click.BadParameter(f'"{text}" is not a list of values')
    return parsed


def _fail(ex: Exception) -> click.ClickException:
    return click.ClickException(str(ex))


@click.group(invoke_without_command=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--set", "assignments", multiple=True, help="section.key=value override")
@click.option("--print-config", is_flag=True, help="Print the resolved configuration")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="INFO",
)
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    assignments: Tuple[str, ...],
    print_config: bool,
    log_level: str,
):
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT, datefmt="%H:%M:%S")
    try:
        if config_path is not None:
            config: experiment_config.ExperimentConfig = (
                experiment_config.ExperimentConfig.from_yaml(config_path, assignments)
            )
        else:
            config = experiment_config.ExperimentConfig()
            for assignment in assignments:
                config.apply_override(assignment)
    except (ValueError, FileNotFoundError) as ex:
        raise _fail(ex)
    if print_config:
        click.echo(config.to_yaml(), nl=False)
    elif ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
    ctx.obj = config


@cli.command()
@click.option("--epsilon", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--method", type=click.Choice(experiment_config.METHODS), default="gfc", show_default=True
)
@click.pass_obj
def run(config: experiment_config.ExperimentConfig, epsilon: float, seed: int, method: str):
    """Run one pipeline and write its results row and manifest."""
    try:
        result: harness.RunResult = harness.run_method(config, method, epsilon, seed)
        aggregate = harness.aggregate_results(
            harness.results_frame([result]), percent=config.output["percent"]
        )
        harness.write_results([result], aggregate, config)
        if method == "gfc" and config.output["merge_tree_json"]:
            artifacts: harness.GFCServerResult = harness.gfc_artifacts(config, epsilon, seed)
            tree_path: str = os.path.join(config.output["dir"], "merge_tree.json")
            artifacts.tree.to_file(tree_path, indent=2)
            logger.info("Merge tree written to %s", tree_path)
    except (harness.StageError, ValueError) as ex:
        raise _fail(ex)
    click.echo(
        f"{method} eps={epsilon:g} seed={seed}: ari={result['ari']:.4f} "
        f"nmi={result['nmi']:.4f} centroid_error={result['centroid_error']:.4g}"
    )


@cli.command()
@click.pass_obj
def sweep(config: experiment_config.ExperimentConfig):
    """Every method over every epsilon and seed."""
    try:
        results, aggregate = harness.sweep(config)
        harness.write_results(results, aggregate, config)
    except (harness.StageError, ValueError) as ex:
        raise _fail(ex)
    click.echo(aggregate.to_string(index=False))


@cli.command()
@click.option("--param", type=click.Choice(sorted(harness.ABLATION_KEYS)), required=True)
@click.option("--values", "values_text", default=None, help='e.g. "1,2,5,10"')
@click.pass_obj
def ablate(
    config: experiment_config.ExperimentConfig, param: str, values_text: Optional[str]
):
    """Sweep once per value of one hyperparameter."""
    values: Optional[List[Any]] = _parse_values(values_text) if values_text else None
    try:
        combined, aggregate = harness.ablate(config, param, values)
    except (harness.StageError, ValueError) as ex:
        raise _fail(ex)
    directory: str = config.output["dir"]
    os.makedirs(directory, exist_ok=True)
    combined.to_csv(os.path.join(directory, f"ablation_{param}.csv"), index=False, na_rep="NA")
    aggregate.to_csv(
        os.path.join(directory, f"ablation_{param}_aggregate.csv"), index=False, na_rep="NA"
    )
    click.echo(aggregate.to_string(index=False))


@cli.command()
@click.option("--epsilons", "epsilons_text", default=None, help='e.g. "1,0.5,0.2,0.1"')
@click.pass_obj
def scaling(config: experiment_config.ExperimentConfig, epsilons_text: Optional[str]):
    """Slope of the centroid error against 1/epsilon."""
    epsilons: Optional[List[Any]] = _parse_values(epsilons_text) if epsilons_text else None
    try:
        report: harness.ScalingReport = harness.epsilon_scaling_report(config, epsilons)
    except (harness.StageError, ValueError) as ex:
        raise _fail(ex)
    directory: str = config.output["dir"]
    os.makedirs(directory, exist_ok=True)
    report.table.to_csv(os.path.join(directory, "scaling.csv"), index=False, na_rep="NA")
    summary: dict = report.get_dict_representation()
    del summary["table"]
    with open(os.path.join(directory, "scaling_summary.json"), "w") as output_file:
        json.dump(summary, output_file, indent=2)
    click.echo(report.table.to_string(index=False))
    click.echo(
        f"slope={report.slope:.3f} (95% CI {report.ci_low:.3f} .. {report.ci_high:.3f}), "
        f"floor error={report.floor_error:.4g}"
    )


@cli.command("dump-field")
@click.option("--epsilon", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--tree-out", "tree_path", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def dump_field(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    seed: int,
    out_path: str,
    tree_path: Optional[str],
):
    """Export the probe energies (and merge tree) of one GFC run."""
    try:
        artifacts: harness.GFCServerResult = harness.gfc_artifacts(config, epsilon, seed)
    except (harness.StageError, ValueError) as ex:
        raise _fail(ex)
    artifacts.potential_field.to_csv(out_path)
    if tree_path is not None:
        artifacts.tree.to_file(tree_path, indent=2)
    click.echo(
        f"{artifacts.potential_field.n_probes} probes, {len(artifacts.tree)} tree nodes, "
        f"{artifacts.tree.levels_processed} levels"
    )


if __name__ == "__main__":
    cli()
