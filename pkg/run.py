"""
inkgen pipeline runner
Command-line surface for data synthesis, training, generation and evaluation
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler

from core.orchestrator import PipelineOrchestrator
from core.state_manager import RunStateManager
from inkeval.harness import compare_latents
from utils.config import load_config, run_root
from utils.exceptions import EXIT_INTERNAL, InkGenException

app = typer.Typer(help="One-shot online handwriting generation: InkVAE + InkDiT pipeline", add_completion=False)
console = Console(stderr=True)
logger = logging.getLogger("inkgen")


def setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML configuration file"),
    run_dir: Optional[Path] = typer.Option(None, "--run-dir", help="Run directory (default: $INKGEN_RUN_ROOT/default)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override run.seed"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a config value, e.g. vae.lr=1e-4"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    setup_logging(verbose)
    ctx.obj = {
        "config": config,
        "run_dir": run_dir or run_root() / "default",
        "seed": seed,
        "overrides": list(overrides or []),
    }


def _execute(ctx: typer.Context, action: Callable[[PipelineOrchestrator], Any],
             extra_overrides: Optional[List[str]] = None) -> Any:
    """Build config + run state, run the action, and map failures to exit codes"""
    obj: Dict[str, Any] = ctx.obj
    try:
        config = load_config(obj["config"], obj["overrides"] + list(extra_overrides or []), obj["seed"])
        orchestrator = PipelineOrchestrator(config, RunStateManager(obj["run_dir"]))
        return action(orchestrator)
    except InkGenException as e:
        console.print(f"[bold red]Error[/bold red] ({e.error_code}): {e.message}")
        raise typer.Exit(e.exit_code)
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        raise typer.Exit(EXIT_INTERNAL)


def _print(result: Dict[str, Any]):
    typer.echo(json.dumps(result, indent=2, sort_keys=True, default=str))


@app.command("synth-data")
def synth_data(ctx: typer.Context):
    """Synthesize a multi-writer toy corpus"""
    _print(_execute(ctx, lambda o: o.run_stage("synth-data")))


@app.command("preprocess")
def preprocess(ctx: typer.Context,
               corpus: Optional[Path] = typer.Option(None, help="Raw corpus file (default: data.raw_corpus)")):
    """Simplify, normalize and split a corpus"""
    inputs = {"corpus": str(corpus)} if corpus else {}
    _print(_execute(ctx, lambda o: o.run_stage("preprocess", inputs)))


@app.command("train-vae")
def train_vae(ctx: typer.Context,
              no_ocr_loss: bool = typer.Option(False, "--no-ocr-loss", help="Disable the recognition regularizer"),
              no_style_loss: bool = typer.Option(False, "--no-style-loss", help="Disable the writer regularizer"),
              resume: bool = typer.Option(False, "--resume", help="Continue from the last periodic checkpoint")):
    """Train InkVAE"""
    extra = []
    if no_ocr_loss:
        extra.append("vae.weights.ocr=0")
    if no_style_loss:
        extra.append("vae.weights.sty=0")
    _print(_execute(ctx, lambda o: o.run_stage("train-vae", {"resume": resume}), extra))


@app.command("train-dit")
def train_dit(ctx: typer.Context,
              resume: bool = typer.Option(False, "--resume", help="Continue from the last periodic checkpoint")):
    """Train InkDiT on frozen InkVAE latents"""
    _print(_execute(ctx, lambda o: o.run_stage("train-dit", {"resume": resume})))


@app.command("ddim-finetune")
def ddim_finetune(ctx: typer.Context):
    """Fine-tune InkDiT through a short differentiable DDIM unroll"""
    _print(_execute(ctx, lambda o: o.run_stage("ddim-finetune")))


@app.command("generate")
def generate(ctx: typer.Context,
             text: str = typer.Option(..., "--text", help="Text to generate"),
             ref_text: Optional[str] = typer.Option(None, "--ref-text", help="Text of the reference (prefix of the line)"),
             ref_line_id: Optional[int] = typer.Option(None, "--ref-line-id", help="Index into the test split"),
             ref_file: Optional[Path] = typer.Option(None, "--ref-file", help="Corpus file whose first line is the reference"),
             seed: Optional[int] = typer.Option(None, "--seed", help="Sampling seed (default: run.seed)"),
             out: Optional[Path] = typer.Option(None, "--out", help="Output trajectory file"),
             svg: bool = typer.Option(False, "--svg", help="Also write reference + generated SVG"),
             mode: Optional[str] = typer.Option(None, "--mode", help="greedy or sample"),
             temperature: Optional[float] = typer.Option(None, "--temperature"),
             jitter: bool = typer.Option(False, "--jitter", help="Randomly perturb the reference before encoding"),
             trace: Optional[Path] = typer.Option(None, "--trace", help="Write per-step DDIM trace records")):
    """Generate a line in the reference writer's style"""
    if not text:
        raise typer.BadParameter("must not be empty", param_hint="--text")
    if (ref_line_id is None) == (ref_file is None):
        raise typer.BadParameter("give exactly one of --ref-line-id and --ref-file")
    inputs: Dict[str, Any] = {"text": text, "ref_text": ref_text, "svg": svg, "reference_jitter": jitter}
    if ref_line_id is not None:
        inputs["ref_line_id"] = ref_line_id
    if ref_file is not None:
        inputs["ref_file"] = str(ref_file)
    for key, value in (("seed", seed), ("out", out), ("mode", mode), ("temperature", temperature),
                       ("trace_path", trace)):
        if value is not None:
            inputs[key] = value
    _print(_execute(ctx, lambda o: o.run_stage("generate", inputs)))


@app.command("evaluate")
def evaluate(ctx: typer.Context,
             with_throughput: bool = typer.Option(False, "--throughput", help="Also measure characters per second")):
    """Score the generator with the eval recognizer and writer classifier"""
    _print(_execute(ctx, lambda o: o.run_stage("evaluate", {"throughput": with_throughput})))


@app.command("export-latents")
def export_latents(ctx: typer.Context,
                   granularity: str = typer.Option("line", "--granularity", help="line or char"),
                   corpus: str = typer.Option("test_corpus", "--corpus",
                                              help="raw_corpus, processed_corpus, train_corpus or test_corpus"),
                   out: Optional[Path] = typer.Option(None, "--out")):
    """Write per-line or per-character latent vectors"""
    if granularity not in ("line", "char"):
        raise typer.BadParameter("must be line or char", param_hint="--granularity")
    inputs: Dict[str, Any] = {"granularity": granularity, "corpus": corpus}
    if out is not None:
        inputs["out"] = str(out)
    _print(_execute(ctx, lambda o: o.run_stage("export-latents", inputs)))


@app.command("compare-latents")
def compare(ctx: typer.Context,
            first: Path = typer.Argument(..., exists=True, dir_okay=False),
            second: Path = typer.Argument(..., exists=True, dir_okay=False)):
    """Silhouette scores of two latent exports and their difference"""
    _print(_execute(ctx, lambda o: compare_latents(first, second)))


@app.command("pipeline")
def pipeline(ctx: typer.Context,
             skip_finetune: bool = typer.Option(False, "--skip-finetune", help="Skip the DDIM fine-tune pass")):
    """Run synth-data, preprocess, train-vae, train-dit, ddim-finetune and evaluate in order"""
    skip = ["ddim-finetune"] if skip_finetune else []

    def action(o: PipelineOrchestrator):
        o.run_pipeline(skip=skip)
        return o.get_status()

    _print(_execute(ctx, action))


if __name__ == "__main__":
    app()
