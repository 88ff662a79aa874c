"""Command-line client for the pipeline service.

By default each command spins up the service in process over the workspace
directory and talks to it through the ASGI test transport; --url points the
same commands at a running remote instance instead. Exit codes: 0 success,
1 runtime error, 2 config error.
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__

CONTEXT_SETTINGS = {"help_option_names": ["-h", "--help"]}


class ServiceClient:
    """Minimal POST/GET wrapper hiding in-process vs remote transport."""

    def __init__(self, workspace: str, url: str | None):
        self._url = url
        self._client = None
        self._workspace = workspace

    def _ensure(self):
        if self._client is None:
            if self._url is not None:
                import httpx

                self._client = httpx.Client(base_url=self._url, timeout=None)
            else:
                import warnings

                with warnings.catch_warnings():
                    # starlette warns about its httpx-backed test client;
                    # the fallback works and is all this environment has
                    warnings.simplefilter("ignore")
                    from starlette.testclient import TestClient

                from .service import create_app

                self._client = TestClient(create_app(self._workspace))
        return self._client

    def post(self, path: str, payload: dict) -> dict:
        resp = self._ensure().post(path, json=payload)
        return self._handle(resp)

    def get(self, path: str) -> dict:
        resp = self._ensure().get(path)
        return self._handle(resp)

    @staticmethod
    def _handle(resp) -> dict:
        try:
            body = resp.json()
        except json.JSONDecodeError:
            body = {"detail": resp.text}
        if resp.status_code < 400:
            return body
        detail = body.get("detail", resp.text)
        if isinstance(detail, list):
            # request-shape validation from the framework: bad field values
            msgs = "; ".join(
                f"{'.'.join(str(p) for p in e.get('loc', []))}: {e.get('msg', '')}"
                for e in detail
            )
            click.echo(f"error: {msgs}", err=True)
            sys.exit(2)
        click.echo(f"error: {detail}", err=True)
        sys.exit(2 if body.get("kind") == "config" else 1)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.option(
    "--workspace", default=".", show_default=True,
    help="Directory holding all named artifacts.",
)
@click.option("--url", default=None, help="Remote service URL (default: run in process).")
@click.version_option(__version__)
@click.pass_context
def main(ctx, workspace, url):
    """Spectral feature extraction and classification pipeline."""
    ctx.obj = ServiceClient(workspace, url)


def _echo_library(body: dict) -> None:
    classes = ", ".join(f"{n}={c}" for n, c in sorted(body["classes"].items()))
    click.echo(
        f"{body['path']}: {body['n_spectra']} spectra x {body['n_bands']} bands ({classes})"
    )


@main.command()
@click.option("--out", required=True, help="Output library name (workspace-relative).")
@click.option("--classes", "n_classes", default=5, show_default=True)
@click.option("--per-class", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--wl-lo", default=0.35, show_default=True)
@click.option("--wl-hi", default=2.6, show_default=True)
@click.option("--step", default=0.005, show_default=True)
@click.pass_obj
def synth(client, out, n_classes, per_class, seed, wl_lo, wl_hi, step):
    """Generate a synthetic library with class-specific absorption dips."""
    body = client.post("/synth", {
        "out": out, "n_classes": n_classes, "per_class": per_class,
        "seed": seed, "wl_lo": wl_lo, "wl_hi": wl_hi, "step": step,
    })
    _echo_library(body)


@main.command()
@click.argument("source")
@click.option("--out", required=True, help="Destination name inside the workspace.")
@click.pass_obj
def ingest(client, source, out):
    """Validate an external library CSV and store it in the workspace."""
    _echo_library(client.post("/ingest", {"source": source, "out": out}))


@main.command()
@click.argument("library")
@click.option("--out", required=True)
@click.option("--wl-lo", default=0.35, show_default=True)
@click.option("--wl-hi", default=2.6, show_default=True)
@click.option("--step", default=0.005, show_default=True)
@click.pass_obj
def preprocess(client, library, out, wl_lo, wl_hi, step):
    """Resample to a uniform grid and normalize each spectrum by its max."""
    body = client.post("/preprocess", {
        "library": library, "out": out, "wl_lo": wl_lo, "wl_hi": wl_hi, "step": step,
    })
    _echo_library(body)
    if body["rejected"]:
        click.echo(f"rejected (range not covered): {', '.join(body['rejected'])}")


@main.command()
@click.argument("library")
@click.option("--out", required=True)
@click.option("--target", "target_per_class", required=True, type=int,
              help="Spectra per class after balancing.")
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def balance(client, library, out, target_per_class, seed):
    """Equalize class sizes by synthesizing convex same-class mixtures."""
    body = client.post("/balance", {
        "library": library, "out": out,
        "target_per_class": target_per_class, "seed": seed,
    })
    _echo_library(body)
    click.echo(f"synthesized {body['synthesized']} spectra; {body['mixing_note']}")


@main.command()
@click.argument("library")
@click.option("--out", required=True)
@click.option("--dmp", required=True, type=float,
              help="Dominant material percentage in (1/9, 1].")
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def blur(client, library, out, dmp, seed):
    """Spatially mix spectra with the 3x3 Gaussian kernel for this DMP."""
    body = client.post("/blur", {"library": library, "out": out, "dmp": dmp, "seed": seed})
    _echo_library(body)
    center = body["kernel"][1][1]
    click.echo(f"kernel center weight {center:.6f} (dmp {body['dmp']})")


@main.command()
@click.argument("library")
@click.option("--train-out", required=True)
@click.option("--test-out", required=True)
@click.option("--train", "train_per_class", required=True, type=int)
@click.option("--test", "test_per_class", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def split(client, library, train_out, test_out, train_per_class, test_per_class, seed):
    """Disjoint per-class train/test split."""
    body = client.post("/split", {
        "library": library, "train_out": train_out, "test_out": test_out,
        "train_per_class": train_per_class, "test_per_class": test_per_class,
        "seed": seed,
    })
    _echo_library(body["train"])
    _echo_library(body["test"])


@main.command()
@click.argument("library")
@click.option("--out", required=True, help="Model JSON name.")
@click.option("--k", required=True, type=int, help="Hidden states per chain.")
@click.option("--levels", default=9, show_default=True)
@click.option("--wavelet", default="haar", show_default=True)
@click.option("--max-iter", default=200, show_default=True)
@click.option("--tol", default=1e-6, show_default=True)
@click.pass_obj
def train(client, library, out, k, levels, wavelet, max_iter, tol):
    """Train per-wavelength hidden Markov chains on a library."""
    body = client.post("/train", {
        "library": library, "out": out, "k": k, "levels": levels,
        "wavelet": wavelet, "max_iter": max_iter, "tol": tol,
    })
    click.echo(
        f"{body['path']}: k={body['k']} L={body['L']} N={body['N']} "
        f"log-likelihood {body['final_log_likelihood']:.3f}"
    )
    for w in body["warnings"]:
        click.echo(f"warning: {w}", err=True)


@main.command()
@click.argument("model")
@click.option("--out", required=True)
@click.pass_obj
def collapse(client, model, out):
    """Collapse a k-state model into the binary mixture-of-Gaussians model."""
    body = client.post("/collapse", {"model": model, "out": out})
    click.echo(f"{body['path']}: binary model from k={body['k']} (L={body['L']}, N={body['N']})")
    for w in body["warnings"]:
        click.echo(f"warning: {w}", err=True)


@main.command()
@click.argument("library")
@click.argument("model")
@click.option("--out-dir", required=True)
@click.option("--signed/--unsigned", default=False, show_default=True,
              help="Multiply labels by coefficient signs.")
@click.pass_obj
def label(client, library, model, out_dir, signed):
    """Decode state label matrices for every spectrum."""
    body = client.post("/label", {
        "library": library, "model": model, "out_dir": out_dir, "signed": signed,
    })
    click.echo(
        f"labeled {len(body['files'])} spectra ({body['model_kind']}, "
        f"signed={body['signed']}); total log-likelihood {body['total_log_likelihood']:.3f}"
    )


@main.command()
@click.argument("train_library")
@click.argument("test_library")
@click.option("--feature", required=True,
              type=click.Choice([
                  "spectrum", "coeffs", "rivard",
                  "gmm_labels", "gmm_sign", "mog_labels", "mog_sign",
              ]))
@click.option("--model", default=None, help="Model JSON for label features.")
@click.option("--classifier", default="nn", show_default=True,
              type=click.Choice(["nn", "svm"]))
@click.option("--metric", default="l2", show_default=True,
              type=click.Choice(["l1", "l2", "cosine"]))
@click.option("--levels", default=9, show_default=True)
@click.option("--wavelet", default="haar", show_default=True)
@click.option("--svm-folds", default=5, show_default=True)
@click.option("--svm-seed", default=0, show_default=True)
@click.pass_obj
def classify(client, train_library, test_library, feature, model, classifier, metric,
             levels, wavelet, svm_folds, svm_seed):
    """Classify a test library against a training library."""
    body = client.post("/classify", {
        "train_library": train_library, "test_library": test_library,
        "feature": feature, "model": model, "classifier": classifier,
        "metric": metric, "levels": levels, "wavelet": wavelet,
        "svm_folds": svm_folds, "svm_seed": svm_seed,
    })
    click.echo(f"accuracy {body['accuracy']:.4f}")
    for name, acc in sorted(body["per_class"].items()):
        click.echo(f"  {name}: {acc:.4f}")


@main.command()
@click.argument("library")
@click.argument("model")
@click.option("--out-dir", required=True)
@click.pass_obj
def semantics(client, library, model, out_dir):
    """Absorption-band summaries from signed binary labels."""
    body = client.post("/semantics", {
        "library": library, "model": model, "out_dir": out_dir,
    })
    for sid, bands in sorted(body["bands"].items()):
        where = ", ".join(f"{b:.4f}" for b in bands) if bands else "none"
        click.echo(f"{sid}: bands at {where}")
    click.echo(f"wrote {len(body['files'])} files")


@main.command()
@click.argument("config")
@click.option("--out-dir", required=True)
@click.option("--workers", default=None, type=int,
              help="Parallel sweep workers (default from config / env).")
@click.pass_obj
def benchmark(client, config, out_dir, workers):
    """Run the full seeded sweep described by a config file."""
    body = client.post("/benchmark", {
        "config_path": config, "out_dir": out_dir, "workers": workers,
    })
    click.echo(
        f"{body['n_rows']} rows -> {body['report']} (config {body['config_sha256'][:12]})"
    )


@main.command(name="export-plot-data")
@click.argument("report")
@click.option("--out-dir", required=True)
@click.pass_obj
def export_plot_data(client, report, out_dir):
    """Turn a benchmark report into plot-ready accuracy-vs-DMP series."""
    body = client.post("/export-plot-data", {"report": report, "out_dir": out_dir})
    for f in body["files"]:
        click.echo(f)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the service over the workspace directory."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ctx.parent.params["workspace"]), host=host, port=port)


if __name__ == "__main__":
    main()
