"""Command-line client for the inference service.

Every subcommand builds an HTTP request against the FastAPI app: by default
in-process (no server needed), or against a running server via --server.
`lamf serve` starts that server. Reports print as text, or as CSV with
--csv (one header row, one value row; schedule prints one row per layer).
"""

from __future__ import annotations

import csv
import json
import sys

import click
import httpx

from . import __version__
from .config import ModelConfig
from .errors import LamfError
from .modelfile import gen_synthetic, write_model
from .textio import synthetic_vocab, write_vocab

FRACTION_ORDER = ("matrix", "attention", "swiglu", "rope", "rmsnorm")


class ServiceClient:
    """Thin HTTP client; in-process ASGI transport unless --server is given."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            # same app, no socket: the ASGI app is driven in-process
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # starlette deprecation chatter
                from fastapi.testclient import TestClient

            from .service import create_app
            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"request to {path} failed: {exc}") from exc
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            raise click.ClickException(f"{path}: {detail}")
        return resp.json()


def emit_csv(rows: list[dict]):
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)


def report_row(report: dict) -> dict:
    row = {
        "tokens": report["tokens"],
        "wall_seconds": f"{report['wall_seconds']:.6f}",
        "tok_per_s": f"{report['tok_per_s']:.4f}",
        "gops": f"{report['gops']:.4f}",
        "workers": report["workers"],
    }
    for name in FRACTION_ORDER:
        row[f"frac_{name}"] = f"{report['fractions'].get(name, 0.0):.6f}"
    return row


def print_report(report: dict):
    click.echo(f"tokens: {report['tokens']}   wall: {report['wall_seconds']:.3f} s   "
               f"tok/s: {report['tok_per_s']:.4f}   GOPS: {report['gops']:.4f}")
    parts = "   ".join(f"{name}: {report['fractions'].get(name, 0.0) * 100:.2f}%"
                       for name in FRACTION_ORDER)
    click.echo(f"runtime fractions: {parts}")


@click.group()
@click.version_option(version=__version__, prog_name="lamf")
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running lamf server (default: run in-process).")
@click.pass_context
def main(ctx, server):
    """Quantized Llama2-architecture inference engine and pipeline simulator."""
    ctx.obj = {"server": server}


def _client(ctx) -> ServiceClient:
    return ServiceClient(ctx.obj["server"])


def _generate_payload(model, tokenizer, prompt, steps, mode, p, temperature, seed,
                      benchmark, async_, inject_transfer_us, workers, kernel):
    return {
        "model_path": model, "tokenizer_path": tokenizer, "prompt": prompt,
        "steps": steps,
        "sampler": {"mode": "top_p" if mode == "topp" else "greedy",
                    "p": p, "temperature": temperature, "seed": seed},
        "benchmark": benchmark, "async_prefetch": async_ == "on",
        "inject_transfer_us": inject_transfer_us, "workers": workers,
        "kernel": kernel,
    }


def generation_options(fn):
    fn = click.option("--model", required=True, help="LAMF model file.")(fn)
    fn = click.option("--tokenizer", required=True, help="Tokenizer file.")(fn)
    fn = click.option("--prompt", default="", help="Prompt text.")(fn)
    fn = click.option("--steps", default=64, show_default=True,
                      help="Tokens to generate.")(fn)
    fn = click.option("--mode", type=click.Choice(["greedy", "topp"]),
                      default="greedy", show_default=True)(fn)
    fn = click.option("--p", default=0.9, show_default=True,
                      help="Nucleus mass for top-p sampling.")(fn)
    fn = click.option("--temperature", default=1.0, show_default=True)(fn)
    fn = click.option("--seed", default=0, show_default=True)(fn)
    fn = click.option("--async", "async_", type=click.Choice(["on", "off"]),
                      default="on", show_default=True,
                      help="Overlap weight transfer with compute.")(fn)
    fn = click.option("--inject-transfer-us", default=0.0, show_default=True,
                      help="Artificial per-layer transfer delay (microseconds).")(fn)
    fn = click.option("--workers", default=1, show_default=True,
                      help="Threads for row/head parallelism.")(fn)
    fn = click.option("--kernel", type=click.Choice(["reference", "staged"]),
                      default="reference", show_default=True)(fn)
    fn = click.option("--csv", "as_csv", is_flag=True, help="CSV report output.")(fn)
    return fn


@main.command()
@generation_options
@click.pass_context
def generate(ctx, model, tokenizer, prompt, steps, mode, p, temperature, seed,
             async_, inject_transfer_us, workers, kernel, as_csv):
    """Generate text and report throughput."""
    payload = _generate_payload(model, tokenizer, prompt, steps, mode, p, temperature,
                                seed, False, async_, inject_transfer_us, workers, kernel)
    out = _client(ctx).post("/generate", payload)
    click.echo(out["text"])
    if as_csv:
        emit_csv([report_row(out["report"])])
    else:
        print_report(out["report"])


@main.command()
@generation_options
@click.pass_context
def benchmark(ctx, model, tokenizer, prompt, steps, mode, p, temperature, seed,
              async_, inject_transfer_us, workers, kernel, as_csv):
    """Timed decode: EOS is suppressed so exactly --steps tokens are measured."""
    payload = _generate_payload(model, tokenizer, prompt, steps, mode, p, temperature,
                                seed, True, async_, inject_transfer_us, workers, kernel)
    out = _client(ctx).post("/generate", payload)
    if as_csv:
        emit_csv([report_row(out["report"])])
    else:
        print_report(out["report"])


@main.command()
@generation_options
@click.pass_context
def profile(ctx, model, tokenizer, prompt, steps, mode, p, temperature, seed,
            async_, inject_transfer_us, workers, kernel, as_csv):
    """Per-component runtime breakdown of a timed decode."""
    payload = _generate_payload(model, tokenizer, prompt, steps, mode, p, temperature,
                                seed, True, async_, inject_transfer_us, workers, kernel)
    out = _client(ctx).post("/generate", payload)
    report = out["report"]
    if as_csv:
        emit_csv([report_row(report)])
        return
    click.echo(f"decoded {report['tokens']} tokens in {report['wall_seconds']:.3f} s")
    for name in FRACTION_ORDER:
        click.echo(f"  {name:<12} {report['fractions'].get(name, 0.0) * 100:7.3f}%")


@main.command("gops")
@click.option("--model", required=True)
@click.option("--repeats", default=20, show_default=True)
@click.option("--kernel", type=click.Choice(["reference", "staged"]), default="reference")
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
def gops_bench(ctx, model, repeats, kernel, as_csv):
    """Average GOPS of the classifier matrix-vector product."""
    out = _client(ctx).post("/gops", {"model_path": model, "repeats": repeats,
                                      "kernel": kernel})
    if as_csv:
        emit_csv([{k: out[k] for k in ("ops", "repeats", "mean_gops", "std_gops")}])
    else:
        click.echo(f"ops per run: {out['ops']}   mean: {out['mean_gops']:.4f} GOPS   "
                   f"std: {out['std_gops']:.4f} ({out['repeats']} repeats)")


@main.command()
@click.option("--m", required=True, type=int, help="Matrix rows.")
@click.option("--n", required=True, type=int, help="Matrix columns.")
@click.option("--lanes", default=16, show_default=True)
@click.option("--gs", default=256, show_default=True)
@click.option("--clock-mhz", default=205.0, show_default=True)
@click.option("--ddr-bytes-per-cycle", default=None, type=float,
              help="Effective DDR supply rate; omit for unlimited.")
@click.option("--stream-depth", default=16, show_default=True)
@click.option("--stage-latency", default=4, show_default=True)
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
def simulate(ctx, m, n, lanes, gs, clock_mhz, ddr_bytes_per_cycle, stream_depth,
             stage_latency, as_csv):
    """Cycle/throughput report from the accelerator pipeline model."""
    out = _client(ctx).post("/simulate", {
        "m": m, "n": n, "simd_lanes": lanes, "gs": gs, "clock_hz": clock_mhz * 1e6,
        "ddr_bytes_per_cycle": ddr_bytes_per_cycle,
        "stream_depth": stream_depth, "stage_latency": stage_latency,
    })
    if as_csv:
        row = {k: out[k] for k in ("m", "n", "total_cycles", "busy_cycles",
                                   "stall_cycles", "fill_cycles", "drain_cycles",
                                   "steady_row_cycles", "ops", "sustained_gops",
                                   "peak_gops")}
        for stage, cycles in out["stage_busy"].items():
            row[f"busy_{stage}"] = cycles
        emit_csv([row])
        return
    click.echo(f"({m} x {n}) GQMV: {out['total_cycles']} cycles "
               f"({out['seconds'] * 1e3:.3f} ms at {clock_mhz:.0f} MHz)")
    click.echo(f"  steady row cycles: {out['steady_row_cycles']}   "
               f"stalls: {out['stall_cycles']}   fill: {out['fill_cycles']}   "
               f"drain: {out['drain_cycles']}")
    for stage, cycles in out["stage_busy"].items():
        click.echo(f"  busy[{stage}]: {cycles}")
    click.echo(f"  sustained: {out['sustained_gops']:.4f} GOPS   "
               f"peak: {out['peak_gops']:.4f} GOPS")


@main.command()
@click.option("--target-gops", required=True, type=float)
@click.option("--m", default=32000, show_default=True)
@click.option("--n", default=2048, show_default=True)
@click.option("--lanes", default=16, show_default=True)
@click.option("--gs", default=256, show_default=True)
@click.option("--clock-mhz", default=205.0, show_default=True)
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
def calibrate(ctx, target_gops, m, n, lanes, gs, clock_mhz, as_csv):
    """Find the effective DDR rate reproducing a measured GOPS figure."""
    out = _client(ctx).post("/calibrate", {
        "target_gops": target_gops, "m": m, "n": n, "simd_lanes": lanes,
        "gs": gs, "clock_hz": clock_mhz * 1e6})
    if as_csv:
        emit_csv([out])
    else:
        click.echo(f"effective DDR rate: {out['ddr_bytes_per_cycle']:.4f} bytes/cycle "
                   f"(achieves {out['achieved_gops']:.4f} GOPS)")


@main.command()
@click.option("--compute", required=True,
              help="Comma-separated per-layer compute times.")
@click.option("--transfer", required=True,
              help="Comma-separated per-layer transfer times.")
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
def schedule(ctx, compute, transfer, as_csv):
    """Compare synchronous vs asynchronous transfer/compute schedules."""
    tc = [float(x) for x in compute.split(",")]
    tt = [float(x) for x in transfer.split(",")]
    client = _client(ctx)
    timelines = {mode: client.post("/schedule", {"compute": tc, "transfer": tt,
                                                 "mode": mode})
                 for mode in ("sync", "async")}
    if as_csv:
        rows = []
        for mode, tl in timelines.items():
            for l in range(len(tc)):
                rows.append({
                    "mode": mode, "layer": l,
                    "transfer_start": tl["transfer_start"][l],
                    "transfer_end": tl["transfer_end"][l],
                    "compute_start": tl["compute_start"][l],
                    "compute_end": tl["compute_end"][l],
                    "total_time": tl["total_time"],
                })
        emit_csv(rows)
        return
    sync_t = timelines["sync"]["total_time"]
    async_t = timelines["async"]["total_time"]
    click.echo(f"sync total:  {sync_t:.6f}")
    click.echo(f"async total: {async_t:.6f}")
    if async_t > 0:
        click.echo(f"speedup:     {sync_t / async_t:.3f}x")


@main.command("quantize-stats")
@click.option("--gs", default=256, show_default=True, help="Group size.")
@click.option("--values-file", default=None,
              help="JSON file holding an array of FP32 values.")
@click.option("--random-normal", default=None, type=int,
              help="Sample this many standard-normal values instead.")
@click.option("--seed", default=0, show_default=True)
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
def quantize_stats(ctx, gs, values_file, random_normal, seed, as_csv):
    """Group-wise quantization error statistics."""
    payload = {"group_size": gs, "seed": seed}
    if values_file:
        with open(values_file) as fh:
            payload["values"] = json.load(fh)
    elif random_normal:
        payload["random_normal"] = random_normal
    else:
        raise click.ClickException("provide --values-file or --random-normal")
    out = _client(ctx).post("/quantize-stats", payload)
    if as_csv:
        emit_csv([out])
        return
    click.echo(f"{out['count']} values in {out['groups']} groups of {gs}")
    click.echo(f"  |error|  max {out['max']:.6g}  min {out['min']:.6g}  "
               f"mean {out['mean']:.6g}  std {out['std']:.6g}")
    click.echo(f"  error %  mean {out['mean_rel_pct']:.4f}%  std {out['std_rel_pct']:.4f}%")


@main.command()
@click.pass_context
def selftest(ctx):
    """Run the built-in oracle checks; exit nonzero on any failure."""
    out = _client(ctx).post("/selftest", {})
    click.echo(f"passed: {out['passed']}   failed: {out['failed']}")
    for failure in out["failures"]:
        click.echo(f"  FAIL {failure}")
    if not out["ok"]:
        raise click.ClickException("selftest failures")


@main.command()
@click.option("--out", required=True, help="Output LAMF model path.")
@click.option("--tokenizer-out", default=None, help="Also write a tokenizer file.")
@click.option("--dim", default=64, show_default=True)
@click.option("--hidden-dim", default=128, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--kv-heads", default=2, show_default=True)
@click.option("--vocab-size", default=512, show_default=True)
@click.option("--seq-len", default=256, show_default=True)
@click.option("--gs", default=32, show_default=True)
@click.option("--shared-classifier", is_flag=True)
@click.option("--seed", default=0, show_default=True)
def synth(out, tokenizer_out, dim, hidden_dim, layers, heads, kv_heads, vocab_size,
          seq_len, gs, shared_classifier, seed):
    """Write a deterministic synthetic model (and tokenizer) for testing."""
    try:
        config = ModelConfig(dim=dim, hidden_dim=hidden_dim, n_layers=layers,
                             n_heads=heads, n_kv_heads=kv_heads,
                             vocab_size=vocab_size, seq_len=seq_len, gs=gs,
                             shared_classifier=shared_classifier)
        write_model(config, gen_synthetic(config, seed), out)
        click.echo(f"wrote {out}")
        if tokenizer_out:
            write_vocab(synthetic_vocab(vocab_size), tokenizer_out)
            click.echo(f"wrote {tokenizer_out}")
    except LamfError as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
