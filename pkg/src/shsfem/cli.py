"""Command line front end: ``shsfem run``, ``shsfem preset`` and ``shsfem list``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, analysis, config, kl
from .mesh import generate_rectangular
from .presets import get_preset, list_presets

log = logging.getLogger("shsfem")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class SolverFailure(RuntimeError):
    pass


def load_config(path: str | Path) -> dict:
    """Read a config file; a previous run.json is accepted and its embedded config re-used."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as err:
        raise config.ConfigError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise config.ConfigError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None
    if isinstance(data, dict) and "config" in data and "task" not in data:
        data = data["config"]
    return data


# ---------------------------------------------------------------------------
# tasks; each returns (csv text, markdown text, metadata dict)


def _run_convergence(cfg: dict, meta: dict):
    try:
        cases = [config.build_case(cfg, s) for s in config.expand_cases(cfg)]
    except config.ConfigError:
        raise
    except ValueError as err:
        raise config.ConfigError(str(err)) from err
    report = analysis.ErrorReport()
    meta["quadrature"] = [{"case": c.label, "spatial": c.n_gauss, "assembly_stochastic": c.assembly_points,
                           "error_spatial": c.quad_space, "error_stochastic": c.quad_stoch} for c in cases]
    try:
        analysis.convergence_study(cases, report)
    except Exception as err:  # keep the rows that finished
        raise SolverFailure(str(err)) from err
    finally:
        meta["wall_times"] = [r.wall_time for r in report.rows]
        meta["partial"] = (report.to_csv(), _title(cfg) + report.to_markdown())
    meta["p_slopes"] = report.p_slopes()
    return report.to_csv(), _title(cfg) + report.to_markdown()


def _run_stability(cfg: dict, meta: dict):
    st = {"lambdas": [1.0, 1e2, 1e4, 1e6], "mesh": [4, 4], "degree": 2, "mode": "plane_strain", "patch": True}
    st.update(cfg.get("stability", {}))
    domain = cfg.get("domain", [[0.0, 1.0], [0.0, 1.0]])
    mesh = generate_rectangular(*st["mesh"], domain=domain)
    rows = []
    for lam in st["lambdas"]:
        t0 = time.perf_counter()
        r = analysis.stability_sweep(mesh, [lam], st["degree"], st["mode"])[0]
        rows.append(r)
        meta.setdefault("wall_times", []).append(time.perf_counter() - t0)
    alphas = [r.alpha for r in rows]
    betas = [r.beta for r in rows]
    meta["alpha_ratio"] = max(alphas) / min(alphas)
    meta["beta_ratio"] = max(betas) / min(betas)
    if st["patch"]:
        law = analysis.MaterialLaw(st["mode"], 0.3)
        meta["patch_error"] = analysis.patch_test(analysis.distorted_patch(), law, [1.0, -0.5, 0.7])
    csv_lines = ["lambda,nu,alpha,beta,kernel_dim"]
    md = [_title(cfg).rstrip(), "", f"mesh {st['mesh'][0]}x{st['mesh'][1]}, degree {st['degree']}, {st['mode']}", "",
          "| lambda | nu | alpha_h | beta_h |", "|---:|---:|---:|---:|"]
    for r in rows:
        csv_lines.append(f"{float(r.lam)!r},{float(r.nu)!r},{float(r.alpha)!r},{float(r.beta)!r},{r.kernel_dim}")
        md.append(f"| {r.lam:g} | {r.nu:.7f} | {r.alpha:.6f} | {r.beta:.6f} |")
    md += ["", f"max/min alpha_h = {meta['alpha_ratio']:.4f}, max/min beta_h = {meta['beta_ratio']:.4f}"]
    if "patch_error" in meta:
        md.append(f"constant-stress patch test, distorted 2x2 mesh: max relative error {meta['patch_error']:.2e}")
    return "\n".join(csv_lines) + "\n", "\n".join(md) + "\n"


def _run_kl(cfg: dict, meta: dict):
    k = cfg["kl"]
    kc = k["kernel"]
    kernel = kl.CovarianceKernel(kc["kind"], float(kc.get("variance", 1.0)), float(kc.get("length", 1.0)))
    interval = k.get("interval", [0.0, 1.0])
    n_modes, n_quad = k.get("n_modes", 10), k.get("n_quad", 200)
    t0 = time.perf_counter()
    modes = kl.solve_eigenpairs(kernel, [interval], n_modes, n_quad, k.get("panel_points", 10))
    meta["wall_times"] = [time.perf_counter() - t0]
    trace = modes.trace
    total = float(np.sum(modes.spectrum))
    meta["trace"] = trace
    meta["trace_residual"] = abs(total - trace) / trace if trace > 0 else abs(total)
    meta["orthonormality_residual"] = modes.orthonormality_residual()
    errs = [kl.truncation_error(modes, n) for n in range(n_modes + 1)]
    meta["truncation_identity_residual"] = max(
        abs(errs[n] ** 2 + float(np.sum(modes.spectrum[:n])) - total) / max(total, 1e-300) for n in range(n_modes + 1))
    ns = np.arange(1, n_modes + 1)
    good = np.array(errs[1:]) > 0
    if good.sum() >= 2:
        meta["log_error_vs_sqrt_n_slope"] = float(np.polyfit(np.sqrt(ns[good]), np.log(np.array(errs[1:])[good]), 1)[0])
    csv_lines = ["n,eigenvalue,truncation_error"]
    md = [_title(cfg).rstrip(), "", f"{kc['kind']} kernel on [{interval[0]:g}, {interval[1]:g}], {n_quad} points", "",
          "| n | eigenvalue | truncation error |", "|---:|---:|---:|"]
    for n in range(n_modes):
        csv_lines.append(f"{n + 1},{float(modes.eigenvalues[n])!r},{float(errs[n + 1])!r}")
        md.append(f"| {n + 1} | {modes.eigenvalues[n]:.8e} | {errs[n + 1]:.6e} |")
    md += ["", f"trace {trace:.10f}, relative trace residual {meta['trace_residual']:.2e}, "
               f"orthonormality residual {meta['orthonormality_residual']:.2e}"]
    return "\n".join(csv_lines) + "\n", "\n".join(md) + "\n"


def _title(cfg: dict) -> str:
    return f"## {cfg['title']}\n\n" if cfg.get("title") else ""


TASKS = {"convergence": _run_convergence, "stability": _run_stability, "kl": _run_kl}


def _versions() -> dict:
    return {"shsfem": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write(out: Path, csv_text: str, md_text: str, meta: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(csv_text)
    (out / "table.md").write_text(md_text)
    (out / "run.json").write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def run_config(cfg: dict, out: str | Path | None = None) -> int:
    """Validate, run and write artifacts; returns the process exit code."""
    try:
        config.validate(cfg)
    except config.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out or cfg.get("output", {}).get("dir") or "shsfem_out")
    meta = {"config": cfg, "versions": _versions(), "status": "running"}
    t0 = time.perf_counter()
    try:
        csv_text, md_text = TASKS[cfg["task"]](cfg, meta)
    except config.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as err:
        meta["status"] = "error"
        meta["error"] = str(err)
        csv_text, md_text = meta.pop("partial")
        meta["total_time"] = time.perf_counter() - t0
        _write(out, csv_text, md_text, meta)
        print(f"solver error: {err} (partial results in {out})", file=sys.stderr)
        return EXIT_SOLVER
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as err:
        meta["status"] = "error"
        meta["error"] = str(err)
        meta["total_time"] = time.perf_counter() - t0
        _write(out, "", "", meta)
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    meta.pop("partial", None)
    meta["status"] = "ok"
    meta["total_time"] = time.perf_counter() - t0
    _write(out, csv_text, md_text, meta)
    log.info("wrote %s", out)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shsfem", description="Stochastic hybrid stress finite element studies")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--version", action="version", version=f"shsfem {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a JSON experiment config (or a previous run.json)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output.dir or ./shsfem_out)")
    pr = sub.add_parser("preset", help="run a named preset")
    pr.add_argument("name")
    pr.add_argument("--out", help="output directory (default: ./<name>)")
    pr.add_argument("--show", action="store_true", help="print the preset config and exit")
    sub.add_parser("list", help="list presets")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name, desc in list_presets():
            print(f"{name:20s} {desc}")
        return EXIT_OK
    if args.command == "preset":
        try:
            cfg = get_preset(args.name)
        except KeyError as err:
            print(f"config error: {err.args[0]}", file=sys.stderr)
            return EXIT_CONFIG
        if args.show:
            print(json.dumps(cfg, indent=2))
            return EXIT_OK
        return run_config(cfg, args.out or args.name)
    try:
        cfg = load_config(args.config)
    except config.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run_config(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
