"""Command-line front end: ``wickbeam <subcommand> [options]``.

Every run writes its artifacts into an output directory together with
``resolved-config.json`` (all parameters after merging defaults, the config
file and flags) and ``manifest.json`` (versions, seed, wall time and the
artifact list).  Parameters come from, in increasing priority: built-in
defaults, an INI config file (``--config``; any section, keys named like the
flags with ``-`` or ``_``) or a previous ``resolved-config.json``, and
command-line flags.

Exit status: 0 on success, 1 on invalid input, 2 on numerical failure
(blow-up, insufficient padding, non-finite values).  Failures print one line
``error: <kind>: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import spectral
from .io import write_csv, write_fields, write_json

OUTPUT_ROOT_ENV = "WICKBEAM_OUTPUT_ROOT"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class ValidationError(ValueError):
    """Invalid configuration or arguments (exit status 1)."""


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int, float, str, bool, ints, floats
    default: object
    help: str = ""
    choices: tuple | None = None


def _parse_value(p: Param, raw):
    if raw is None:
        return None
    try:
        if p.kind in ("ints", "floats"):
            if isinstance(raw, (list, tuple)):
                items = list(raw)
            else:
                items = [x for x in str(raw).replace(" ", "").split(",") if x]
            conv = int if p.kind == "ints" else float
            val = [conv(x) for x in items]
        elif p.kind == "int":
            val = int(raw)
        elif p.kind == "float":
            val = float(raw)
        elif p.kind == "bool":
            if isinstance(raw, bool):
                val = raw
            else:
                s = str(raw).strip().lower()
                if s not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(s)
                val = s in ("1", "true", "yes", "on")
        else:
            val = str(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"parameter {p.name}: cannot parse {raw!r} as {p.kind}") from None
    if p.choices is not None and val not in p.choices:
        raise ValidationError(f"parameter {p.name}: {val!r} not in {list(p.choices)}")
    return val


# ---------------------------------------------------------------------------
# subcommands


COMMON = [
    Param("seed", "int", 0, "seed of the counter-based random stream"),
]


@dataclass
class Command:
    name: str
    help: str
    params: list
    run: Callable[[dict, Path], list]


def _grid(p):
    return spectral.Grid(p["M"], p["d"])


def _run_sample_noise(p: dict, out: Path) -> list:
    from .noise import NoiseStream, sample_wick_trajectory

    grid = _grid(p)
    n_steps = int(round(p["T"] / p["dt"]))
    if abs(n_steps * p["dt"] - p["T"]) > 1e-9 * max(1.0, p["T"]):
        raise ValidationError("T must be a multiple of dt")
    times = p["dt"] * np.arange(n_steps + 1)
    enh = sample_wick_trajectory(p["kind"], p["k"], times, NoiseStream(p["seed"]), grid, p["N"],
                                 paths=p["paths"], base_dt=p["dt"])
    rows = [["t", "sigma", "mean_l2_sq", "mean_wick2_mean"]]
    for i, t in enumerate(times):
        psi = enh.psi_field(i)
        l2 = np.asarray(spectral.sobolev_norm(psi, 0.0)) ** 2
        w2 = enh.wick_powers(i)[2] if p["k"] >= 2 else None
        w2m = float(np.mean(w2.coeffs[(Ellipsis,) + (0,) * grid.d].real)) if w2 is not None else float("nan")
        rows.append([repr(float(t)), repr(float(enh.sigma[i])), repr(float(np.mean(l2))), repr(w2m)])
    write_csv(out / "convolution.csv", rows)
    write_fields(out / "psi_final.b4df", enh.psi_field(len(times) - 1))
    return ["convolution.csv", "psi_final.b4df"]


def _run_wick_convergence(p: dict, out: Path) -> list:
    from .noise import NoiseStream, wick_square_gap_moment, wick_square_gap_samples

    rows = [["N", "exact_mean_sq", "exact_rms", "mc_mean_norm", "mc_se", "mc_mean_sq"]]
    mc_N = [n for n in p["N_list"] if n <= p["mc_n_max"]]
    mc = wick_square_gap_samples(mc_N, p["samples"], NoiseStream(p["seed"]), p["t"], p["kind"], p["s"]) if mc_N and p["samples"] > 0 else {}
    for N in p["N_list"]:
        ex = wick_square_gap_moment(N, p["t"], p["kind"], p["s"])
        if N in mc:
            v = mc[N]
            se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
            rows.append([N, ex, math.sqrt(ex), float(np.mean(v)), se, float(np.mean(v * v))])
        else:
            rows.append([N, ex, math.sqrt(ex), "", "", ""])
    write_csv(out / "wick_convergence.csv", rows)
    return ["wick_convergence.csv"]


def _trajectory(p: dict, out: Path, damped: bool) -> list:
    from .dynamics import DIAGNOSTICS, IntegratorConfig, ModelSpec, run_trajectory
    from .noise import NoiseStream, sample_initial_mu2
    from .state import PairState

    grid = spectral.Grid(p["M"], p["d"], p["pad_factor"] or None)
    cfg = IntegratorConfig(dt=p["dt"], scheme=p["scheme"], blowup_threshold=p["threshold"], s=p["s"],
                           pad_size=p["pad_size"] or None)
    k = None if p["k"] == 0 else p["k"]
    model = ModelSpec(k=k, sign=p["sign"], damped=damped, N=p["N"], noisy=p["noisy"])
    stream = NoiseStream(p["seed"])
    if damped:
        init = sample_initial_mu2(stream, grid)
    else:
        rng = np.random.default_rng(p["seed"])
        v0 = spectral.random_field(grid, p["s"], rng) * p["amplitude"]
        init = PairState(v0, spectral.SpectralField.zeros(grid), 0.0)
    diags = [d for d in p["diagnostics"].split(",") if d]
    for d in diags:
        if d not in DIAGNOSTICS:
            raise ValidationError(f"unknown diagnostic {d!r}; choose from {list(DIAGNOSTICS)}")
    if p["T"] < 0:
        raise ValidationError("T must be non-negative")
    rec = run_trajectory(init, model, cfg, p["T"], diags, every=p["every"], stream=stream if p["noisy"] else None)
    rows = [["t"] + diags]
    for i, t in enumerate(rec.times):
        rows.append([repr(t)] + [repr(rec.diagnostics[d][i]) for d in diags])
    write_csv(out / "diagnostics.csv", rows)
    write_fields(out / "final_position.b4df", rec.final.position)
    write_fields(out / "final_velocity.b4df", rec.final.velocity)
    write_json(out / "summary.json", {"stopped_at": rec.stopped_at, "final_time": rec.final.t,
                                      "steps": int(round(p["T"] / p["dt"]))})
    if rec.blowup is not None:
        raise rec.blowup
    return ["diagnostics.csv", "final_position.b4df", "final_velocity.b4df", "summary.json"]


def _run_snlb(p, out):
    return _trajectory(p, out, damped=False)


def _run_sdnlb(p, out):
    return _trajectory(p, out, damped=True)


def _gibbs_spec(p):
    from .gibbs import GibbsSpec

    return GibbsSpec(k=None if p["k"] == 0 else p["k"], N=p["N"], sampler=p["sampler"], burn_in=p["burn_in"],
                     pcn_beta=p["pcn_beta"])


def _run_gibbs_sample(p: dict, out: Path) -> list:
    from .gibbs import compute_RN, sample_rhoN
    from .noise import NoiseStream

    ens = sample_rhoN(_gibbs_spec(p), NoiseStream(p["seed"]), n_samples=p["samples"])
    st = ens.to_pair_state()
    write_fields(out / "ensemble_position.b4df", st.position)
    write_fields(out / "ensemble_velocity.b4df", st.velocity)
    m = ens.modes
    shells = {}
    for sq in sorted(set(int(x) for x in m.nsq))[:6]:
        sel = m.nsq == sq
        shells[str(sq)] = {"position_sq": float(np.mean(np.abs(ens.position[:, sel]) ** 2)),
                           "velocity_sq": float(np.mean(np.abs(ens.velocity[:, sel]) ** 2))}
    rn = compute_RN(st.position, p["N"], p["k"] or 3)
    write_json(out / "summary.json", {"acceptance_rate": ens.acceptance_rate, "samples": p["samples"],
                                      "shell_moments": shells, "mean_R_N": float(np.mean(rn)),
                                      "schema": "wickbeam.gibbs_summary/1"})
    return ["ensemble_position.b4df", "ensemble_velocity.b4df", "summary.json"]


def _run_invariance(p: dict, out: Path) -> list:
    from .gibbs import DEFAULT_OBSERVABLES, invariance_test
    from .noise import NoiseStream

    obs = [o for o in p["observables"].split(",") if o] or list(DEFAULT_OBSERVABLES)
    rep = invariance_test(_gibbs_spec(p), p["dt"], p["T"], p["paths"], NoiseStream(p["seed"]), obs,
                          levels=p["levels"])
    write_json(out / "invariance_report.json", rep.to_dict())
    write_csv(out / "invariance_report.csv", rep.csv_rows())
    return ["invariance_report.json", "invariance_report.csv"]


def _run_imethod_audit(p: dict, out: Path) -> list:
    from .imethod import audit_run

    led = audit_run(p["M"], p["N"], p["s"], p["dt"], p["T"], p["seed"], noise_cutoff=p["noise_cutoff"] or None,
                    base_dt=p["base_dt"] or None, noisy=p["noisy"], amplitude=p["amplitude"])
    write_json(out / "energy_ledger.json", led.to_dict())
    write_csv(out / "energy_ledger.csv", led.csv_rows())
    return ["energy_ledger.json", "energy_ledger.csv"]


def _write_scaling(rep, out: Path, stem: str) -> list:
    write_json(out / f"{stem}.json", rep.to_dict())
    write_csv(out / f"{stem}.csv", rep.csv_rows())
    (out / f"{stem}.gp").write_text(rep.gnuplot_script(f"{stem}.csv"), encoding="utf-8")
    return [f"{stem}.json", f"{stem}.csv", f"{stem}.gp"]


def _run_commutator(p: dict, out: Path) -> list:
    from .imethod import commutator_scaling

    rep = commutator_scaling(p["k"], p["s"], p["N_list"], p["samples"], p["seed"], p["variant"],
                             p["band"] or None, p["dim"])
    return _write_scaling(rep, out, "commutator_scaling")


def _run_strichartz(p: dict, out: Path) -> list:
    from .imethod import strichartz_probe

    rep = strichartz_probe(p["p"], p["N_list"], p["samples"], p["seed"], p["dim"], p["data"], p["time_nodes"])
    return _write_scaling(rep, out, "strichartz_probe")


def _run_variance_tables(p: dict, out: Path) -> list:
    from .wick import variance_table, write_variance_csv

    Ns = list(range(0, p["n_max"] + 1))
    rows = variance_table(p["kind"], Ns, p["times"] if p["kind"] == "sigma" else None, p["d"])
    write_variance_csv(rows, out / "variance_table.csv")
    return ["variance_table.csv"]


_GRID = [Param("d", "int", 4, "torus dimension"), Param("M", "int", 16, "grid points per axis")]

COMMANDS = {
    "sample-noise": Command("sample-noise", "sample a stochastic convolution and its Wick powers", _GRID + [
        Param("kind", "str", "undamped", choices=("undamped", "damped")),
        Param("N", "float", 4.0, "ball cutoff of the noise"),
        Param("k", "int", 3, "highest Wick power"),
        Param("dt", "float", 0.1), Param("T", "float", 1.0),
        Param("paths", "int", 4, "number of independent paths"),
    ], _run_sample_noise),
    "wick-convergence": Command("wick-convergence", "Cauchy gap of the Wick square across cutoffs", [
        Param("N_list", "ints", [4, 8, 16]), Param("t", "float", 1.0),
        Param("kind", "str", "undamped", choices=("undamped", "damped")),
        Param("s", "float", -0.25, "Sobolev index of the gap norm"),
        Param("samples", "int", 200), Param("mc_n_max", "int", 8, "largest N sampled by Monte Carlo"),
    ], _run_wick_convergence),
    "simulate-snlb": Command("simulate-snlb", "undamped Wick-ordered beam equation (remainder)", _GRID + [
        Param("pad_factor", "int", 0), Param("pad_size", "int", 0),
        Param("k", "int", 3, "degree (0: linear)"), Param("sign", "int", 1, choices=(1, -1)),
        Param("N", "float", 4.0, "noise cutoff"), Param("noisy", "bool", True),
        Param("dt", "float", 0.01), Param("T", "float", 1.0),
        Param("scheme", "str", "strang", choices=("strang", "lie")), Param("threshold", "float", 1e6),
        Param("s", "float", 1.0, "regularity of the initial data"), Param("amplitude", "float", 1.0),
        Param("every", "int", 1), Param("diagnostics", "str", "norm,energy"),
    ], _run_snlb),
    "simulate-sdnlb": Command("simulate-sdnlb", "damped truncated Gibbs dynamics from mu_2 data", _GRID + [
        Param("pad_factor", "int", 0), Param("pad_size", "int", 0),
        Param("k", "int", 3), Param("sign", "int", 1, choices=(1, -1)),
        Param("N", "float", 2.0, "nonlinearity cutoff"), Param("noisy", "bool", True),
        Param("dt", "float", 0.01), Param("T", "float", 1.0),
        Param("scheme", "str", "strang", choices=("strang",)), Param("threshold", "float", 1e6),
        Param("s", "float", -0.25, "diagnostic regularity"), Param("amplitude", "float", 1.0),
        Param("every", "int", 1), Param("diagnostics", "str", "norm,l2,velocity_l2"),
    ], _run_sdnlb),
    "gibbs-sample": Command("gibbs-sample", "sample the truncated Gibbs measure", [
        Param("k", "int", 3, "odd degree (0: no reweighting)"), Param("N", "float", 1.0),
        Param("sampler", "str", "pcn", choices=("pcn", "independence")),
        Param("burn_in", "int", 2000), Param("pcn_beta", "float", 0.3), Param("samples", "int", 1000),
    ], _run_gibbs_sample),
    "invariance-test": Command("invariance-test", "check invariance of the truncated Gibbs measure", [
        Param("k", "int", 3), Param("N", "float", 1.0),
        Param("sampler", "str", "pcn", choices=("pcn", "independence")),
        Param("burn_in", "int", 2000), Param("pcn_beta", "float", 0.3),
        Param("dt", "float", 0.01), Param("T", "float", 1.0), Param("paths", "int", 10000),
        Param("levels", "int", 2, "step sizes dt, dt/2, ... (3 adds a weak-order estimate)"),
        Param("observables", "str", "", "comma separated (default: all)"),
    ], _run_invariance),
    "imethod-audit": Command("imethod-audit", "energy increment audit of the modified energy", [
        Param("M", "int", 18), Param("N", "float", 8.0, "I-operator cutoff"), Param("s", "float", 1.8),
        Param("dt", "float", 0.01), Param("T", "float", 1.0), Param("base_dt", "float", 0.0),
        Param("noise_cutoff", "float", 0.0), Param("noisy", "bool", True), Param("amplitude", "float", 1.0),
    ], _run_imethod_audit),
    "commutator-scaling": Command("commutator-scaling", "log-log slope of I-operator commutators", [
        Param("k", "int", 3), Param("s", "float", 1.8), Param("N_list", "ints", [8, 16, 32, 64]),
        Param("samples", "int", 4), Param("variant", "str", "C1", choices=("C1", "C2", "C3")),
        Param("band", "int", 0), Param("dim", "int", 2, choices=(2, 4)),
    ], _run_commutator),
    "strichartz-probe": Command("strichartz-probe", "Strichartz ratio across frequency cutoffs", [
        Param("p", "float", 4.0), Param("N_list", "ints", [4, 8, 16, 32]), Param("samples", "int", 50),
        Param("dim", "int", 2, choices=(2, 4)), Param("data", "str", "random", choices=("random", "dirichlet", "single")),
        Param("time_nodes", "int", 64),
    ], _run_strichartz),
    "variance-tables": Command("variance-tables", "renormalization variance sums as CSV", [
        Param("kind", "str", "alpha", choices=("alpha", "sigma")), Param("n_max", "int", 8),
        Param("times", "floats", [0.5, 1.0, 2.0]), Param("d", "int", 4),
    ], _run_variance_tables),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: validation: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wickbeam", description="Wick-ordered stochastic beam equations on the 4D torus")
    parser.add_argument("--version", action="version", version=f"wickbeam {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True
    for cmd in COMMANDS.values():
        sp = sub.add_parser(cmd.name, help=cmd.help, description=cmd.help)
        sp.add_argument("--config", help="INI config file or a resolved-config.json")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV} or ./runs, plus the subcommand)")
        sp.add_argument("--workers", type=int, default=None, help="FFT worker threads (default: logical cores)")
        sp.add_argument("--deterministic", action="store_true", help="omit wall time so reruns are byte identical")
        for prm in COMMON + cmd.params:
            flag = "--" + prm.name.replace("_", "-")
            extra = f" (default: {prm.default})"
            sp.add_argument(flag, dest=prm.name, default=None, help=(prm.help + extra).strip(),
                            choices=None, metavar=prm.kind.upper())
    return parser


def _load_config(path: str, cmd: Command) -> dict:
    fp = Path(path)
    if not fp.is_file():
        raise ValidationError(f"config file not found: {fp.resolve()}")
    known = {p.name for c in COMMANDS.values() for p in COMMON + c.params}
    mine = {p.name for p in COMMON + cmd.params}
    values = {}
    if fp.suffix == ".json":
        try:
            data = json.loads(fp.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {fp}: {exc}") from None
        if data.get("subcommand") not in (None, cmd.name):
            raise ValidationError(f"config file {fp} was written for {data.get('subcommand')!r}")
        items = data.get("params", {}).items()
    else:
        cp = configparser.ConfigParser()
        try:
            cp.read(fp, encoding="utf-8")
        except configparser.Error as exc:
            raise ValidationError(f"config file {fp}: {str(exc).splitlines()[0]}") from None
        items = [(k, v) for sec in cp.sections() for k, v in cp.items(sec)]
    for key, val in items:
        name = key.replace("-", "_")
        # INI keys are case-folded; map back to the declared parameter name.
        match = [p for p in known if p.lower() == name.lower()]
        if not match:
            raise ValidationError(f"config file {fp}: unknown key {key!r}")
        if match[0] in mine or (len(match) > 1 and any(m in mine for m in match)):
            values[[m for m in match if m in mine][0]] = val
    return values


def resolve(cmd: Command, ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into a parameter dict."""
    params = {p.name: p.default for p in COMMON + cmd.params}
    if ns.config:
        for k, v in _load_config(ns.config, cmd).items():
            params[k] = v
    for p in COMMON + cmd.params:
        flag = getattr(ns, p.name, None)
        if flag is not None:
            params[p.name] = flag
    spec = {p.name: p for p in COMMON + cmd.params}
    return {k: _parse_value(spec[k], v) for k, v in params.items()}


def _versions() -> dict:
    import scipy

    out = {"wickbeam": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__}
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:
        pass
    return out


def _output_dir(ns, cmd: Command) -> Path:
    if ns.out:
        return Path(ns.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / cmd.name


def main(argv=None) -> int:
    """Entry point; returns the exit status."""
    from .dynamics import BlowUpError

    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    cmd = COMMANDS[ns.command]
    out = None
    params = {}
    artifacts: list = []
    status, reason = EXIT_OK, None
    t0 = time.perf_counter()
    try:
        params = resolve(cmd, ns)
        workers = ns.workers if ns.workers is not None else (os.cpu_count() or 1)
        if workers < 1:
            raise ValidationError("--workers must be positive")
        spectral.FFT_WORKERS = workers
        out = _output_dir(ns, cmd)
        out.mkdir(parents=True, exist_ok=True)
        resolved = {"subcommand": cmd.name, "params": params, "schema": "wickbeam.resolved_config/1"}
        write_json(out / "resolved-config.json", resolved)
        t0 = time.perf_counter()
        with np.errstate(over="raise", invalid="raise"):
            artifacts = cmd.run(params, out)
    except (BlowUpError, spectral.PaddingError, FloatingPointError) as exc:
        status, reason = EXIT_NUMERICAL, f"numerical: {_one_line(exc)}"
    except (ValidationError, ValueError, OSError) as exc:
        status, reason = EXIT_VALIDATION, f"validation: {_one_line(exc)}"
    if out is not None and (out / "resolved-config.json").is_file():
        present = sorted(f.name for f in out.iterdir() if f.is_file() and f.name != "manifest.json")
        wall = None if ns.deterministic else time.perf_counter() - t0
        write_json(out / "manifest.json", {
            "subcommand": cmd.name, "seed": params.get("seed"), "versions": _versions(),
            "wall_time_s": wall, "deterministic": bool(ns.deterministic),
            "artifacts": sorted(set(artifacts) | {"resolved-config.json"}) if status == EXIT_OK else present,
            "exit_status": status, "error": reason, "schema": "wickbeam.manifest/1",
        })
    if reason is not None:
        print(f"error: {reason}", file=sys.stderr)
    return status


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
