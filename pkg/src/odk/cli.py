"""Command line scenario runner.

``odk run <scenario.json> [--out DIR] [--jobs N]``
    Build a trajectory from a model, generator, kernel or joint model and
    write CSV/JSON diagnostics.  Exit codes: 0 all checks pass, 1 input
    error, 2 a diagnostic verdict failed (e.g. complete positivity).
``odk check <file.json>``
    Classify a single map or generator and print JSON.
``odk list-models``
    Print the model registry.

The environment variable ``ODK_SEED`` overrides every scenario seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CPViolated, ODKError, ScenarioError
from .timegrid import TimeGrid

FMT = "%.12e"
KNOWN_DIAGNOSTICS = ("divisibility", "states", "witnesses", "rates")
CP_TOL = 1e-7

MODEL_HELP = {
    "pauli": "qubit Pauli channel from three rate functions (rates)",
    "weyl": "Weyl-covariant qudit channel (dim, rates)",
    "gpc-mub": "generalized Pauli channel over mutually unbiased bases (dim, rates)",
    "phase-covariant": "qubit phase-covariant map (omega, gamma_plus, gamma_minus, gamma_z, strict)",
    "ad-qubit": "qubit amplitude damping with a Lorentzian kernel (gamma, lambda, omega0)",
    "ad-multi": "multi-level amplitude damping (H_e, betas, gamma, lambda)",
    "dephasing-finite-env": "qubit dephasing by a qubit environment (g)",
    "dephasing-spin-boson": "Ohmic spin-boson dephasing (eta, omega_c, energies)",
    "dephasing-gaussian": "dephasing by Gaussian classical noise (energies, white)",
    "magnus-qubit": "two non-commuting qubit generators, second-order exponential (a1, a2)",
    "mix": "convex mixture of Pauli dephasing semigroups (weights)",
}


# ---------------------------------------------------------------------------
# parsing helpers

def parse_matrix(obj, path: str) -> np.ndarray:
    """Square complex matrix from JSON.

    Accepted forms: nested real lists, ``{"re": ..., "im": ...}``, or nested
    lists whose entries are ``[re, im]`` pairs.
    """
    try:
        if isinstance(obj, dict):
            re = np.asarray(obj["re"], dtype=float)
            im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
            M = re + 1j * im
        else:
            arr = np.asarray(obj, dtype=float)
            if arr.ndim == 3 and arr.shape[-1] == 2:
                M = arr[..., 0] + 1j * arr[..., 1]
            else:
                M = arr.astype(complex)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed matrix ({exc})", path) from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
        raise ScenarioError(f"expected a non-empty square matrix, got shape {M.shape}", path)
    if not np.all(np.isfinite(M)):
        raise ScenarioError("matrix has non-finite entries", path)
    return M


def _parse_rect(obj, path: str) -> np.ndarray:
    try:
        if isinstance(obj, dict):
            return np.asarray(obj["re"], float) + 1j * np.asarray(obj.get("im", 0.0), float)
        arr = np.asarray(obj, dtype=float)
        if arr.ndim == 3 and arr.shape[-1] == 2:
            return arr[..., 0] + 1j * arr[..., 1]
        return arr.astype(complex)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed matrix ({exc})", path) from None


def _require(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"missing field {key!r}", path)
    return d[key]


def _parse_grid(obj, path: str = "grid") -> TimeGrid:
    try:
        return TimeGrid(float(_require(obj, "t_end", path)), int(_require(obj, "n_steps", path)),
                        float(obj.get("t0", 0.0)))
    except ValueError as exc:
        raise ScenarioError(str(exc), path) from None


def _seed(scenario: dict) -> int:
    env = os.environ.get("ODK_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ScenarioError(f"ODK_SEED must be an integer, got {env!r}", "ODK_SEED") from None
    return int(scenario.get("seed", 0))


def load_scenarios(path) -> list[dict]:
    """Read a scenario file holding one scenario or ``{"scenarios": [...]}``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file ({exc.strerror})", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", f"{path}:line {exc.lineno}") from None
    items = data.get("scenarios", [data]) if isinstance(data, dict) else None
    if not isinstance(items, list):
        raise ScenarioError("scenario file must hold an object", str(path))
    for i, sc in enumerate(items):
        _validate(sc, f"scenarios[{i}]" if "scenarios" in data else "")
        sc.setdefault("_base", str(path.parent))
    return items


def _validate(sc: dict, prefix: str) -> None:
    def p(field):
        return f"{prefix}.{field}" if prefix else field

    if not isinstance(sc, dict):
        raise ScenarioError("scenario must be an object", prefix or "<root>")
    _require(sc, "name", prefix or "<root>")
    _parse_grid(_require(sc, "grid", prefix or "<root>"), p("grid"))
    src = _require(sc, "source", prefix or "<root>")
    kinds = [k for k in ("model", "generator", "kernel", "joint") if k in src]
    if len(kinds) != 1:
        raise ScenarioError("source needs exactly one of model, generator, kernel, joint", p("source"))
    for d in sc.get("diagnostics", []):
        if d not in KNOWN_DIAGNOSTICS:
            raise ScenarioError(f"unknown diagnostic {d!r}", p("diagnostics"))


# ---------------------------------------------------------------------------
# sources

def _generator_source(g: dict, path: str):
    from .generators import lindblad_super
    from .models import make_rate

    jumps = [parse_matrix(J, f"{path}.jumps[{i}]") for i, J in enumerate(_require(g, "jumps", path))]
    if not jumps:
        raise ScenarioError("at least one jump operator is required", f"{path}.jumps")
    d = jumps[0].shape[0]
    H = parse_matrix(g["H"], f"{path}.H") if "H" in g else np.zeros((d, d), complex)
    for i, J in enumerate(jumps):
        if J.shape != (d, d):
            raise ScenarioError("jump operator dimension mismatch", f"{path}.jumps[{i}]")
    raw = g.get("rates", [1.0] * len(jumps))
    if len(raw) != len(jumps):
        raise ScenarioError("one rate per jump operator is required", f"{path}.rates")
    try:
        rates = [make_rate(r) for r in raw]
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), f"{path}.rates") from None

    def L(t):
        return lindblad_super(H, jumps, [float(r(t)) for r in rates])

    return L, rates


def _kernel_source(k: dict, grid: TimeGrid, path: str):
    from .kernels import MemoryKernel, scalar_dephasing_kernel, solve_volterra
    from .models import make_rate

    kind = k.get("kind", "scalar-dephasing")
    if kind != "scalar-dephasing":
        raise ScenarioError(f"unknown kernel kind {kind!r}", f"{path}.kind")
    kappa = make_rate(k.get("kappa", 1.0))
    axis = str(k.get("axis", "Z")).upper()
    if axis not in ("X", "Y", "Z"):
        raise ScenarioError("axis must be X, Y or Z", f"{path}.axis")
    ker = scalar_dephasing_kernel(kappa, axis)
    if "singular" in k:
        L0, _ = _generator_source(k["singular"], f"{path}.singular")
        ker = MemoryKernel(ker.samples, L0(0.0), 2)
    return solve_volterra(ker, grid)


def build_trajectory(sc: dict, grid: TimeGrid | None = None):
    """Return ``(trajectory, extras)`` for a validated scenario."""
    from .dynamics import propagate

    grid = grid or _parse_grid(sc["grid"])
    src = sc["source"]
    extras: dict = {"verdicts": {}, "rates": None}
    if "model" in src:
        from .models import REGISTRY, build_model

        name = src["model"]
        if name not in REGISTRY:
            raise ScenarioError(f"unknown model {name!r}", "source.model")
        try:
            res = build_model(name, src.get("params", {}), grid)
        except (ValueError, TypeError, KeyError) as exc:
            raise ScenarioError(str(exc), "source.params") from None
        extras["verdicts"] = {k: bool(v) for k, v in res.verdicts.items()}
        rates = res.data.get("rates")
        if rates is not None and np.ndim(rates) == 2 and len(rates) == len(grid.times):
            extras["rates"] = np.asarray(rates, float)
        return res.trajectory, extras
    if "generator" in src:
        L, rates = _generator_source(src["generator"], "source.generator")
        extras["rates"] = np.array([[float(r(t)) for r in rates] for t in grid.times])
        return propagate(L, grid), extras
    if "kernel" in src:
        return _kernel_source(src["kernel"], grid, "source.kernel"), extras
    from .composite import JointModel, joint_reduce

    j = src["joint"]
    try:
        model = JointModel(int(_require(j, "dS", "source.joint")), int(_require(j, "dE", "source.joint")),
                           parse_matrix(_require(j, "H", "source.joint"), "source.joint.H"),
                           parse_matrix(_require(j, "rhoE", "source.joint"), "source.joint.rhoE"))
    except ValueError as exc:
        raise ScenarioError(str(exc), "source.joint") from None
    return joint_reduce(model, grid), extras


# ---------------------------------------------------------------------------
# output

def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v for v in row) + "\n")


def _trajectory_table(traj) -> tuple[list[str], np.ndarray]:
    D = traj.supers.shape[1]
    flat = traj.supers.reshape(len(traj), -1)
    header = ["t"]
    for i in range(D):
        for j in range(D):
            header += [f"S{i}_{j}_re", f"S{i}_{j}_im"]
    body = np.empty((len(traj), 1 + 2 * D * D))
    body[:, 0] = traj.times
    body[:, 1::2] = flat.real
    body[:, 2::2] = flat.imag
    return header, body


def _state(sc: dict, key: str, d: int, rng) -> np.ndarray:
    from .repcore import random_state

    if key in sc:
        return parse_matrix(sc[key], key)
    return random_state(d, rng)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def run_scenario(sc: dict, out_dir: str | Path | None = None, grid: TimeGrid | None = None) -> tuple[int, dict]:
    """Run one scenario; returns ``(exit_code, summary)`` and writes outputs if ``out_dir`` is set."""
    seed = _seed(sc)
    rng = np.random.default_rng(seed)
    summary: dict = {"name": sc["name"], "seed": seed}
    try:
        traj, extras = build_trajectory(sc, grid)
    except CPViolated as exc:
        summary.update(status="cp-violated", first_violation=exc.t_first, min_eig=exc.min_eig,
                       message=str(exc))
        return 2, summary
    failures = []
    cmin = traj.choi_min()
    bad = np.nonzero(cmin < -CP_TOL)[0]
    summary["choi_min"] = float(cmin.min())
    if bad.size:
        summary["first_violation"] = float(traj.times[bad[0]])
        failures.append(f"complete positivity fails at t={traj.times[bad[0]]:.6g}")
    verdicts = dict(extras["verdicts"])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        h, body = _trajectory_table(traj)
        _write_csv(out / "trajectory.csv", h, body)
    diags = sc.get("diagnostics", ["divisibility"])
    d = traj.dim
    if "divisibility" in diags and not bad.size:
        from .dynamics import divisibility_report

        opts = {k: sc.get("report", {})[k] for k in ("rate_tol", "mono_tol", "max_points") if k in sc.get("report", {})}
        rep = divisibility_report(traj, seed=seed, **opts)
        summary["divisibility"] = rep.as_dict()
        # closed-form model verdicts take precedence over finite-difference ones
        verdicts = {**rep.verdicts, **verdicts}
        if out is not None:
            k = rep.gammas.shape[1]
            tol = opts.get("rate_tol", 1e-7)
            with np.errstate(invalid="ignore"):
                cp_ok = np.where(np.isnan(rep.gammas[:, 0]), np.nan, (rep.gammas.real.min(axis=1) >= -tol) * 1.0)
                p_ok = np.where(np.isnan(rep.p_probe_min), np.nan, (rep.p_probe_min >= -tol) * 1.0)
            cols = [rep.times[:, None], rep.gammas.real, rep.g[:, None], rep.volume[:, None],
                    rep.sigma_min[:, None], rep.p_probe_min[:, None], cp_ok[:, None], p_ok[:, None]]
            # canonical rates are Kossakowski eigenvalues in ascending order
            header = (["t"] + [f"canonical_gamma_{i + 1}" for i in range(k)]
                      + ["g", "det", "sigma_min", "p_probe_min", "cp_ok", "p_ok"])
            _write_csv(out / "divisibility.csv", header, np.hstack(cols))
    if ("rates" in diags or "divisibility" in diags) and extras["rates"] is not None and out is not None:
        R = extras["rates"]
        header = ["t"] + [f"gamma_{i + 1}" for i in range(R.shape[1])]
        _write_csv(out / "rates.csv", header, np.column_stack([traj.times, R]))
    if "states" in diags or "witnesses" in diags:
        rho = _state(sc, "rho0", d, rng)
        sigma = _state(sc, "sigma0", d, rng)
        if "states" in diags and out is not None:
            ev = traj.evolve(rho).reshape(len(traj), -1)
            header = ["t"] + [f"rho{i}_{j}_{c}" for i in range(d) for j in range(d) for c in ("re", "im")]
            body = np.empty((len(traj), 1 + 2 * d * d))
            body[:, 0] = traj.times
            body[:, 1::2] = ev.real
            body[:, 2::2] = ev.imag
            _write_csv(out / "states.csv", header, body)
        if "witnesses" in diags and not bad.size:
            from .measures import monotone_series

            ser = monotone_series(traj, rho, sigma)
            names = list(ser)
            if out is not None:
                _write_csv(out / "witnesses.csv", ["t"] + names,
                           np.column_stack([traj.times] + [ser[n] for n in names]))
            summary["witness_max_increase"] = {n: float(np.max(np.diff(ser[n]), initial=0.0)) for n in names}
    summary["verdicts"] = verdicts
    for key, want in sc.get("expect", {}).items():
        if key not in verdicts:
            raise ScenarioError(f"verdict {key!r} is not produced by this scenario", f"expect.{key}")
        if bool(want) != verdicts[key]:
            failures.append(f"verdict {key} is {verdicts[key]}, expected {bool(want)}")
    summary["failures"] = failures
    summary["status"] = "ok" if not failures else "verdict-failure"
    if out is not None:
        with open(out / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_clean(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return (2 if failures else 0), summary


def _run_one(args):
    sc, out = args
    try:
        return run_scenario(sc, out)
    except ScenarioError as exc:
        return 1, {"name": sc.get("name"), "status": "input-error", "message": str(exc)}
    except ODKError as exc:
        return 2, {"name": sc.get("name"), "status": "error", "message": f"{type(exc).__name__}: {exc}"}


def cmd_run(path, out=None, jobs: int = 1) -> int:
    try:
        scenarios = load_scenarios(path)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    base = Path(out) if out else Path("odk-out")
    tasks = [(sc, base / sc["name"]) for sc in scenarios]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    code = 0
    for rc, summary in results:
        line = f"{summary.get('name')}: {summary.get('status')}"
        if "first_violation" in summary:
            line += f" (first violation at t={summary['first_violation']:.6g})"
        for msg in summary.get("failures", []):
            line += f"\n  {msg}"
        if "message" in summary:
            line += f"\n  {summary['message']}"
        print(line, file=sys.stderr if rc else sys.stdout)
        code = max(code, rc)
    if any(rc == 1 for rc, _ in results):
        return 1
    return code


# ---------------------------------------------------------------------------
# check

def check_object(data: dict) -> dict:
    """Classify the map or generator described by ``data``."""
    from .generators import classify_generator, lindblad_super, pauli_generator
    from .repcore import LinearMap, choi_to_super, classify, kraus_map, transpose_map

    kind = _require(data, "kind", "<root>")
    # repcore exchange format: {"kind": "super"|"choi"|"kraus", "re": ..., "im": ...}
    if kind in ("super", "choi"):
        data = {"kind": "map", kind: data.get("data", data)}
        kind = "map"
    elif kind == "kraus":
        data = {"kind": "map", "kraus": _require(data, "operators", "<root>")}
        kind = "map"
    if kind == "map":
        if "transpose" in data:
            m = transpose_map(int(data["transpose"]))
        elif "super" in data:
            m = LinearMap(parse_matrix(data["super"], "super"))
        elif "choi" in data:
            C = parse_matrix(data["choi"], "choi")
            d = int(round(np.sqrt(C.shape[0])))
            m = LinearMap(choi_to_super(C, d))
        elif "kraus" in data:
            m = kraus_map([_parse_rect(K, f"kraus[{i}]") for i, K in enumerate(data["kraus"])])
        else:
            raise ScenarioError("map needs one of transpose, super, choi, kraus", "<root>")
        return {"kind": "map", **classify(m).as_dict()}
    if kind == "generator":
        if "super" in data:
            S = parse_matrix(data["super"], "super")
        elif "pauli_rates" in data:
            S = pauli_generator([float(x) for x in data["pauli_rates"]])
        else:
            jumps = [parse_matrix(J, f"jumps[{i}]") for i, J in enumerate(_require(data, "jumps", "<root>"))]
            H = parse_matrix(data["H"], "H") if "H" in data else None
            S = lindblad_super(H, jumps, data.get("rates"))
        v = classify_generator(S).as_dict()
        v["kind"] = "generator"
        v["conditional_positivity_violated"] = v["conditionally_positive"]["certified_violation"]
        return v
    raise ScenarioError(f"unknown kind {kind!r}", "kind")


def cmd_check(path) -> int:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        res = check_object(data)
    except OSError as exc:
        print(f"error: cannot read {path} ({exc.strerror})", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: {path}:line {exc.lineno}: invalid JSON: {exc.msg}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ODKError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_clean(res), indent=2, sort_keys=True))
    return 0


def cmd_list_models() -> int:
    from .models import REGISTRY

    for name in sorted(REGISTRY):
        print(f"{name}\t{MODEL_HELP.get(name, '')}".rstrip())
    return 0


def shipped_scenarios() -> list[Path]:
    """Paths of the scenarios bundled with the package."""
    root = resources.files("odk") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if str(p).endswith(".json"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="odk", description="Quantum dynamical map toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="output directory (default ./odk-out)")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_check = sub.add_parser("check", help="classify a map or generator file")
    p_check.add_argument("file")
    sub.add_parser("list-models", help="list registered models")
    args = parser.parse_args(argv)
    if args.cmd == "run":
        return cmd_run(args.scenario, args.out, max(1, args.jobs))
    if args.cmd == "check":
        return cmd_check(args.file)
    return cmd_list_models()


if __name__ == "__main__":
    sys.exit(main())
