"""
Experiment configuration, run dispatch and persistence.

A run reads a JSON experiment config (validated against docs/config_schema.json),
dispatches to the numerical modules, writes CSV/JSON artifacts and a run record
with SHA-256 digests, and reports pass/fail per check. The exit status is 0
only when every enabled check passes.
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from jsonschema import Draft202012Validator

from lagrangian.barrier_ode import (
    BarrierFunction,
    Profile,
    RateFit,
    build_barrier_pair,
    fit_decay_rate,
    integrate_sub_profile,
    integrate_super_profile,
    make_barrier,
    quadratic_barrier,
    sample_points,
    verify_subsolution,
    verify_supersolution,
)
from lagrangian.dirichlet_fd import (
    GridSolution,
    build_grid,
    entire_limit_study,
    newton_solve,
    oracle_max_error,
    radial_reduction_solve,
    residual_certificate,
    sandwich_check,
    symmetry_defect,
)
from lagrangian.envelopes_implicit import (
    build_envelopes,
    canonical_phase_field,
    dh_dw_limit,
    h_zero_clamp,
    j_factor,
    solve_h,
    solve_H,
    solve_w_over,
    solve_w_under,
)
from lagrangian.errors import KindError, LmlError, SchemaError, exit_code_for
from lagrangian.phase_core import PhaseParams, m_of_a, phase_gradient, phase_value, supercritical_margin
from lagrangian.radial_nonexistence import RadialSolution, build_radial_phase, integrate_radial_profile, nonexistence_report
from utils.config import (
    NEWTON_CONFIG,
    OUTPUT_CONFIG,
    SAMPLING_CONFIG,
    SCHEMA_PATH,
    SCHEMA_VERSION,
    get_output_dir,
    get_thread_count,
)
from utils.file_handler import canonical_json, read_json, sha256_file, write_csv, write_json
from utils.version import get_environment_versions, get_features

logger = logging.getLogger(__name__)

MODES = tuple(sorted(get_features()))
FIT_TOLERANCE = 0.05
ORACLE_FACTOR = 20.0


# ============================================================================
# CONFIGURATION
# ============================================================================

def load_schema() -> Dict:
    return read_json(SCHEMA_PATH)


def _line_of(text: Optional[str], path: Sequence[Any]) -> Optional[int]:
    """Approximate 1-based line of a JSON path by scanning for its keys in order."""
    if not text:
        return None
    lines = text.splitlines()
    line = 0
    found = None
    for key in path:
        if not isinstance(key, str):
            continue
        needle = f'"{key}"'
        for k in range(line, len(lines)):
            if needle in lines[k]:
                line, found = k, k + 1
                break
    return found or 1


def validate_config(doc: Any, text: Optional[str] = None) -> None:
    """
    Validate a config document against the published schema.

    Raises:
        SchemaError: With one "line N: path: message" diagnostic per violation
    """
    validator = Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if not errors:
        return
    diagnostics = []
    for err in errors:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        line = _line_of(text, list(err.absolute_path))
        prefix = f"line {line}: " if line else ""
        diagnostics.append(f"{prefix}{path}: {err.message}")
    raise SchemaError(f"Configuration rejected with {len(diagnostics)} problem(s)", diagnostics)


@dataclass
class ExperimentConfig:
    mode: str
    params: Dict = field(default_factory=dict)
    envelope: Dict = field(default_factory=dict)
    solver: Dict = field(default_factory=dict)
    radial: Dict = field(default_factory=dict)
    compare: Dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: int = SAMPLING_CONFIG["seed"]
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, doc: Dict, text: Optional[str] = None) -> "ExperimentConfig":
        validate_config(doc, text)
        return cls(
            mode=doc["mode"],
            params=dict(doc.get("params", {})),
            envelope=dict(doc.get("envelope", {})),
            solver=dict(doc.get("solver", {})),
            radial=dict(doc.get("radial", {})),
            compare=dict(doc.get("compare", {})),
            output_dir=doc.get("output_dir"),
            seed=int(doc.get("seed", SAMPLING_CONFIG["seed"])),
            schema_version=doc["schema_version"],
        )

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        """
        Read and validate a JSON config file.

        Raises:
            FileNotFoundError: If the file does not exist
            SchemaError: If the file is not JSON or violates the schema
        """
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Config is not valid JSON: {path}", [f"line {e.lineno}: {e.msg}"]) from e
        return cls.from_dict(doc, text)

    def to_dict(self) -> Dict:
        doc = {"schema_version": self.schema_version, "mode": self.mode, "seed": self.seed}
        for key in ("params", "envelope", "solver", "radial", "compare"):
            if getattr(self, key):
                doc[key] = getattr(self, key)
        if self.output_dir:
            doc["output_dir"] = self.output_dir
        return doc

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical config without the output directory."""
        doc = self.to_dict()
        doc.pop("output_dir", None)
        return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()

    def betas(self) -> List[float]:
        return [float(b) for b in self.params.get("betas", [self.params["beta"]])]

    def phase_params(self, beta: Optional[float] = None) -> PhaseParams:
        beta = float(self.params["beta"] if beta is None else beta)
        g_inf = self.params.get("g_inf")
        if "matrix" in self.params:
            return PhaseParams.from_matrix(np.array(self.params["matrix"], dtype=float), beta, g_inf)
        return PhaseParams.diagonal(self.params["a"], beta, g_inf)


# ============================================================================
# RUN RECORDS
# ============================================================================

@dataclass
class RunRecord:
    mode: str
    config_hash: str
    config: Dict
    schema_version: str = SCHEMA_VERSION
    started: str = ""
    finished: str = ""
    versions: Dict = field(default_factory=dict)
    artifacts: Dict[str, Dict[str, str]] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)
    error: Optional[Dict] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.checks.values())

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return int(self.error.get("exit_code", 1))
        return 0 if self.passed else 1

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "config_hash": self.config_hash,
            "config": self.config,
            "schema_version": self.schema_version,
            "started": self.started,
            "finished": self.finished,
            "versions": self.versions,
            "artifacts": self.artifacts,
            "checks": self.checks,
            "summary": self.summary,
            "error": self.error,
            "passed": self.passed,
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> "RunRecord":
        try:
            return cls(
                mode=doc["mode"],
                config_hash=doc["config_hash"],
                config=doc.get("config", {}),
                schema_version=doc.get("schema_version", ""),
                started=doc.get("started", ""),
                finished=doc.get("finished", ""),
                versions=doc.get("versions", {}),
                artifacts=doc.get("artifacts", {}),
                checks=doc.get("checks", {}),
                summary=doc.get("summary", {}),
                error=doc.get("error"),
            )
        except KeyError as e:
            raise SchemaError(f"Run record is missing field {e}", [str(e)]) from e

    @classmethod
    def load(cls, path: str) -> "RunRecord":
        return cls.from_dict(read_json(path))


def verify_manifest(record: RunRecord, base_dir: str) -> List[str]:
    """Problems found when re-hashing the artifacts of a record; empty when all match."""
    problems = []
    for name, entry in sorted(record.artifacts.items()):
        path = os.path.join(base_dir, entry["path"])
        if not os.path.exists(path):
            problems.append(f"{name}: missing file {entry['path']}")
        elif sha256_file(path) != entry["sha256"]:
            problems.append(f"{name}: digest mismatch for {entry['path']}")
    return problems


# ============================================================================
# EXPORT
# ============================================================================

def _fit_frame(fit: RateFit) -> pd.DataFrame:
    doc = fit.to_dict()
    lo, hi = doc.pop("window")
    bounds = doc.pop("bounds") or (float("nan"), float("nan"))
    row = {"model": doc["model"], "exponent": doc["exponent"], "log_flag": doc["log_flag"], "r2": doc["r2"],
           "window_lo": lo, "window_hi": hi, "prefactor": doc["prefactor"], "intercept": doc["intercept"],
           "accepted": doc["accepted"], "bound_lo": bounds[0], "bound_hi": bounds[1]}
    return pd.DataFrame([row])


def export_csv(artifact: Any, path: str) -> str:
    """
    Write an artifact as CSV with 17 significant digits and LF endings.

    Column order per artifact kind:
        Profile: s, W, U
        BarrierFunction: s, W, U, r, u_r_e1
        GridSolution: x, y, z, u
        RadialSolution: r, W, u0, d
        RateFit: one row of model, exponent, log_flag, r2, window_lo,
            window_hi, prefactor, intercept, accepted, bound_lo, bound_hi

    Raises:
        KindError: For artifacts without a CSV form
        OSError: I/O failures are surfaced unchanged
    """
    if isinstance(artifact, pd.DataFrame):
        frame = artifact
    elif isinstance(artifact, RateFit):
        frame = _fit_frame(artifact)
    elif isinstance(artifact, (Profile, BarrierFunction, GridSolution, RadialSolution)):
        frame = artifact.to_frame()
    else:
        raise KindError(f"No CSV form for {type(artifact).__name__}")
    return write_csv(frame, path)


# ============================================================================
# COMPARISON
# ============================================================================

def _numeric_leaves(doc: Any, prefix: str = "") -> Dict[str, float]:
    out = {}
    if isinstance(doc, dict):
        for key in sorted(doc):
            if str(key).startswith("_"):
                continue
            out.update(_numeric_leaves(doc[key], f"{prefix}{key}/"))
    elif isinstance(doc, list):
        for k, v in enumerate(doc):
            out.update(_numeric_leaves(v, f"{prefix}{k}/"))
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        out[prefix.rstrip("/")] = float(doc)
    return out


def _tolerance_for(path: str, tolerances: Dict[str, float], default: float) -> float:
    """Longest configured prefix wins; keys may name any path segment."""
    best, best_len = default, -1
    parts = path.split("/")
    for key, tol in tolerances.items():
        if path.startswith(key) and len(key) > best_len:
            best, best_len = tol, len(key)
        elif key in parts and best_len < 0:
            best = tol
    return float(best)


def _convergence_table(summary_a: Dict, summary_b: Dict) -> List[Dict]:
    rows = []
    levels_a = {lvl["s_level"]: lvl for lvl in summary_a.get("levels", [])}
    for lvl_b in summary_b.get("levels", []):
        lvl_a = levels_a.get(lvl_b["s_level"])
        if lvl_a is None or lvl_a.get("oracle_error") is None or lvl_b.get("oracle_error") is None:
            continue
        ea, eb, ha, hb = lvl_a["oracle_error"], lvl_b["oracle_error"], lvl_a["h"], lvl_b["h"]
        factor = ea / eb if eb > 0 else float("inf")
        order = math.log(factor) / math.log(ha / hb) if eb > 0 and ea > 0 and ha != hb else float("nan")
        rows.append({"s_level": lvl_b["s_level"], "h_a": ha, "h_b": hb, "error_a": ea, "error_b": eb,
                     "factor": factor, "order": order})
    return rows


def compare_runs(record_a: RunRecord, record_b: RunRecord, tolerances: Optional[Dict[str, float]] = None) -> Dict:
    """
    Numeric differences between the summaries of two runs.

    Only differing leaves are listed; each carries the tolerance from the
    config's compare block (or the given mapping) and whether it holds.
    Dirichlet pairs with different h also get a convergence-factor table.

    Raises:
        SchemaError: If the modes or schema versions differ
    """
    if record_a.mode != record_b.mode:
        raise SchemaError("Runs have different modes", [f"{record_a.mode} != {record_b.mode}"])
    if record_a.schema_version != record_b.schema_version:
        raise SchemaError(
            "Runs have different schema versions",
            [f"{record_a.schema_version} != {record_b.schema_version}"],
        )
    compare_cfg = record_a.config.get("compare", {})
    tolerances = tolerances if tolerances is not None else compare_cfg.get("tolerances", {})
    default = float(compare_cfg.get("default_tolerance", 0.0))

    leaves_a = _numeric_leaves(record_a.summary)
    leaves_b = _numeric_leaves(record_b.summary)
    diffs = []
    for path in sorted(set(leaves_a) | set(leaves_b)):
        a, b = leaves_a.get(path), leaves_b.get(path)
        if a is not None and b is not None and (a == b or (math.isnan(a) and math.isnan(b))):
            continue
        if a is None or b is None:
            diffs.append({"path": path, "a": a, "b": b, "abs_diff": None, "tolerance": None, "ok": False})
            continue
        tol = _tolerance_for(path, tolerances, default)
        delta = abs(a - b)
        diffs.append({"path": path, "a": a, "b": b, "abs_diff": delta, "tolerance": tol, "ok": bool(delta <= tol)})

    report = {
        "mode": record_a.mode,
        "diffs": diffs,
        "within_tolerance": all(d["ok"] for d in diffs),
        "checks_a": record_a.passed,
        "checks_b": record_b.passed,
    }
    if record_a.mode == "dirichlet":
        report["convergence"] = _convergence_table(record_a.summary, record_b.summary)
    return report


# ============================================================================
# MODE RUNNERS
# ============================================================================

class _Artifacts:
    """Collects written artifacts and their digests, relative to the run directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.entries: Dict[str, Dict[str, str]] = {}

    def _add(self, name: str, path: str) -> str:
        self.entries[name] = {"path": os.path.relpath(path, self.out_dir), "sha256": sha256_file(path)}
        return path

    def csv(self, name: str, artifact: Any) -> str:
        return self._add(name, export_csv(artifact, os.path.join(self.out_dir, f"{name}.csv")))

    def json(self, name: str, doc: Any) -> str:
        return self._add(name, write_json(doc, os.path.join(self.out_dir, f"{name}.json")))

    def dump(self, name: str, solution: GridSolution) -> str:
        return self._add(name, solution.dump(os.path.join(self.out_dir, f"{name}.bin")))


def _parallel(fn: Callable, items: Sequence, threads: int) -> List:
    """Map fn over items on a thread pool, returning results in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    results = {}
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(fn, item): idx for idx, item in enumerate(items)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[idx] for idx in sorted(results)]


def _tag(value: float) -> str:
    return f"{value:g}".replace(".", "p")


def _run_selfcheck(config: ExperimentConfig, artifacts: _Artifacts, threads: int) -> Tuple[Dict, Dict]:
    checks = {}
    rng = np.random.default_rng(config.seed)
    checks["phase_identity_3"] = abs(phase_value(np.eye(3)) - 3 * math.pi / 4) <= 1e-14
    checks["phase_diag_123"] = abs(phase_value(np.diag([1.0, 2.0, 3.0])) - math.pi) <= 1e-12
    checks["phase_zero"] = phase_value(np.zeros((3, 3))) == 0.0
    checks["gradient_identity_2"] = bool(np.allclose(phase_gradient(np.eye(2)).entries, 0.5 * np.eye(2), atol=1e-14))
    checks["m_of_a_ones"] = abs(m_of_a((1.0, 1.0, 1.0)) - 1.5) <= 1e-14
    checks["m_of_a_isotropic"] = all(
        abs(m_of_a((t, t, t)) - 1.5) <= 1e-12 for t in np.geomspace(0.1, 10.0, 10)
    )
    checks["m_of_a_123"] = abs(m_of_a((1.0, 2.0, 3.0)) - 0.4) <= 1e-14
    checks["supercritical_margin"] = abs(supercritical_margin(3, 3 * math.pi / 4) - math.pi / 4) <= 1e-15
    samples = [(np.sort(rng.uniform(0.2, 5.0, 3)), rng.uniform(0.1, 5.0)) for _ in range(100)]
    checks["j_factor_zero"] = all(abs(j_factor(a, w, 0.0)) <= 1e-14 for a, w in samples)
    checks["j_factor_value"] = abs(j_factor((1.0, 1.0, 1.0), 1.0, 0.25) - ((3 + 2 * math.sqrt(2)) * 0.75 - 1)) <= 1e-12
    checks["h_zero_clamp"] = (h_zero_clamp(-0.5), h_zero_clamp(0.0), h_zero_clamp(0.3)) == (0.0, 0.0, 0.3)

    iso = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    flat = build_envelopes(iso, 0.0)
    checks["w_constant_envelope"] = abs(solve_w_under(flat, iso.a, 5.0) - 1.0) <= 1e-12 and abs(
        solve_w_over(flat, iso.a, 5.0) - 1.0
    ) <= 1e-12
    checks["h_at_fixed_point"] = abs(solve_h(flat, iso.a, 0.0, 1.0) - 1.0) <= 1e-12
    checks["H_at_fixed_point"] = abs(solve_H(flat, iso.a, 0.0, 1.0)) <= 1e-14
    checks["dh_dw_limit_ones"] = abs(dh_dw_limit((1.0, 1.0, 1.0)) + 2.0) <= 1e-14

    artifacts.json("selfcheck", {"checks": checks})
    return checks, {"identities": len(checks)}


def _barrier_study(config: ExperimentConfig, beta: float) -> Dict:
    params = config.phase_params(beta)
    envelope = build_envelopes(params, config.envelope["c"], config.envelope.get("sign", "two_sided"))
    expected = min(params.m_of_a, beta / 2.0)
    expect_log = abs(params.m_of_a - beta / 2.0) < 0.05
    solver = config.solver
    out = {"beta": beta, "params": params, "envelope": envelope, "expected": expected, "profiles": {},
           "fits": {}, "barriers": {}, "verify": {}}
    builders = {"sub": (integrate_sub_profile, envelope.upper_constant),
                "super": (integrate_super_profile, envelope.lower_constant)}
    for kind, (integrate, constant_side) in builders.items():
        if constant_side:
            barrier = quadratic_barrier(params, envelope, kind)
            out["profiles"][kind] = barrier.profile
            out["barriers"][kind] = barrier
            continue
        profile = integrate(envelope, params.a, rtol=solver.get("rtol"), atol=solver.get("atol"))
        out["profiles"][kind] = profile
        out["fits"][kind] = fit_decay_rate(profile, beta, params.m_of_a)
        if params.m_of_a > 1.0 and beta > 2.0:
            out["barriers"][kind] = make_barrier(profile, params, envelope)

    pts = sample_points(params.n, count=solver.get("n_samples"), seed=config.seed)
    verifiers = {"sub": verify_subsolution, "super": verify_supersolution}
    for kind, barrier in out["barriers"].items():
        out["verify"][kind] = verifiers[kind](barrier, pts)
    out["expect_log"] = expect_log
    return out


def _run_barriers(config: ExperimentConfig, artifacts: _Artifacts, threads: int) -> Tuple[Dict, Dict]:
    studies = _parallel(lambda b: _barrier_study(config, b), config.betas(), threads)
    checks, summary = {}, {"betas": []}
    for study in studies:
        tag = f"beta{_tag(study['beta'])}"
        entry = {"beta": study["beta"], "m_of_a": study["params"].m_of_a, "expected_exponent": study["expected"],
                 "envelope": study["envelope"].to_dict(), "fits": {}, "constants": {}, "verify": {}}
        for kind, profile in study["profiles"].items():
            barrier = study["barriers"].get(kind)
            artifacts.csv(f"profile_{kind}_{tag}", barrier if barrier is not None else profile)
            checks[f"{tag}:{kind}:terminal"] = profile.terminal_gap() < 1e-6
        for kind, fit in study["fits"].items():
            artifacts.csv(f"fit_{kind}_{tag}", fit)
            entry["fits"][kind] = fit.to_dict()
            checks[f"{tag}:{kind}:exponent"] = abs(fit.exponent - study["expected"]) <= FIT_TOLERANCE
            checks[f"{tag}:{kind}:log_model"] = fit.log_flag == study["expect_log"]
        for kind, barrier in study["barriers"].items():
            entry["constants"][kind] = barrier.C
        for kind, report in study["verify"].items():
            entry["verify"][kind] = report.to_dict()
            checks[f"{tag}:{kind}:verify"] = report.passed
        artifacts.json(f"barriers_{tag}", entry)
        summary["betas"].append(entry)
    return checks, summary


def _run_dirichlet(config: ExperimentConfig, artifacts: _Artifacts, threads: int) -> Tuple[Dict, Dict]:
    params = config.phase_params()
    c = float(config.envelope.get("c", 0.0))
    sign = config.envelope.get("sign", "two_sided")
    g = canonical_phase_field(params, c, sign)
    envelope = build_envelopes(params, c, sign)
    solver = config.solver
    h = float(solver["h"])
    tol = float(solver.get("tolerance", NEWTON_CONFIG["tolerance"]))

    pair = None
    if c == 0.0 or (params.m_of_a > 1.0 and params.beta > 2.0):
        pair = build_barrier_pair(params, envelope)

    checks, levels = {}, []
    for s_level in solver["s_levels"]:
        tag = f"s{_tag(s_level)}"
        grid = build_grid(params, s_level, h)
        sol = newton_solve(grid, g, tol=tol, max_iter=solver.get("max_iterations"), backend=solver.get("backend"))
        residual = residual_certificate(sol, g)
        entry = {"s_level": float(s_level), "h": h, "nodes": grid.size, "iterations": sol.iterations,
                 "residual": residual, "residual_history": sol.history, "oracle_error": None}
        checks[f"{tag}:residual"] = residual <= tol
        if c == 0.0:
            entry["quadratic_error"] = float(np.max(np.abs(sol.deviation())))
            checks[f"{tag}:quadratic"] = entry["quadratic_error"] <= 1e-10
        if params.is_isotropic:
            oracle = radial_reduction_solve(params, g, s_level)
            entry["oracle_error"] = oracle_max_error(sol, oracle)
            entry["symmetry_defect"] = symmetry_defect(sol)
            checks[f"{tag}:oracle"] = entry["oracle_error"] <= ORACLE_FACTOR * h * h
        if pair is not None:
            sandwich = sandwich_check(sol, *pair)
            entry["sandwich"] = sandwich.to_dict()
            checks[f"{tag}:sandwich"] = sandwich.passed
        artifacts.csv(f"grid_{tag}", sol)
        artifacts.dump(f"grid_{tag}", sol)
        levels.append(entry)

    summary = {"levels": levels, "params": params.to_dict(), "c": c, "sign": sign}
    if pair is not None:
        summary["C1"] = max(lvl["sandwich"]["C1"] for lvl in levels)
    artifacts.json("dirichlet_summary", summary)
    return checks, summary


def _run_limit_study(config: ExperimentConfig, artifacts: _Artifacts, threads: int) -> Tuple[Dict, Dict]:
    params = config.phase_params()
    g = canonical_phase_field(params, config.envelope["c"], config.envelope.get("sign", "two_sided"))
    solver = config.solver
    report = entire_limit_study(params, g, solver["s_levels"], solver["probe_radii"], float(solver["h"]))
    checks = {"cauchy_monotone": report["monotone"]}
    if "far_field" in report:
        checks["far_field_rate"] = report["far_field"]["ok"]
    artifacts.json("limit_study", report)
    return checks, report


def _nonexistence_study(config: ExperimentConfig, beta: float):
    rad = config.radial
    phase = build_radial_phase(int(rad["n"]), float(rad["G0"]), float(rad["G_inf"]), beta)
    sol = integrate_radial_profile(phase)
    return beta, sol, nonexistence_report(phase, sol)


def _run_nonexistence(config: ExperimentConfig, artifacts: _Artifacts, threads: int) -> Tuple[Dict, Dict]:
    betas = [float(b) for b in config.radial["betas"]]
    studies = _parallel(lambda b: _nonexistence_study(config, b), betas, threads)
    checks, summary = {}, {"betas": []}
    for beta, sol, report in studies:
        tag = f"beta{_tag(beta)}"
        artifacts.csv(f"radial_{tag}", sol)
        artifacts.json(f"nonexistence_{tag}", report.to_dict())
        summary["betas"].append({"beta": beta, "verdict": report.verdict, "growth": report.growth,
                                 "details": report.details})
        if beta > 2.0:
            checks[f"{tag}:convergent"] = report.verdict == "outside theorem scope; convergent"
            continue
        checks[f"{tag}:certified"] = report.verdict.endswith("nonexistence certified numerically")
        if beta == 2.0:
            ratio = report.details["growth_ratio_offset_removed"]
            expected = report.details["expected_log_ratio"]
            checks[f"{tag}:log_ratio"] = abs(ratio - expected) <= 0.05 * expected
        else:
            checks[f"{tag}:power_exponent"] = abs(report.growth["exponent"] - (2.0 - beta)) <= 0.1
    return checks, summary


RUNNERS = {
    "selfcheck": _run_selfcheck,
    "barriers": _run_barriers,
    "dirichlet": _run_dirichlet,
    "limit_study": _run_limit_study,
    "nonexistence": _run_nonexistence,
}


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def run(config: ExperimentConfig, out_dir: Optional[str] = None, threads: Optional[int] = None) -> RunRecord:
    """
    Dispatch a validated config and persist its artifacts and run record.

    Numerical failures do not propagate: they are written to error_report.json
    and reflected in RunRecord.error and its exit code.
    """
    out_dir = out_dir or config.output_dir or get_output_dir()
    threads = threads or get_thread_count()
    os.makedirs(out_dir, exist_ok=True)
    record = RunRecord(config.mode, config.config_hash, config.to_dict(), config.schema_version,
                       started=_now(), versions=get_environment_versions())
    artifacts = _Artifacts(out_dir)
    logger.info(f"Starting {config.mode} run {record.config_hash[:12]} into {out_dir} ({threads} thread(s))")

    try:
        checks, summary = RUNNERS[config.mode](config, artifacts, threads)
        record.checks = {k: bool(v) for k, v in checks.items()}
        record.summary = summary
    except LmlError as e:
        logger.error(f"{config.mode} run failed: {type(e).__name__}: {e}")
        error = {"type": type(e).__name__, "message": str(e), "exit_code": exit_code_for(e)}
        for attr in ("residual_history", "last_t", "last_state", "diagnostics"):
            if hasattr(e, attr):
                error[attr] = getattr(e, attr)
        report_path = write_json(error, os.path.join(out_dir, "error_report.json"))
        error["report"] = os.path.relpath(report_path, out_dir)
        record.error = error

    record.artifacts = artifacts.entries
    write_json({"mode": config.mode, "checks": record.checks, "summary": record.summary, "error": record.error},
               os.path.join(out_dir, OUTPUT_CONFIG["summary"]))
    record.finished = _now()
    write_json(record.to_dict(), os.path.join(out_dir, OUTPUT_CONFIG["run_record"]))
    failed = [k for k, v in record.checks.items() if not v]
    if failed:
        logger.warning(f"{len(failed)} check(s) failed: {failed}")
    logger.info(f"Run finished with exit code {record.exit_code}")
    return record
