from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from app.config import settings
from app.application import catalog
from app.application.ports import ArtifactSinkPort, ResultCachePort, TableSourcePort
from app.application.services import sweeps
from app.domain.circlemap import PRECISION_LIMIT
from app.domain.errors import RotnumError, UsageError
from app.domain.modulus import LemmaReport, ModulusReport
from app.domain.streams import MASK64

logger = logging.getLogger(__name__)

COMMANDS = ("rotnum", "ids", "compare", "modulus", "lemmas", "craig-simon")
FAMILY_COMMANDS = ("rotnum", "modulus", "lemmas")
MODEL_COMMANDS = ("ids", "compare", "craig-simon")
GRID_COMMANDS = ("rotnum", "ids", "compare", "modulus", "craig-simon")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2

# (max − min)/step 가 정수인지 볼 때의 허용 오차
GRID_TOL = 1e-9

CSV_SCHEMAS = {
    "rotnum": ["a", "rho", "error_radius", "n", "seed"],
    "ids": ["E", "N", "method", "n", "seed"],
    "compare": ["E", "N_eigencount", "N_rotation", "abs_gap", "seed"],
    "modulus": ["a", "a2", "drho", "product", "allowance", "certified", "ok"],
    "craig-simon": ["E", "E2", "dN", "product", "allowance", "certified", "ok"],
    "lemmas": [
        "a", "a2", "seed", "step_min_margin", "corollary_min_margin",
        "segment_verdict", "segment_min_margin", "crossings",
    ],
}


# ===== RunConfig =====

class GridSpec(BaseModel):
    """min:max:step. min 포함, (max−min)/step 가 1e-9 안에서 정수면 max도 포함."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    min: float
    max: float
    step: float

    @model_validator(mode="after")
    def _check(self) -> "GridSpec":
        if not all(math.isfinite(v) for v in (self.min, self.max, self.step)):
            raise ValueError("--grid values must be finite")
        if self.step <= 0:
            raise ValueError(f"--grid step must be > 0, got {self.step}")
        if self.max < self.min:
            raise ValueError(f"--grid max must be >= min, got {self.min}:{self.max}")
        return self

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = str(text).split(":")
        if len(parts) != 3:
            raise UsageError(f"--grid expects min:max:step, got {text!r}", token=str(text))
        try:
            lo, hi, step = (float(p) for p in parts)
        except ValueError:
            raise UsageError(f"--grid has a malformed number: {text!r}", token=str(text)) from None
        try:
            return cls(min=lo, max=hi, step=step)
        except ValidationError as e:
            raise UsageError(_first_message(e), token=str(text)) from None

    def points(self) -> np.ndarray:
        count = (self.max - self.min) / self.step
        k = int(round(count))
        if abs(count - k) > GRID_TOL:
            k = int(math.floor(count))
            return self.min + self.step * np.arange(k + 1)
        pts = self.min + self.step * np.arange(k + 1)
        pts[-1] = self.max
        return pts

    def render(self) -> str:
        return f"{self.min!r}:{self.max!r}:{self.step!r}"


class RunConfig(BaseModel):
    """
    CLI 한 번 실행의 설정. 파일(--config, 평평한 JSON 객체)과 플래그를 합친 결과.
    JSON 산출물에 그대로 들어간다.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["rotnum", "ids", "compare", "modulus", "lemmas", "craig-simon"]
    family: Optional[str] = None
    model: Optional[str] = None
    grid: Optional[GridSpec] = None
    n: int = 1000
    n_rotation: Optional[int] = None
    seed: int = 0
    seeds: int = 1
    threads: Optional[int] = None
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    method: Literal["eigencount", "rotation", "both"] = "both"
    a: Optional[float] = None
    a2: Optional[float] = None
    e_ref: Optional[float] = None
    x0: float = 0.0
    coupling: float = 1.0
    alpha: Optional[float] = None
    kappa: float = 0.1
    base: str = "rotation"
    table: Optional[str] = None
    j_max: Optional[int] = None

    @field_validator("grid", mode="before")
    @classmethod
    def _grid(cls, v: Any) -> Any:
        if isinstance(v, str):
            g = GridSpec.parse(v)
            return {"min": g.min, "max": g.max, "step": g.step}
        return v

    @field_validator("n", "seeds")
    @classmethod
    def _positive(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"--{info.field_name.replace('_', '-')} must be >= 1, got {v}")
        return v

    @field_validator("n_rotation", "threads")
    @classmethod
    def _positive_opt(cls, v: Optional[int], info) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"--{info.field_name.replace('_', '-')} must be >= 1, got {v}")
        return v

    @field_validator("j_max")
    @classmethod
    def _j_max(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 0:
            raise ValueError(f"--j-max must be >= 0, got {v}")
        return v

    @field_validator("x0")
    @classmethod
    def _x0(cls, v: float) -> float:
        if not math.isfinite(v) or abs(v) > PRECISION_LIMIT:
            raise ValueError(f"--x0 must be finite with |x0| <= 2**52, got {v!r}")
        return v

    @field_validator("seed")
    @classmethod
    def _seed(cls, v: int) -> int:
        if not 0 <= v <= MASK64:
            raise ValueError(f"--seed must fit in 64 bits, got {v}")
        return v

    @field_validator("out")
    @classmethod
    def _out(cls, v: Optional[str]) -> Optional[str]:
        if v is None or v == "-":
            return v
        parent = Path(v).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise ValueError(f"--out directory is not writable: {parent}")
        return v

    @model_validator(mode="after")
    def _requirements(self) -> "RunConfig":
        cmd = self.command
        if self.family is not None and self.model is not None:
            raise ValueError("--family and --model are mutually exclusive")
        if cmd in FAMILY_COMMANDS and self.family is None:
            raise ValueError(f"--family is required for {cmd}")
        if cmd in MODEL_COMMANDS and self.model is None:
            raise ValueError(f"--model is required for {cmd}")
        if cmd in GRID_COMMANDS and self.grid is None:
            raise ValueError(f"--grid is required for {cmd}")
        if cmd == "lemmas" and (self.a is None or self.a2 is None):
            raise ValueError("--a and --a2 are required for lemmas")
        if self.family == "tabulated" and self.table is None:
            raise ValueError("--table is required for family tabulated")
        return self

    def seed_list(self) -> List[int]:
        return [(self.seed + k) & MASK64 for k in range(self.seeds)]


# ===== parse_config =====

class _Parser(argparse.ArgumentParser):
    """argparse 에러를 UsageError로 바꿔서 exit code 규칙(1)을 지킨다."""

    def error(self, message: str):  # type: ignore[override]
        m = re.search(r"(--[a-z0-9-]+)", message)
        raise UsageError(message, token=m.group(1) if m else None)


def _help_epilog() -> str:
    lines = ["CSV columns per command:"]
    for cmd, cols in CSV_SCHEMAS.items():
        lines.append(f"  {cmd:12s} {','.join(cols)}")
    lines.append("")
    lines.append(f"families: {', '.join(catalog.family_names())}")
    lines.append(f"models:   {', '.join(catalog.model_names())}")
    lines.append("exit codes: 0 success, 1 error, 2 certificate violation / failed lemma check")
    lines.append("env: ROTNUM_LOG=DEBUG|INFO|WARNING|ERROR")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="rotnum",
        description="Rotation numbers of circle cocycles, log-Hoelder certificates and Schroedinger IDS.",
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("command", choices=COMMANDS)
    fm = p.add_mutually_exclusive_group()
    fm.add_argument("--family", help="cocycle family (rotnum/modulus/lemmas)")
    fm.add_argument("--model", help="potential model (ids/compare/craig-simon)")
    p.add_argument("--grid", help="min:max:step")
    p.add_argument("--n", type=int, help="iteration count / matrix size")
    p.add_argument("--n-rotation", type=int, dest="n_rotation", help="fiber steps of the rotation route (compare)")
    p.add_argument("--seed", type=int, help="64-bit seed")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds (compare/lemmas)")
    p.add_argument("--threads", type=int, help="worker pool width (default: logical cores)")
    p.add_argument("--out", help="output path ('-' = stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--config", help="flat JSON key/value file; flags override it")
    p.add_argument("--method", choices=("eigencount", "rotation", "both"))
    p.add_argument("--a", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--e-ref", type=float, dest="e_ref")
    p.add_argument("--x0", type=float)
    p.add_argument("--coupling", type=float, help="lambda (or Cauchy scale for lloyd)")
    p.add_argument("--alpha", type=float, help="rotation frequency")
    p.add_argument("--kappa", type=float, help="sine-perturbed amplitude")
    p.add_argument("--base", choices=catalog.BASES, help="base system of circle-map families")
    p.add_argument("--table", help="table file for family tabulated ('a x h' per line)")
    p.add_argument("--j-max", type=int, dest="j_max")
    return p


def _value_flags(parser: argparse.ArgumentParser) -> Dict[str, argparse.Action]:
    return {opt: act for act in parser._actions for opt in act.option_strings if act.nargs != 0}


def _normalize_argv(parser: argparse.ArgumentParser, argv: Sequence[str]) -> List[str]:
    """
    - "--grid -2:2:0.5" 처럼 '-'로 시작하는 값을 "--grid=-2:2:0.5"로 붙인다
    - 같은 플래그가 두 번 나오면 UsageError
    """
    flags = _value_flags(parser)
    known = {opt for act in parser._actions for opt in act.option_strings}
    out: List[str] = []
    seen = set()
    i = 0
    while i < len(argv):
        tok = argv[i]
        name = tok.split("=", 1)[0]
        if name in known:
            dest = parser._option_string_actions[name].dest
            if dest in seen:
                raise UsageError(f"flag {name} given more than once", token=name)
            seen.add(dest)
        if tok in flags and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1] not in known:
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _load_config_file(path: str) -> Dict[str, Any]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}", token=str(path))
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"config file is not valid JSON: {e}", token=str(path)) from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a flat key/value object", token=str(path))

    fields = set(RunConfig.model_fields) - {"command"}
    out: Dict[str, Any] = {}
    for k, v in doc.items():
        key = str(k).replace("-", "_")
        if key not in fields:
            raise UsageError(f"unknown config key {k!r}", token=str(k))
        if isinstance(v, (dict, list)):
            raise UsageError(f"config key {k!r} must be a scalar", token=str(k))
        out[key] = v
    return out


def _first_message(e: ValidationError) -> str:
    err = e.errors()[0]
    msg = str(err.get("msg", "invalid value"))
    # pydantic이 붙이는 "Value error, " 접두어 제거
    return msg.split("Value error, ", 1)[-1]


def _token_of(e: ValidationError) -> Optional[str]:
    err = e.errors()[0]
    m = re.search(r"(--[a-z0-9-]+)", str(err.get("msg", "")))
    if m:
        return m.group(1)
    loc = [str(x) for x in err.get("loc", ()) if isinstance(x, str)]
    return f"--{loc[0].replace('_', '-')}" if loc else None


def parse_config(argv: Sequence[str], config_file: Optional[str] = None) -> RunConfig:
    """
    argv(+선택 config 파일) → RunConfig.
    우선순위: 플래그 > 파일 > 기본값. 문제는 모두 UsageError(문제 토큰 포함).
    """
    parser = build_parser()
    args = vars(parser.parse_args(_normalize_argv(parser, list(argv))))

    path = args.pop("config", None) or config_file
    merged: Dict[str, Any] = _load_config_file(path) if path else {}
    merged.update(args)

    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise UsageError(_first_message(e), token=_token_of(e)) from None


# ===== run =====

@dataclass(frozen=True)
class CliDeps:
    """
    CLI가 필요한 의존성 묶음(조립은 main.py에서).
    - entrypoints는 '호출'만 하고, 구현체 생성/결정은 main이 한다.
    """
    sink: ArtifactSinkPort
    cache: Optional[ResultCachePort]
    table_source: Callable[[str], TableSourcePort]


def _family(config: RunConfig, deps: CliDeps, seed: int, interval):
    table = deps.table_source(config.table) if config.table else None
    return catalog.build_family(
        config.family,
        interval,
        base=config.base,
        seed=seed,
        alpha=config.alpha,
        kappa=config.kappa,
        coupling=config.coupling,
        table=table,
    )


def _model(config: RunConfig, seed: int):
    return catalog.build_model(config.model, config.coupling, seed, config.alpha)


def _summary_path(out: str) -> str:
    return str(Path(out).with_suffix(".txt"))


def _emit_summary(config: RunConfig, deps: CliDeps, text: str) -> None:
    if config.out and config.out != "-":
        deps.sink.write_text(_summary_path(config.out), text)
    else:
        print(text, file=sys.stderr)


def _provenance(config: RunConfig) -> Dict[str, Any]:
    d = config.model_dump(mode="json")
    if config.grid is not None:
        d["grid"] = config.grid.render()
    return d


def _report_doc(report: ModulusReport) -> Dict[str, Any]:
    return {
        "verdict": report.verdict,
        "quantity": report.quantity,
        "factor": report.factor,
        "observed_sup": report.observed_sup,
        "distant_sup": report.distant_sup,
        "R": report.R,
        "R_allowance": report.R_allowance,
        "bound": report.bound,
        "C": report.C,
        "threshold": report.threshold,
        "n": report.n,
        "delta_form_ok": report.delta_form_ok,
        "diagnostic": report.diagnostic,
        "family": report.family,
        "grid": report.grid,
        "omega0": report.omega0,
        "seed": report.seed,
        "pairs": [
            {
                "a": p.a, "a2": p.a2, "d": p.drho, "product": p.product,
                "allowance": p.allowance, "certified": p.certified, "ok": p.ok,
            }
            for p in report.pairs
        ],
    }


def _lemma_doc(r: LemmaReport) -> Dict[str, Any]:
    seg = r.segment
    return {
        "a": r.a,
        "a2": r.a2,
        "n": r.n,
        "seed": r.seed,
        "passed": r.passed,
        "R": r.R,
        "step": {
            "passed": r.step.passed,
            "min_margin": r.step.min_margin,
            "worst": {"n": r.step.worst[0], "j": r.step.worst[1]},
            "corollary_passed": r.step.corollary_passed,
            "corollary_min_margin": r.step.corollary_min_margin,
            "delta": r.step.delta,
            "swapped": r.step.swapped,
            "j_range": list(r.step.j_range),
        },
        "segment": {
            "verdict": seg.verdict,
            "min_margin": seg.min_margin,
            "threshold": seg.threshold,
            "crossing_rate": seg.crossing_rate,
            "diagnostic": seg.diagnostic,
            "segments": [
                {"j": s.j, "n_start": s.n_start, "n_end": s.n_end, "log_sum": s.log_sum, "margin": s.margin}
                for s in seg.segments
            ],
        },
        "crossings": [
            {"j": c.j, "n_j": c.n_j, "segment_log_sum": c.segment_log_sum} for c in r.crossings.records
        ],
        "crossing_diagnostic": r.crossings.diagnostic,
        "family": r.family,
    }


def _run_rotnum(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    grid = config.grid.points()
    fam = _family(config, deps, config.seed, (config.grid.min, float(grid[-1])))
    res = sweeps.run_rotnum(
        family=fam, grid=grid, n=config.n, seed=config.seed, x0=config.x0, threads=threads, cache=deps.cache
    )
    c = res.curve
    if config.format == "csv":
        rows = [(a, v, r, c.n, config.seed) for a, v, r in zip(c.parameters, c.values, c.error_radii)]
        deps.sink.write_csv(out, CSV_SCHEMAS["rotnum"], rows)
    else:
        deps.sink.write_json(out, {
            "command": "rotnum",
            "config": _provenance(config),
            "family": c.family,
            "omega0": c.omega0,
            "x0": c.x0,
            "n": c.n,
            "seed": config.seed,
            "rotation_scale": c.rotation_scale,
            "points": [
                {"a": a, "rho": v, "error_radius": r}
                for a, v, r in zip(c.parameters, c.values, c.error_radii)
            ],
            "locked_intervals": [
                {"a_start": s, "a_end": e, "rho": v} for s, e, v in res.plateaus
            ],
        })
    return EXIT_OK


def _curve_points(curve) -> List[Dict[str, Any]]:
    pts = []
    for i, (e, v) in enumerate(zip(curve.energies, curve.values)):
        p: Dict[str, Any] = {"E": e, "N": v}
        if curve.error_radii is not None:
            p["error_radius"] = curve.error_radii[i]
        pts.append(p)
    return pts


def _run_ids(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    model = _model(config, config.seed)
    res = sweeps.run_ids(
        model=model, grid=config.grid.points(), n=config.n, seed=config.seed,
        method=config.method, e_ref=config.e_ref, threads=threads, cache=deps.cache,
    )
    if config.format == "csv":
        rows = [
            (e, v, c.method, c.n, config.seed)
            for c in res.curves
            for e, v in zip(c.energies, c.values)
        ]
        deps.sink.write_csv(out, CSV_SCHEMAS["ids"], rows)
    else:
        deps.sink.write_json(out, {
            "command": "ids",
            "config": _provenance(config),
            "model": model.describe(),
            "e_ref": res.e_ref,
            "lower_anchor": None if res.lower_value is None else {
                "N": res.lower_value, "error_radius": res.lower_error,
            },
            "curves": [
                {"method": c.method, "n": c.n, "seed": c.seed, "points": _curve_points(c)}
                for c in res.curves
            ],
        })
    return EXIT_OK


def _run_compare(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    res = sweeps.run_compare(
        model_for_seed=lambda s: _model(config, s),
        grid=config.grid.points(),
        n=config.n,
        seeds=config.seed_list(),
        n_rotation=config.n_rotation,
        e_ref=config.e_ref,
        threads=threads,
        cache=deps.cache,
    )
    if config.format == "csv":
        rows = [
            (e, ve, vr, abs(ve - vr), run.seed)
            for run in res.runs
            for e, ve, vr in zip(run.eigencount.energies, run.eigencount.values, run.rotation.values)
        ]
        deps.sink.write_csv(out, CSV_SCHEMAS["compare"], rows)
    else:
        deps.sink.write_json(out, {
            "command": "compare",
            "config": _provenance(config),
            "e_ref": res.e_ref,
            "runs": [
                {
                    "seed": run.seed,
                    "max_gap": run.max_gap,
                    "lower_anchor": None if run.lower_value is None else {
                        "N": run.lower_value, "error_radius": run.lower_error,
                    },
                    "eigencount": {"n": run.eigencount.n, "points": _curve_points(run.eigencount)},
                    "rotation": {"n": run.rotation.n, "points": _curve_points(run.rotation)},
                }
                for run in res.runs
            ],
        })
    for run in res.runs:
        logger.info("[compare] seed=%d, max_gap=%.3g", run.seed, run.max_gap)
    return EXIT_OK


def _write_report(config: RunConfig, deps: CliDeps, out: str, report: ModulusReport) -> int:
    if config.format == "csv":
        rows = [(p.a, p.a2, p.drho, p.product, p.allowance, p.certified, p.ok) for p in report.pairs]
        deps.sink.write_csv(out, CSV_SCHEMAS[config.command], rows)
    else:
        doc = _report_doc(report)
        doc["command"] = config.command
        doc["config"] = _provenance(config)
        deps.sink.write_json(out, doc)
    _emit_summary(config, deps, report.summary())
    return EXIT_VIOLATION if report.verdict == "violated" else EXIT_OK


def _run_modulus(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    grid = config.grid.points()
    fam = _family(config, deps, config.seed, (config.grid.min, float(grid[-1])))
    report = sweeps.run_modulus(
        family=fam, grid=grid, n=config.n, seed=config.seed, threads=threads, cache=deps.cache
    )
    return _write_report(config, deps, out, report)


def _run_craig_simon(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    report = sweeps.run_craig_simon(
        model=_model(config, config.seed),
        grid=config.grid.points(),
        n=config.n,
        seed=config.seed,
        threads=threads,
        cache=deps.cache,
    )
    return _write_report(config, deps, out, report)


def _run_lemmas(config: RunConfig, deps: CliDeps, threads: int, out: str) -> int:
    if config.grid is not None:
        interval = (config.grid.min, config.grid.max)
    else:
        interval = (min(config.a, config.a2), max(config.a, config.a2))
    reports = sweeps.run_lemmas(
        family_for_seed=lambda s: _family(config, deps, s, interval),
        pairs=[(config.a, config.a2)],
        n=config.n,
        seeds=config.seed_list(),
        j_max=config.j_max,
        threads=threads,
    )
    if config.format == "csv":
        rows = [
            (
                r.a, r.a2, r.seed, r.step.min_margin, r.step.corollary_min_margin,
                r.segment.verdict, r.segment.min_margin, len(r.crossings.records) - 1,
            )
            for r in reports
        ]
        deps.sink.write_csv(out, CSV_SCHEMAS["lemmas"], rows)
    else:
        deps.sink.write_json(out, {
            "command": "lemmas",
            "config": _provenance(config),
            "passed": all(r.passed for r in reports),
            "reports": [_lemma_doc(r) for r in reports],
        })
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


_HANDLERS: Dict[str, Callable[[RunConfig, CliDeps, int, str], int]] = {
    "rotnum": _run_rotnum,
    "ids": _run_ids,
    "compare": _run_compare,
    "modulus": _run_modulus,
    "lemmas": _run_lemmas,
    "craig-simon": _run_craig_simon,
}


def run(config: RunConfig, deps: CliDeps) -> int:
    """
    [엔트리포인트] 커맨드 → 유스케이스 → 산출물.
    exit status: 0 성공, 1 에러, 2 인증서 위반/보조정리 실패.
    """
    threads = config.threads or settings.run.threads
    out = config.out or "-"
    logger.info("[run] command=%s, n=%d, seed=%d, threads=%d, out=%s", config.command, config.n, config.seed, threads, out)
    try:
        return _HANDLERS[config.command](config, deps, threads, out)
    except RotnumError as e:
        logger.debug("[run] failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None, deps: Optional[CliDeps] = None) -> int:
    if deps is None:
        raise RuntimeError("CliDeps must be assembled by the composition root (app.main)")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return run(config, deps)
