"""Experiment orchestration: config files, suites, reports, plots.

Config files are a flat ``key = value`` text format ('#' starts a comment);
the documented keys and defaults are in ``CONFIG_SCHEMA`` and printed by
``rlf-lab run --help``.  Exit codes: 0 all verdicts pass, 1 at least one
estimate failed, 2 usage or config error.  Outputs under the chosen
directory are byte-deterministic for identical configs: per-estimate JSON
reports, a summary CSV, and fixed-canvas SVG plots with no timestamps.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from .estimates import (
    cauchy_diagnostic,
    compactness_a,
    regularity_set,
    stability_report,
    translation_constants,
    translation_functional,
)
from .fields import (
    FieldError,
    MollifierKernel,
    catalog_field,
    catalog_ids,
    mollify,
    weak_type_check,
)
from .flow import integrate_ensemble
from .modulus import MODULUS_KINDS, PsiFunctional, make_modulus
from .numerics import ball_measure, make_grid
from .reporting import reports_to_csv

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "emit_plots",
    "main",
]

SUITES = ("stability", "cauchy", "regularity", "compactness", "weak-type", "all")

# key: (parser, default, help)
CONFIG_SCHEMA = {
    "field": (str, "osgood-sum", "catalog id"),
    "modulus": (str, "", "modulus kind override (default: the field's own)"),
    "d": (int, 1, "space dimension"),
    "terms": (int, 1000, "series truncation for osgood-sum/combined"),
    "alpha": (float, 0.3, "singular exponent for sobolev-singular/combined"),
    "cap": (float, 0.0, "value cap (0 = per-field default)"),
    "value": (float, 1.0, "constant-field velocity"),
    "slope": (float, -1.0, "linear-field coefficient"),
    "R": (float, 1.0, "report-region radius"),
    "T": (float, 1.0, "time horizon"),
    "h": (float, 0.01, "grid spacing"),
    "tau": (float, 1e-3, "integrator step"),
    "levels": (str, "4,8,16,32", "mollification levels, ascending"),
    "eta": (float, 0.05, "Cauchy-diagnostic threshold"),
    "epsilon": (float, 0.0, "regularity budget (0 = 0.1 measure of B(R))"),
    "radii_depth": (int, 6, "dyadic radii depth J"),
    "deltas": (str, "", "optional fixed deltas for stability reports"),
    "slack": (float, 0.05, "multiplicative verdict slack"),
    "seed": (int, 20260809, "pair-sampling seed"),
    "out": (str, "rlf-lab-out", "output directory"),
}


class ConfigError(Exception):
    """Schema violation; carries a line-anchored message."""


@dataclass
class ExperimentConfig:
    field: str = "osgood-sum"
    modulus: str = ""
    d: int = 1
    terms: int = 1000
    alpha: float = 0.3
    cap: float = 0.0
    value: float = 1.0
    slope: float = -1.0
    R: float = 1.0
    T: float = 1.0
    h: float = 0.01
    tau: float = 1e-3
    levels: tuple = (4, 8, 16, 32)
    eta: float = 0.05
    epsilon: float = 0.0
    radii_depth: int = 6
    deltas: tuple = ()
    slack: float = 0.05
    seed: int = 20260809
    out: str = "rlf-lab-out"

    def effective_epsilon(self) -> float:
        if self.epsilon > 0.0:
            return self.epsilon
        return 0.1 * ball_measure(self.d, self.R)


def parse_config(path) -> ExperimentConfig:
    """Parse and validate the flat key = value schema."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    values: dict = {}
    line_of: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_SCHEMA:
            known = ", ".join(sorted(CONFIG_SCHEMA))
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r} (known: {known})"
            )
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        parser = CONFIG_SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse {key} value {val!r}"
            ) from None
        line_of[key] = lineno

    cfg = ExperimentConfig()
    for key, val in values.items():
        if key == "levels":
            try:
                levels = tuple(int(v) for v in val.split(","))
            except ValueError:
                raise ConfigError(
                    f"{path}:{line_of[key]}: levels must be integers"
                ) from None
            val = levels
        elif key == "deltas":
            if val:
                try:
                    val = tuple(float(v) for v in val.split(","))
                except ValueError:
                    raise ConfigError(
                        f"{path}:{line_of[key]}: deltas must be numbers"
                    ) from None
            else:
                val = ()
        setattr(cfg, key, val)

    def anchored(key, message):
        return ConfigError(f"{path}:{line_of.get(key, 0)}: {message}")

    if cfg.field not in catalog_ids():
        raise anchored(
            "field",
            f"unknown field id {cfg.field!r}; catalog: "
            + ", ".join(catalog_ids()),
        )
    if cfg.modulus and cfg.modulus not in MODULUS_KINDS:
        raise anchored("modulus", f"unknown modulus kind {cfg.modulus!r}")
    for key in ("R", "T", "h", "tau", "eta", "slack"):
        if getattr(cfg, key) <= 0.0 and key != "slack":
            raise anchored(key, f"{key} must be positive")
    if cfg.h >= cfg.R:
        raise anchored("h", "grid spacing must be smaller than R")
    steps = cfg.T / cfg.tau
    if abs(steps - round(steps)) > 1e-9:
        raise anchored("tau", f"T/tau = {steps} is not an integer")
    if len(cfg.levels) < 1 or any(
        b <= a for a, b in zip(cfg.levels, cfg.levels[1:])
    ):
        raise anchored("levels", "levels must be ascending positive integers")
    if any(n < 1 for n in cfg.levels):
        raise anchored("levels", "levels must be positive")
    if cfg.epsilon < 0.0:
        raise anchored("epsilon", "epsilon must be nonnegative")
    return cfg


# --------------------------------------------------------------------------
# pipeline context with lazy, cached stages
# --------------------------------------------------------------------------


class _Pipeline:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._base = None
        self._moll: dict = {}
        self._ens: dict = {}

    def base_field(self):
        if self._base is None:
            cfg = self.cfg
            kwargs = {}
            if cfg.field in ("osgood-sum", "combined"):
                kwargs["terms"] = cfg.terms
            if cfg.field in ("sobolev-singular", "combined"):
                kwargs["alpha"] = cfg.alpha
                if cfg.cap > 0.0:
                    kwargs["cap"] = cfg.cap
            if cfg.field == "constant":
                kwargs["value"] = cfg.value
            if cfg.field == "linear":
                kwargs["slope"] = cfg.slope
            base = catalog_field(cfg.field, cfg.d, **kwargs)
            if cfg.modulus and (
                base.modulus is None or cfg.modulus != base.modulus.kind
            ):
                from dataclasses import replace

                base = replace(base, modulus=make_modulus(cfg.modulus))
            self._base = base
        return self._base

    def mollified(self, level: int):
        if level not in self._moll:
            self._moll[level] = mollify(self.base_field(), MollifierKernel(level))
        return self._moll[level]

    def ensemble(self, level: int, radius: float, tau: float | None = None):
        tau = self.cfg.tau if tau is None else tau
        key = (level, round(radius, 12), tau)
        if key not in self._ens:
            grid = make_grid(self.cfg.d, radius, self.cfg.h)
            self._ens[key] = integrate_ensemble(
                self.mollified(level), grid, self.cfg.T, tau
            )
        return self._ens[key]


def _stability_suite(pipe: _Pipeline):
    cfg = pipe.cfg
    reports = []
    for i, n in enumerate(cfg.levels):
        for m in cfg.levels[i + 1 :]:
            fa, fb = pipe.mollified(n), pipe.mollified(m)
            ea, eb = pipe.ensemble(n, cfg.R), pipe.ensemble(m, cfg.R)
            deltas = cfg.deltas or (None,)
            for delta in deltas:
                if delta is None:
                    from .estimates import field_l1_distance

                    grid = make_grid(
                        cfg.d, cfg.R + cfg.T * fa.sup_bound, cfg.h
                    )
                    measured = field_l1_distance(fa, fb, ea.times, grid)
                    delta = measured if measured > 0.0 else 1e-6
                reports.append(
                    stability_report(
                        fa, fb, ea, eb, cfg.R, delta=delta, slack=cfg.slack
                    )
                )
    return reports


def _cauchy_suite(pipe: _Pipeline):
    cfg = pipe.cfg
    fields = [pipe.mollified(n) for n in cfg.levels]
    ensembles = [pipe.ensemble(n, cfg.R) for n in cfg.levels]
    _, reports = cauchy_diagnostic(
        pipe.base_field(), fields, ensembles, cfg.eta, cfg.R, slack=cfg.slack
    )
    return reports


def _regularity_suite(pipe: _Pipeline):
    cfg = pipe.cfg
    top = cfg.levels[-1]
    ens = pipe.ensemble(top, 3.0 * cfg.R)
    field = pipe.mollified(top)
    base = pipe.base_field()
    from dataclasses import replace

    # the flow representative is the top-level ensemble; witness, modulus and
    # divergence data come from the underlying field
    rep_field = replace(
        field, witness=base.witness, div_evaluator=base.div_evaluator
    )
    _, report = regularity_set(
        ens,
        rep_field,
        cfg.R,
        pipe.cfg.effective_epsilon(),
        depth=cfg.radii_depth,
        seed=cfg.seed,
        slack=cfg.slack,
    )
    return [report]


def _compactness_suite(pipe: _Pipeline):
    cfg = pipe.cfg
    base = pipe.base_field()
    top = cfg.levels[-1]
    reports = []
    from dataclasses import replace

    ens = pipe.ensemble(top, 1.5 * cfg.R)
    rep_field = replace(
        pipe.mollified(top),
        witness=base.witness,
        div_evaluator=base.div_evaluator,
    )
    for r in (cfg.R / 4.0, cfg.R / 8.0, cfg.R / 16.0):
        reports.append(
            compactness_a(ens, rep_field, r, cfg.R, slack=cfg.slack)
        )

    moll = [pipe.mollified(n) for n in cfg.levels]
    consts = translation_constants(
        base, moll, cfg.R, cfg.T, cfg.h, ens.times
    )
    modulus = base.modulus
    radii = [cfg.R / 4.0 / 2**j for j in range(5)]
    radii = [r for r in radii if r >= cfg.h]
    for n in cfg.levels:
        e = pipe.ensemble(n, 1.5 * cfg.R)
        for r in radii:
            reports.append(
                translation_functional(
                    e, r, cfg.R, consts, modulus, slack=cfg.slack
                )
            )
    return reports


def _weak_type_suite(pipe: _Pipeline):
    cfg = pipe.cfg
    if cfg.d != 1:
        raise ConfigError("weak-type battery is defined for d = 1")
    region, lam = cfg.R, cfg.R
    grid = make_grid(1, region + lam, cfg.h)
    x = grid.coords()
    profile = catalog_field("sobolev-singular", 1)
    battery = [
        ("indicator_wide", (np.abs(x) <= 1.0).astype(float)),
        ("indicator_narrow", (np.abs(x) <= 0.5).astype(float)),
        ("constant_1.01", np.full_like(x, 1.01)),
        ("constant_0.505", np.full_like(x, 0.505)),
        ("singular_speed", profile.speed(0.0, grid.points)),
    ]
    alphas = [2.0**-k for k in range(7)]
    reports = []
    for name, samples in battery:
        rep = weak_type_check(
            grid, samples, region, lam, alphas, metadata={"field": name}
        )
        reports.append(rep)
    return reports


def run_experiment(cfg: ExperimentConfig, suite: str):
    """Run one suite (or all), write artifacts, return the exit code."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; options: {', '.join(SUITES)}")
    if suite in ("cauchy", "all") and len(cfg.levels) < 3:
        raise ConfigError("the cauchy suite needs at least 3 levels")
    out = cfg.out
    try:
        os.makedirs(os.path.join(out, "reports"), exist_ok=True)
        os.makedirs(os.path.join(out, "plots"), exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}")
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")

    pipe = _Pipeline(cfg)
    runners = {
        "stability": _stability_suite,
        "cauchy": _cauchy_suite,
        "regularity": _regularity_suite,
        "compactness": _compactness_suite,
        "weak-type": _weak_type_suite,
    }
    chosen = SUITES[:-1] if suite == "all" else (suite,)
    rows = []
    for name in chosen:
        for report in runners[name](pipe):
            rows.append((name, report))
            _write_report(out, name, report, rows)
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        fh.write(reports_to_csv(rows))
    emit_plots([r for _, r in rows], os.path.join(out, "plots"))
    return 0 if all(r.passed for _, r in rows) else 1


def _write_report(out, suite, report, rows):
    meta = report.metadata
    parts = [suite, report.estimate_id, str(meta.get("field", ""))]
    for key in ("n", "m"):
        v = meta.get(key, "")
        if v != "" and v is not None:
            parts.append(f"{key}{v}")
    r = report.constants.get("r")
    if r is not None:
        parts.append(f"r{r:.6g}")
    delta = report.constants.get("delta")
    if delta is not None:
        parts.append(f"d{delta:.3g}")
    slug = "_".join(parts).replace("/", "-")
    # keep names unique when a suite emits repeated shapes
    slug = f"{slug}_{sum(1 for _ in rows):03d}"
    with open(os.path.join(out, "reports", slug + ".json"), "w") as fh:
        fh.write(report.to_json() + "\n")


# --------------------------------------------------------------------------
# deterministic SVG plots
# --------------------------------------------------------------------------

_CANVAS = (640, 480)
_MARGIN = (70, 30, 40, 60)  # left, right, top, bottom
_PALETTE = ("#1b6ca8", "#c23b22", "#2e8540", "#8e6bbf", "#b8860b")


def _svg_line_plot(series, title, xlabel, ylabel) -> str:
    """Fixed-canvas line plot; floats rendered with %.6g, no timestamps."""
    width, height = _CANVAS
    ml, mr, mt, mb = _MARGIN
    inner_w, inner_h = width - ml - mr, height - mt - mb
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(min(ys_all.min(), 0.0)), float(ys_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * inner_w

    def py(y):
        return mt + inner_h - (y - y_lo) / (y_hi - y_lo) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
        f'font-size="14">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{ml}" y1="{mt + inner_h}" x2="{ml + inner_w}" '
        f'y2="{mt + inner_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + inner_h}" '
        f'stroke="black"/>'
    )
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4.0
        yv = y_lo + (y_hi - y_lo) * i / 4.0
        parts.append(
            f'<text x="{px(xv):.1f}" y="{mt + inner_h + 16}" '
            f'text-anchor="middle" font-size="10">{xv:.6g}</text>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
            f'font-size="10">{yv:.6g}</text>'
        )
    parts.append(
        f'<text x="{ml + inner_w / 2:.1f}" y="{height - 8}" '
        f'text-anchor="middle" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + inner_h / 2:.1f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 16 {mt + inner_h / 2:.1f})">'
        f"{ylabel}</text>"
    )
    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(
            f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        for x, y in zip(xs, ys):
            parts.append(
                f'<circle cx="{px(float(x)):.2f}" cy="{py(float(y)):.2f}" '
                f'r="2.5" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{ml + inner_w - 4}" y="{mt + 14 + 14 * idx}" '
            f'text-anchor="end" font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(reports, out_dir) -> list:
    """Write the suite plots; returns the written paths (empty = warning)."""
    if not reports:
        print("warning: no reports, no plots emitted", file=sys.stderr)
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []

    stab = [r for r in reports if r.estimate_id == "thm31"]
    if stab:
        stab = sorted(
            stab, key=lambda r: (r.metadata.get("n") or 0, r.metadata.get("m") or 0)
        )
        xs = list(range(1, len(stab) + 1))
        doc = _svg_line_plot(
            [
                ("lhs", xs, [r.lhs for r in stab]),
                ("rhs", xs, [r.rhs for r in stab]),
            ],
            "stability functional vs bound (pairs ordered by level)",
            "pair index",
            "value",
        )
        path = os.path.join(out_dir, "stability_lhs_rhs.svg")
        with open(path, "w") as fh:
            fh.write(doc)
        written.append(path)

    cauchy = [r for r in reports if r.estimate_id == "cauchy"]
    doubling = [
        r
        for r in cauchy
        if r.metadata.get("m") == 2 * (r.metadata.get("n") or 0)
    ]
    if doubling:
        doubling = sorted(doubling, key=lambda r: r.metadata["n"])
        doc = _svg_line_plot(
            [
                (
                    "D(n,2n)",
                    [r.metadata["n"] for r in doubling],
                    [r.lhs for r in doubling],
                )
            ],
            "mollification flow gap",
            "level n",
            "D",
        )
        path = os.path.join(out_dir, "cauchy_decay.svg")
        with open(path, "w") as fh:
            fh.write(doc)
        written.append(path)

    trans = [r for r in reports if r.estimate_id == "thm44"]
    if trans:
        by_level: dict = {}
        for r in trans:
            by_level.setdefault(r.metadata.get("n"), []).append(r)
        series = []
        for n in sorted(k for k in by_level if k is not None):
            group = sorted(by_level[n], key=lambda r: r.constants["r"])
            series.append(
                (
                    f"n={n}",
                    [g.constants["r"] for g in group],
                    [g.constants["g_of_r"] for g in group],
                )
            )
        if series:
            doc = _svg_line_plot(
                series, "translation bound g(r)", "r", "g(r)"
            )
            path = os.path.join(out_dir, "translation_g.svg")
            with open(path, "w") as fh:
                fh.write(doc)
            written.append(path)
    return written


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rlf-lab",
        description="flow-estimate laboratory: run verification suites, "
        "inspect the field catalog, evaluate the separation functional",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run",
        help="run a verification suite from a config file",
        epilog="config keys and defaults: "
        + "; ".join(
            f"{k} = {d!r}" for k, (_, d, _h) in CONFIG_SCHEMA.items()
        ),
    )
    run.add_argument("--config", required=True, help="path to key=value config")
    run.add_argument("--suite", required=True, choices=SUITES)
    run.add_argument("--out", help="override the output directory")
    run.add_argument(
        "--slack", type=float, help="override the multiplicative slack (%%)"
    )

    sub.add_parser("catalog", help="list catalog fields and modulus kinds")

    psi = sub.add_parser("psi", help="evaluate the separation functional")
    psi.add_argument("--modulus", required=True, choices=MODULUS_KINDS[:-1])
    psi.add_argument("--delta", type=float, required=True)
    psi.add_argument("--xi", type=float, required=True)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command == "catalog":
        print("fields:")
        for cid in catalog_ids():
            print(f"  {cid}")
        print("moduli:")
        for kind in MODULUS_KINDS:
            print(f"  {kind}")
        return 0
    if args.command == "psi":
        if args.delta <= 0.0 or args.xi < 0.0:
            print("psi needs delta > 0 and xi >= 0", file=sys.stderr)
            return 2
        fam = PsiFunctional(make_modulus(args.modulus), args.delta)
        print(repr(fam.psi(args.xi)))
        return 0
    # run
    try:
        cfg = parse_config(args.config)
        if args.out:
            cfg.out = args.out
        if args.slack is not None:
            if args.slack < 0.0:
                raise ConfigError("slack override must be nonnegative")
            cfg.slack = args.slack / 100.0
        return run_experiment(cfg, args.suite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FieldError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
