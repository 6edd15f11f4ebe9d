"""Command-line front end.

    hypdecay analyze --config run.json      classification and prediction
    hypdecay verify  --config run.json      + norm series, fits and pass/fail rows
    hypdecay solve   --config run.json      periodic-grid snapshots (plots only)
    hypdecay grad    --n 1 --N 2            Grad dispersion symbol JSON + matrices
    hypdecay wave    --delta 1 --mu 0       wave-family symbol JSON + case label

Exit codes: 0 ok, 2 bad config, 3 numerical failure, 4 inconclusive
classification, 5 decay fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import warnings
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .classify import Classification, check_pq, classify_symbol, default_grid, predict_decay, theta
from .decay import (
    DataProfile,
    DecayFit,
    DegenerateFitError,
    default_times,
    fit_decay,
    grid_for,
    norm_series,
    verify_prediction,
    write_series_csv,
)
from .models import (
    GradSizeError,
    WaveFamilyParams,
    grad_matrix_dump,
    grad_symbol,
    grad_system,
    wave_family_case,
    wave_family_symbol,
)
from .multiplier import NearMultiplicityError, UnstableModeError, propagator_batch
from .roots import RootFindingError, track_branches, write_root_field_csv
from .symbolcore import FrequencyGrid, OperatorSymbol, SymbolError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE, EXIT_FIT = 0, 2, 3, 4, 5
NUMERIC_ERRORS = (RootFindingError, UnstableModeError, NearMultiplicityError, GradSizeError,
                  FloatingPointError, np.linalg.LinAlgError)
NOT_VERIFIABLE = "not verifiable by damping surrogates (on-axis roots)"


class ConfigError(ValueError):
    pass


class FitFailure(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------------


@dataclass
class RunConfig:
    symbol: OperatorSymbol
    source: dict
    grid: FrequencyGrid | None = None
    data: DataProfile | None = None
    pqs: list[tuple[float, float]] = field(default_factory=lambda: [(1.0, math.inf), (2.0, 2.0)])
    derivatives: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    T: float = 200.0
    samples: int = 25
    window: tuple[float, float] | None = None
    tol: float = 0.15
    eps: float = 1e-3
    min_radius: float = 0.0
    verify_points: int | None = None
    solve: dict = field(default_factory=dict)
    out: Path = Path("hypdecay_out")
    wave_params: WaveFamilyParams | None = None
    raw: dict = field(default_factory=dict)

    def times(self) -> np.ndarray:
        if self.window is not None:
            return np.geomspace(self.window[0], self.window[1], self.samples)
        return default_times(self.T, self.samples)


def parse_pq(text: str | Sequence) -> tuple[float, float]:
    try:
        if isinstance(text, str):
            a, b = text.split(",")
        else:
            a, b = text
        p = float(a)
        q = math.inf if str(b).strip().lower() in ("inf", "infinity") else float(b)
        check_pq(p, q)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad (p,q) pair {text!r}: {exc}") from exc
    return p, q


def _symbol_from_source(cfg: dict, base: Path) -> tuple[OperatorSymbol, dict, WaveFamilyParams | None]:
    given = [k for k in ("operator", "operator_file", "generator") if k in cfg]
    if len(given) != 1:
        raise ConfigError("config needs exactly one of 'operator', 'operator_file', 'generator'")
    key = given[0]
    try:
        if key == "operator":
            return OperatorSymbol.from_json_dict(cfg["operator"]), {"kind": "inline"}, None
        if key == "operator_file":
            path = Path(cfg["operator_file"])
            path = path if path.is_absolute() else base / path
            text = path.read_text()
            return OperatorSymbol.from_json(text), {"kind": "file", "path": str(cfg["operator_file"])}, None
        gen = dict(cfg["generator"])
        name = gen.get("name")
        n = int(gen.get("n", 1))
        if name == "wave":
            params = WaveFamilyParams(**{k: float(v) for k, v in gen.get("params", {}).items()})
            return wave_family_symbol(params, n), {"kind": "generator", **gen}, params
        if name == "grad":
            sys_ = grad_system(n, int(gen["N"]))
            return grad_symbol(sys_), {"kind": "generator", **gen}, None
        raise ConfigError(f"unknown generator {name!r}")
    except (SymbolError, OSError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot build operator: {exc}") from exc


def _data_profile(entry: dict | None) -> DataProfile | None:
    if entry is None:
        return None
    entry = dict(entry)
    kind = entry.pop("kind", None)
    slot = int(entry.pop("slot", 0))
    try:
        if kind == "gaussian":
            return DataProfile.gaussian(float(entry.get("width", 1.0)), slot=slot)
        if kind == "annulus":
            return DataProfile.annulus(float(entry["r_inner"]), float(entry["r_outer"]),
                                       float(entry.get("smoothing", 0.1)), slot=slot)
        if kind == "ball":
            return DataProfile.ball(float(entry["radius"]), slot=slot)
        if kind == "table":
            return DataProfile.from_table([tuple(row) for row in entry["rows"]], slot=slot)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad data profile: {exc}") from exc
    raise ConfigError(f"unknown data profile kind {kind!r}")


def parse_config(cfg: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    symbol, source, params = _symbol_from_source(cfg, base)
    rc = RunConfig(symbol=symbol, source=source, wave_params=params, raw=cfg)
    try:
        if "grid" in cfg:
            g = cfg["grid"]
            rc.grid = FrequencyGrid(symbol.n, float(g["extent"]), int(g["points_per_axis"]))
        rc.data = _data_profile(cfg.get("data"))
        if rc.data is not None and not 0 <= rc.data.slot < symbol.m:
            raise ConfigError(f"data slot {rc.data.slot} outside 0..{symbol.m - 1}")
        if "pq" in cfg:
            rc.pqs = [parse_pq(pair) for pair in cfg["pq"]]
        for d in cfg.get("derivatives", [{"r": 0}]):
            alpha = tuple(int(a) for a in d.get("alpha", [0] * symbol.n))
            if len(alpha) != symbol.n or min(alpha) < 0 or int(d.get("r", 0)) < 0:
                raise ConfigError(f"bad derivative entry {d!r}")
            rc.derivatives.append((int(d.get("r", 0)), alpha))
        time_cfg = cfg.get("time", {})
        rc.T = float(time_cfg.get("T", rc.T))
        rc.samples = int(time_cfg.get("samples", rc.samples))
        if "window" in time_cfg:
            lo, hi = (float(x) for x in time_cfg["window"])
            if not 0 <= lo < hi:
                raise ConfigError("time window must satisfy 0 <= start < end")
            rc.window = (lo, hi)
        rc.tol = float(cfg.get("tol", rc.tol))
        rc.eps = float(cfg.get("eps", rc.eps))
        rc.min_radius = float(cfg.get("min_radius", 0.0))
        if "verify_points" in cfg:
            rc.verify_points = int(cfg["verify_points"])
        rc.solve = dict(cfg.get("solve", {}))
        if "out" in cfg:
            rc.out = Path(cfg["out"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from exc
    if rc.samples < 8:
        raise ConfigError("time.samples must be >= 8")
    return rc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(cfg, path.parent)


# -- report helpers ---------------------------------------------------------------------


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def provenance(rc: RunConfig | None, command: str) -> dict:
    from . import __version__
    import scipy

    raw = json.dumps(rc.raw if rc else {}, sort_keys=True, separators=(",", ":"))
    return {
        "command": command,
        "config_sha256": hashlib.sha256(raw.encode()).hexdigest(),
        "schema_version": SCHEMA_VERSION,
        "versions": {
            "hypdecay": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def write_report(report: dict, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(json.dumps(_clean(report), indent=2) + "\n")
    return path


def _pq_label(p: float, q: float) -> str:
    return f"{p:g},{'inf' if math.isinf(q) else f'{q:g}'}"


def _alpha_label(alpha: Sequence[int]) -> str:
    return "".join(str(a) for a in alpha)


# -- commands --------------------------------------------------------------------------------


def _classify(rc: RunConfig, r: int = 0, alpha: Sequence[int] = ()) -> tuple[Classification, Any]:
    grid = rc.grid or default_grid(rc.symbol.n)
    field_ = track_branches(rc.symbol, grid)
    cls = classify_symbol(rc.symbol, grid, eps=rc.eps, min_radius=rc.min_radius, r=r, alpha=alpha, field=field_)
    return cls, field_


def cmd_analyze(rc: RunConfig, charts: bool = True) -> tuple[dict, int]:
    """Classification and prediction; writes report.json, roots.csv and a root chart."""
    from .plotting import roots_chart

    out = rc.out
    out.mkdir(parents=True, exist_ok=True)
    cls, field_ = _classify(rc)
    write_root_field_csv(field_, out / "roots.csv")
    files = ["roots.csv"]
    if charts:
        roots_chart(field_, out / "chart_roots.svg", title="characteristic roots")
        files.append("chart_roots.svg")
    report = {
        "provenance": provenance(rc, "analyze"),
        "operator": rc.symbol.to_json_dict(),
        "source": rc.source,
        "classification": cls.to_dict(rc.pqs),
        "outputs": files,
    }
    if rc.wave_params is not None:
        from .classify import wave_case_from_classification

        report["wave_case"] = {
            "from_parameters": wave_family_case(rc.wave_params),
            "from_geometry": wave_case_from_classification(cls),
        }
    # only a stable verdict whose zero set runs into the grid edge is undecided
    undecided = cls.verdict.inconclusive and cls.verdict.verdict in ("stable", "strongly_stable")
    code = EXIT_INCONCLUSIVE if undecided else EXIT_OK
    return report, code


def _interpolated_fit(fit_inf: DecayFit, fit_2: DecayFit, th: float) -> DecayFit:
    """Riesz-Thorin combination of the two endpoint fits at theta."""
    exponent = th * fit_inf.exponent + (1 - th) * fit_2.exponent
    rate = th * fit_inf.rate + (1 - th) * fit_2.rate
    model = "power" if rate == 0 else ("exponential" if exponent == 0 else "power_times_exp")
    stderr = math.hypot(th * fit_inf.stderr, (1 - th) * fit_2.stderr)
    return DecayFit(model, exponent, rate, 0.0, stderr, fit_inf.window, max(fit_inf.rms, fit_2.rms))


def _data_allowed(data: DataProfile, radius: float, n: int) -> bool:
    """True when f_hat vanishes on |xi| < radius (checked on a radial sample)."""
    r = np.linspace(0.0, radius, 400, endpoint=False)
    pts = np.zeros((len(r), n))
    pts[:, 0] = r
    return bool(np.all(data(pts) == 0))


def cmd_verify(rc: RunConfig) -> tuple[dict, int]:
    """Full pipeline: classification, norm series, fits, pass/fail rows and charts."""
    from .plotting import series_chart

    report, code = cmd_analyze(rc)
    report["provenance"]["command"] = "verify"
    out = rc.out
    sym = rc.symbol
    data = rc.data or DataProfile.gaussian(1.0, slot=sym.m - 1)
    cls, _ = _classify(rc)
    derivatives = rc.derivatives or [(0, (0,) * sym.n)]
    times = rc.times()
    rows: list[dict] = []
    predictions = []
    notes: list[str] = []
    status = cls.prediction.status
    skip_reason = None
    if status == "no_decay":
        skip_reason = "unstable: no decay predicted, verification skipped"
    elif status == "conditional" and not _data_allowed(data, cls.min_radius, sym.n):
        skip_reason = (f"data not supported in |xi| >= {cls.min_radius:.6g}; "
                       "unstable modes make the series grow, verification skipped")
    points = rc.verify_points or {1: 2049, 2: 257}.get(sym.n, 33)
    vgrid = grid_for(data, sym.n, points)
    files = list(report["outputs"])
    fit_failed = False
    for r, alpha in derivatives:
        pred = predict_decay(cls.behaviors, sym.n, r, alpha, status=status, notes=cls.prediction.notes)
        pred_id = f"r{r}_a{_alpha_label(alpha)}"
        predictions.append({"id": pred_id, **pred.to_dict(rc.pqs)})
        if skip_reason:
            for p, q in rc.pqs:
                rows.append({"prediction": pred_id, "p": p, "q": q, "status": "skipped", "reason": skip_reason})
            continue
        fits: dict[str, DecayFit | None] = {}
        for meaning in ("Linf_upper", "L2_exact"):
            needed = any((theta(p, q) > 0 and meaning == "Linf_upper") or (theta(p, q) < 1 and meaning == "L2_exact")
                         for p, q in rc.pqs if not pred.dominant(p, q).on_axis)
            if not needed:
                continue
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                series = norm_series(sym, data, vgrid, times, meaning, r, alpha)
            for w in caught:
                notes.append(f"{pred_id} {meaning}: {w.message}")
            stem = f"{pred_id}_{meaning}"
            write_series_csv(series, out / f"series_{stem}.csv")
            fit = None
            try:
                fit = fit_decay(series)
            except DegenerateFitError as exc:
                notes.append(f"{pred_id} {meaning}: {exc}")
            except (ValueError, np.linalg.LinAlgError) as exc:
                fit_failed = True
                notes.append(f"{pred_id} {meaning}: fit failed: {exc}")
            fits[meaning] = fit
            overlay = []
            if fit is not None:
                model = np.exp(fit.offset) * (1 + series.times) ** fit.exponent * np.exp(-fit.rate * series.times)
                overlay.append((f"fit: {fit.model}", series.times, model))
            series_chart([(meaning, series.times, series.values)], out / f"chart_{stem}.svg",
                         title=f"{meaning}, r={r}, alpha={list(alpha)}", fits=overlay)
            files += [f"series_{stem}.csv", f"chart_{stem}.svg"]
        for p, q in rc.pqs:
            dom = pred.dominant(p, q)
            row = {"prediction": pred_id, "p": p, "q": q, "predicted_exponent": dom.exponent(p, q),
                   "predicted_rate": dom.exp_rate, "row": dom.row}
            if dom.on_axis:
                row.update(status="not_applicable", reason=NOT_VERIFIABLE)
                rows.append(row)
                continue
            th = theta(p, q)
            f_inf, f_2 = fits.get("Linf_upper"), fits.get("L2_exact")
            if th == 1:
                fit, meaning = f_inf, "Linf_upper"
            elif th == 0:
                fit, meaning = f_2, "L2_exact"
            else:
                fit = _interpolated_fit(f_inf, f_2, th) if (f_inf and f_2) else None
                meaning = "interpolated"
            if fit is None:
                bounded = dom.exponent(p, q) >= -rc.tol and dom.exp_rate == 0
                row.update(status="pass" if bounded else "fail",
                           reason="series bounded without decay" + ("" if bounded else " but decay predicted"))
                rows.append(row)
                continue
            ver = verify_prediction(pred, fit, p, q, rc.tol, meaning)
            row.update(status="pass" if ver.passed else "fail", surrogate=meaning, **ver.to_dict())
            rows.append(row)
    report["verification"] = {
        "data": {"kind": data.kind, "slot": data.slot, "support_radius": data.support_radius},
        "times": {"start": float(times[0]), "end": float(times[-1]), "samples": len(times)},
        "tol": rc.tol,
        "predictions": predictions,
        "rows": rows,
        "notes": notes,
        "all_pass": all(r_["status"] in ("pass", "not_applicable") for r_ in rows) and not skip_reason,
    }
    report["outputs"] = files
    if fit_failed:
        code = EXIT_FIT
    return report, code


def cmd_solve(rc: RunConfig) -> tuple[dict, int]:
    """Periodic FFT snapshots u(x, t) = F^-1[E_slot f_hat] on a box (qualitative only)."""
    from .plotting import snapshot_chart, series_chart
    from .decay import NormSeries

    sym = rc.symbol
    if sym.n > 2:
        raise ConfigError("solve supports n = 1 and n = 2")
    data = rc.data or DataProfile.gaussian(1.0, slot=sym.m - 1)
    half = float(rc.solve.get("half_length", 40.0))
    K = int(rc.solve.get("points", 512 if sym.n == 1 else 128))
    times = np.asarray(rc.solve.get("times", [0.0, 1.0, 5.0, 20.0, 50.0]), float)
    dx = 2 * half / K
    x = -half + dx * np.arange(K)
    k1 = 2 * np.pi * np.fft.fftfreq(K, d=dx)
    mesh = np.meshgrid(*([k1] * sym.n), indexing="ij")
    knodes = np.stack([m.ravel() for m in mesh], axis=-1)
    fhat = data(knodes)
    E = propagator_batch(sym, knodes, times)[..., data.slot]
    dk = 2 * np.pi / (2 * half)
    shift = np.exp(1j * half * knodes.sum(axis=1))  # x starts at -half
    out = rc.out
    out.mkdir(parents=True, exist_ok=True)
    snaps = []
    sup = []
    for i, t in enumerate(times):
        F = (E[i] * fhat * np.conj(shift)).reshape((K,) * sym.n)
        u = np.fft.ifftn(F) * (K * dk / (2 * np.pi)) ** sym.n
        snaps.append((float(t), u))
        sup.append(float(np.abs(u).max()))
    rows = ["t," + ",".join(f"x_{i + 1}" for i in range(sym.n)) + ",re_u,im_u"]
    if sym.n == 1:
        for t, u in snaps:
            rows += [f"{t!r},{xi!r},{float(v.real)!r},{float(v.imag)!r}" for xi, v in zip(x, u)]
    else:
        for t, u in snaps:
            for a in range(K):
                for b in range(K):
                    v = u[a, b]
                    rows.append(f"{t!r},{x[a]!r},{x[b]!r},{float(v.real)!r},{float(v.imag)!r}")
    (out / "snapshot.csv").write_text("\n".join(rows) + "\n")
    files = ["snapshot.csv"]
    positive = np.array(sup) > 0
    if positive.sum() >= 2 and np.all(np.diff(times) > 0):
        series = NormSeries(times[positive], np.array(sup)[positive], "grid_sample", 0, (0,) * sym.n, data.slot)
        write_series_csv(series, out / "series_grid_sample.csv")
        series_chart([("grid sup |u|", series.times, series.values)], out / "chart_grid_sample.svg",
                     title="periodic-grid sample (qualitative)")
        files += ["series_grid_sample.csv", "chart_grid_sample.svg"]
    if sym.n == 1:
        snapshot_chart(x, snaps, out / "chart_snapshot.svg", title="|u(x,t)| on the periodic box")
        files.append("chart_snapshot.svg")
    report = {
        "provenance": provenance(rc, "solve"),
        "operator": rc.symbol.to_json_dict(),
        "solve": {"half_length": half, "points": K, "times": times.tolist(), "sup_abs_u": sup,
                  "note": "periodic x-grid: qualitative only, no acceptance weight"},
        "outputs": files,
    }
    return report, EXIT_OK


def cmd_grad(n: int, N: int, out: Path) -> tuple[dict, int]:
    sys_ = grad_system(n, N)
    sym = grad_symbol(sys_)
    out.mkdir(parents=True, exist_ok=True)
    (out / "symbol.json").write_text(sym.to_json() + "\n")
    (out / "grad_matrices.json").write_text(json.dumps(grad_matrix_dump(sys_), indent=2) + "\n")
    from .classify import origin_order_check

    oo = origin_order_check(sym)
    report = {
        "provenance": provenance(None, "grad"),
        "grad": {"n": n, "N": N, "M": sys_.M},
        "origin_order": {"d_tau_ok": oo.d_tau_ok, "min_alpha": oo.min_alpha, "fitted_order": oo.fitted_order},
        "outputs": ["symbol.json", "grad_matrices.json"],
    }
    return report, EXIT_OK


def cmd_wave(params: WaveFamilyParams, n: int, out: Path) -> tuple[dict, int]:
    sym = wave_family_symbol(params, n)
    out.mkdir(parents=True, exist_ok=True)
    (out / "symbol.json").write_text(sym.to_json() + "\n")
    rc = RunConfig(symbol=sym, source={"kind": "generator", "name": "wave"}, out=out, wave_params=params,
                   raw={"generator": {"name": "wave", "n": n, "params": vars(params)}})
    report, code = cmd_analyze(rc)
    report["outputs"] = ["symbol.json"] + report["outputs"]
    return report, code


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypdecay", description="Root classification and decay verification.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (env HYPDECAY_OUT)")
        p.add_argument("--threads", type=int, help="cap on worker threads (env HYPDECAY_THREADS)")
        return p

    for name in ("analyze", "verify", "solve"):
        p = common(sub.add_parser(name))
        p.add_argument("--pq", action="append", help="exponent pair, e.g. 1,inf (repeatable)")
        p.add_argument("--tol", type=float, help="exponent tolerance for pass/fail")
    p = common(sub.add_parser("grad"), config_required=False)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--N", type=int, default=1)
    p = common(sub.add_parser("wave"), config_required=False)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    return ap


def _thread_limit(k: int | None):
    if not k:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=k)


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    env_out = os.environ.get("HYPDECAY_OUT")
    env_threads = os.environ.get("HYPDECAY_THREADS")
    threads = args.threads or (int(env_threads) if env_threads and env_threads.isdigit() else None)
    out_default = Path(args.out or env_out or "hypdecay_out")
    try:
        with _thread_limit(threads):
            if args.command == "grad":
                report, code = cmd_grad(args.n, args.N, out_default)
                out = out_default
            elif args.command == "wave":
                params = WaveFamilyParams(args.c, args.delta, args.mu)
                report, code = cmd_wave(params, args.n, out_default)
                out = out_default
            else:
                rc = load_config(args.config)
                if args.out or env_out or "out" not in rc.raw:
                    rc.out = out_default
                if args.pq:
                    rc.pqs = [parse_pq(s) for s in args.pq]
                if args.tol is not None:
                    rc.tol = args.tol
                out = rc.out
                handler = {"analyze": cmd_analyze, "verify": cmd_verify, "solve": cmd_solve}[args.command]
                report, code = handler(rc)
            report.setdefault("provenance", {})["threads"] = threads
            write_report(report, out)
    except (ConfigError, SymbolError) as exc:
        print(f"hypdecay: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"hypdecay: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"hypdecay: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = _summary(report)
    if summary:
        print(summary)
    return code


def _summary(report: dict) -> str:
    lines = []
    cls = report.get("classification")
    if cls:
        if cls["prediction"]["status"] == "no_decay":
            lines.append("stability: unstable, no decay predicted")
        else:
            lines.append(f"stability: {cls['stability']['verdict']}; prediction: {cls['prediction']['symbolic']}")
    if "wave_case" in report:
        lines.append(f"wave case: {report['wave_case']['from_parameters']}")
    ver = report.get("verification")
    if ver:
        for row in ver["rows"]:
            q = row["q"]
            lines.append(f"  {row['prediction']} (p,q)=({row['p']:g},{'inf' if math.isinf(q) else f'{q:g}'}): "
                         f"{row['status']}" + (f" [{row.get('flag')}]" if row.get("flag") else ""))
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
