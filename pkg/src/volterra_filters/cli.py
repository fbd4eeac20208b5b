"""Command-line front end.

Commands: fig1, fig2, fig3 (qubit-readout figures), synthesize (optimal
Volterra filter from moments or samples) and tomo (linear tomography).
Every command writes CSV with a header row into ``--out``.

Exit codes: 0 success, 2 configuration/parse error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import readout, tomography
from .errors import IllConditionedMoments, InvalidArgument, InvalidGrid, InvalidModel, UnboundedBound, VolterraError
from .estimation import optimal_error, solve_optimal_filter
from .features import enumerate_features
from .moments import MomentSet, SampleDataset, gaussian_linear_moments, sample_moments

log = logging.getLogger("volterra_filters")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS: Dict[str, Any] = {
    "out": ".",
    "seed": 0,
    "trials": 200_000,
    "snr_db": "10:30:21",
    "snr": "1," + ",".join(str(s) for s in range(10, 201, 10)),
    "dt_over_t1": 1e-3,
    "t_over_t1": 5.0,
    "pi0": 0.5,
    "order": None,
    "tune_threshold": False,
    "batch_size": 500,
}


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def parse_snr_db(spec: str) -> np.ndarray:
    """``LO:HI:POINTS`` -> POINTS values evenly spaced in dB (``LO`` alone is one point)."""
    try:
        parts = [p for p in str(spec).split(":")]
        if len(parts) == 1:
            return np.array([float(parts[0])])
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"--snr-db expects LO:HI:POINTS, got {spec!r}") from exc
    if n < 1:
        raise ConfigError("--snr-db needs at least one point")
    return np.linspace(lo, hi, n)


def parse_snr_list(spec) -> List[float]:
    if isinstance(spec, (list, tuple)):
        vals = [float(v) for v in spec]
    else:
        try:
            vals = [float(v) for v in str(spec).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"--snr expects a comma-separated list, got {spec!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("SNR values must be positive")
    return vals


def _resolve(args: argparse.Namespace) -> Dict[str, Any]:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for key, val in vars(args).items():
        if val is not None and key not in ("func", "config"):
            cfg[key] = val
    return cfg


def _check_readout_cfg(cfg):
    if not (0 < float(cfg["dt_over_t1"]) <= 1):
        raise ConfigError("--dt-over-t1 must lie in (0, 1]")
    if float(cfg["t_over_t1"]) <= 0:
        raise ConfigError("--t-over-t1 must be positive")
    if not (0 < float(cfg["pi0"]) < 1):
        raise ConfigError("--pi0 must lie in (0, 1)")


def _model(cfg, snr: float) -> readout.ReadoutModel:
    return readout.ReadoutModel.from_snr(
        snr, T_over_T1=float(cfg["t_over_t1"]), dt_over_T1=float(cfg["dt_over_t1"]), pi0=float(cfg["pi0"])
    )


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# readout figures


def cmd_fig1(cfg) -> int:
    _check_readout_cfg(cfg)
    rows = []
    for snr in parse_snr_list(cfg["snr"]):
        m = _model(cfg, snr)
        h = readout.solve_fredholm_filter(m)
        norm = 2.0 * m.Pi * h / m.S
        t = m.grid / m.T1
        rows.extend((_fmt(tk), _fmt(snr), _fmt(v)) for tk, v in zip(t, norm))
        log.info("fig1: snr=%g residual=%.2e", snr, readout.fredholm_residual(m, h))
    _write_csv(_out_dir(cfg) / "fig1.csv", ["t_over_T1", "snr", "normalized_filter"], rows)
    return EXIT_OK


def cmd_fig2(cfg) -> int:
    _check_readout_cfg(cfg)
    rows = []
    for db in parse_snr_db(cfg["snr_db"]):
        m = _model(cfg, 10.0 ** (db / 10.0))
        Q, R = readout.readout_bounds(m)
        rows.append((_fmt(db), _fmt(Q), _fmt(R)))
        log.info("fig2: %.2f dB Q=%.4g R=%.4g", db, Q, R)
    _write_csv(_out_dir(cfg) / "fig2.csv", ["snr_db", "Q", "R_tilde"], rows)
    return EXIT_OK


FIG3_HEADER = [
    "snr_db", "pe_ropt", "pe_ropt_ci_lo", "pe_ropt_ci_hi",
    "pe_lrt", "pe_lrt_ci_lo", "pe_lrt_ci_hi", "Q", "R_tilde",
]
TUNED_HEADER = ["pe_ropt_tuned", "pe_ropt_tuned_ci_lo", "pe_ropt_tuned_ci_hi", "threshold_tuned"]


def cmd_fig3(cfg) -> int:
    _check_readout_cfg(cfg)
    trials = int(cfg["trials"])
    if trials < 1000:
        raise ConfigError("--trials must be at least 1000")
    seed = int(cfg["seed"])
    tune = bool(cfg["tune_threshold"])
    rows = []
    for db in parse_snr_db(cfg["snr_db"]):
        m = _model(cfg, 10.0 ** (db / 10.0))
        ev = readout.evaluate_readout(m, trials, seed, tune=tune, batch_size=int(cfg["batch_size"]))
        row = [
            _fmt(db),
            _fmt(ev.ropt.pe_hat), _fmt(ev.ropt.ci_low), _fmt(ev.ropt.ci_high),
            _fmt(ev.lrt.pe_hat), _fmt(ev.lrt.ci_low), _fmt(ev.lrt.ci_high),
            _fmt(ev.Q), _fmt(ev.R_tilde),
        ]
        if tune:
            row += [_fmt(ev.tuned.pe_hat), _fmt(ev.tuned.ci_low), _fmt(ev.tuned.ci_high), _fmt(ev.tuned.threshold)]
        rows.append(row)
        log.info("fig3: %.2f dB ropt=%.4g lrt=%.4g", db, ev.ropt.pe_hat, ev.lrt.pe_hat)
    _write_csv(_out_dir(cfg) / "fig3.csv", FIG3_HEADER + (TUNED_HEADER if tune else []), rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# synthesis


def _moments_from_json(path) -> MomentSet:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        kind = spec.get("type", "moments")
        if kind == "gaussian_linear":
            return gaussian_linear_moments(spec["g"], spec["C_x"], spec["C_y0"], float(spec.get("dt", 1.0)))
        if kind == "moments":
            fs = enumerate_features(int(spec["K"]), int(spec["P"]))
            C_Y = np.asarray(spec["C_Y"], dtype=float)
            C_xY = np.atleast_2d(np.asarray(spec["C_xY"], dtype=float))
            # raw moments: the constant-feature column already is E[x]
            if "mean_x" in spec and not np.allclose(spec["mean_x"], C_xY[:, 0]):
                raise ConfigError(f"{path}: mean_x disagrees with the first column of C_xY")
            return MomentSet(
                fs,
                np.atleast_1d(np.asarray(spec.get("mean_x", C_xY[:, 0]), dtype=float)),
                C_Y[0].copy(),
                np.atleast_2d(np.asarray(spec["C_x"], dtype=float)),
                C_xY,
                C_Y,
            )
        raise ConfigError(f"{path}: unknown moment spec type {kind!r}")
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, VolterraError):
            raise
        raise ConfigError(f"{path}: malformed moment spec: {exc}") from exc


def cmd_synthesize(cfg) -> int:
    order = cfg.get("order")
    if cfg.get("samples"):
        data = SampleDataset.from_csv(cfg["samples"])
        m = sample_moments(data, 1 if order is None else int(order))
    elif cfg.get("moments"):
        m = _moments_from_json(cfg["moments"])
        if order is not None:
            m = m.restrict(int(order))
    else:
        raise ConfigError("synthesize needs --samples CSV or --moments JSON")
    f = solve_optimal_filter(m)
    err = optimal_error(m)
    if f.regularized:
        print(f"warning: C_Y regularised (rcond {f.rcond:.3e})", file=sys.stderr)
    out = _out_dir(cfg)
    f.to_csv(out / "filter.csv")
    _write_csv(out / "error.csv", ["j", "error_variance"], [(j + 1, _fmt(v)) for j, v in enumerate(err.diagonal)])
    return EXIT_OK


# --------------------------------------------------------------------------
# tomography


def _read_records(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: need a header and at least one record")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_tomo(cfg) -> int:
    if not cfg.get("model"):
        raise ConfigError("tomo needs --model JSON")
    try:
        with open(cfg["model"]) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{cfg['model']}: invalid JSON: {exc}") from exc
    model = tomography.TomographyModel.from_dict(spec)
    n_y, n_z = model.A.shape
    n_x = model.B.shape[0]

    gain, offset = tomography.qst_filter(model)
    err = tomography.qst_error(model)
    try:
        bound = np.diag(tomography.minimax_error_bound(model))
    except UnboundedBound as exc:
        print(f"warning: {exc}; minimax bound reported as inf", file=sys.stderr)
        bound = np.full(n_x, np.inf)

    out = _out_dir(cfg)
    summary_header = ["component", "gain_diagonal", "error_variance", "minimax_bound"]
    gain_diag = np.array([gain[i, i] if i < min(gain.shape) else np.nan for i in range(n_x)])
    cols = [gain_diag, err.diagonal, bound]
    if cfg.get("simulate"):
        n = int(cfg["simulate"])
        z, y = tomography.simulate_tomography(model, n, int(cfg["seed"]), cfg.get("prior") or "gaussian")
        sq = (tomography.qst_estimate(model, y) - z @ model.B.T) ** 2
        summary_header += ["empirical_mse", "mse_std_error"]
        cols += [sq.mean(axis=0), sq.std(axis=0) / np.sqrt(n)]
    _write_csv(
        out / "tomo_summary.csv",
        summary_header,
        [[i + 1] + [_fmt(c[i]) for c in cols] for i in range(n_x)],
    )

    records = None
    if cfg.get("records"):
        records = _read_records(cfg["records"])
    elif "records" in spec:
        records = np.atleast_2d(np.asarray(spec["records"], dtype=float))
    if records is not None:
        if records.shape[1] != n_y:
            raise ConfigError(f"records have {records.shape[1]} columns, model expects {n_y}")
        est = tomography.qst_estimate(model, records)
        header = ["record"] + [f"x_{i + 1}" for i in range(n_x)]
        rows = [[r + 1] + [_fmt(v) for v in est[r]] for r in range(len(est))]
        if cfg.get("project"):
            d = int(round(np.sqrt(n_z + 1)))
            if n_x != n_z or not np.allclose(model.B, np.eye(n_z)) or d * d - 1 != n_z:
                raise ConfigError("--project needs B = identity over d^2-1 state parameters")
            basis = tomography.gellmann_basis(d)
            phys = np.array([tomography.project_physical(e, basis) for e in est])
            header += [f"phys_x_{i + 1}" for i in range(n_x)]
            rows = [row + [_fmt(v) for v in phys[r]] for r, row in enumerate(rows)]
        _write_csv(out / "tomo_estimates.csv", header, rows)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volterra-filters", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default values for any flag")
        sp.add_argument("--out", help="output directory (default: .)")
        sp.add_argument("--seed", type=int)
        return sp

    def readout_flags(sp):
        sp.add_argument("--dt-over-t1", type=float, dest="dt_over_t1", help="grid step / T1 (default 1e-3)")
        sp.add_argument("--t-over-t1", type=float, dest="t_over_t1", help="record length / T1 (default 5)")
        sp.add_argument("--pi0", type=float, help="prior of H0 (default 0.5)")
        return sp

    sp = readout_flags(common(sub.add_parser("fig1", help="normalised R-optimal filters vs time")))
    sp.add_argument("--snr", help="comma-separated linear SNR values (default 1,10,20,...,200)")
    sp.set_defaults(func=cmd_fig1)

    sp = readout_flags(common(sub.add_parser("fig2", help="upper bounds Q and R vs SNR")))
    sp.add_argument("--snr-db", dest="snr_db", help="LO:HI:POINTS in dB (default 10:30:21)")
    sp.set_defaults(func=cmd_fig2)

    sp = readout_flags(common(sub.add_parser("fig3", help="Monte Carlo error probabilities vs SNR")))
    sp.add_argument("--snr-db", dest="snr_db", help="LO:HI:POINTS in dB (default 10:30:21)")
    sp.add_argument("--trials", type=int, help="records per SNR, both hypotheses (default 200000)")
    sp.add_argument("--tune-threshold", dest="tune_threshold", action="store_true", default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.set_defaults(func=cmd_fig3)

    sp = common(sub.add_parser("synthesize", help="optimal Volterra filter from moments or samples"))
    sp.add_argument("--samples", help="CSV with columns x_1..x_J,y_1..y_K")
    sp.add_argument("--moments", help="JSON moment or linear-model specification")
    sp.add_argument("--order", type=int, help="filter order P (default 1 for samples)")
    sp.set_defaults(func=cmd_synthesize)

    sp = common(sub.add_parser("tomo", help="linear state tomography"))
    sp.add_argument("--model", help="JSON tomography model")
    sp.add_argument("--records", help="CSV of measurement records (header row, one record per row)")
    sp.add_argument("--project", action="store_true", default=None, help="also emit physical projections")
    sp.add_argument("--simulate", type=int, help="simulate N trials and report the empirical MSE")
    sp.add_argument("--prior", choices=["gaussian", "bloch"], help="prior used by --simulate")
    sp.set_defaults(func=cmd_tomo)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    func = args.func
    del args.verbose
    try:
        cfg = _resolve(args)
        return func(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IllConditionedMoments as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgument, InvalidModel, InvalidGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VolterraError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
