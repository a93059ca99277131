"""Command-line interface.

``focusedmr analyze`` runs selection and all five intervals on a TSV of
summary statistics. ``focusedmr simulate`` runs a simulation grid described
by a key=value config file and writes one CSV row per cell.

Exit codes: 0 success, 2 input/format/config errors, 3 estimation errors.
"""

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import fields, replace

from . import __version__, postsel, simlab
from .exceptions import EstimationError, NumericError
from .focus import focused_estimate, kmeans_candidates
from .summary_data import concentration, read_tsv, validate

SCHEMA_VERSION = 1
EXIT_INPUT = 2
EXIT_ESTIMATION = 3
GRID_KEYS = ("tau_bar_values", "lambda_pairs")


class ConfigError(ValueError):
    pass


def _round9(value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(format(value, ".9g"))
    if isinstance(value, dict):
        return {str(k): _round9(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round9(v) for v in value]
    return _round9(float(value))


def _parse_candidates(text):
    if text == "full":
        return None
    head, _, tail = text.partition(":")
    if head == "kmeans" and tail.isdigit() and int(tail) >= 1:
        return int(tail)
    raise argparse.ArgumentTypeError(f"expected 'full' or 'kmeans:<k>', got {text!r}")


def _level(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def build_report(ds, alpha=0.05, gamma=0.2, candidates=None, mc_draws=10_000, seed=0,
                 grid_size=postsel.DEFAULT_GRID):
    """Analyze ``ds`` and return the report as a plain dict (unrounded).

    ``candidates`` is None for the full set or an int ``k`` for k-means unions.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cand_sets = None if candidates is None else kmeans_candidates(ds, candidates)
        sel = focused_estimate(ds, cand_sets)
        ivs = postsel.all_intervals(ds, sel, alpha, gamma, mc_draws, seed, grid_size)
    notes = validate(ds) + [str(w.message) for w in caught]

    bias = {b.set.k: b for b in sel.bias_estimates}
    cand_rows = []
    for c in sel.candidates:
        fit = sel.candidate_fits[c.k]
        cand_rows.append({
            "name": c.name,
            "k": c.k,
            "n_variants": len(c),
            "n_additional": len(c) - ds.core_count,
            "theta_hat": fit.theta_hat,
            "variance": fit.variance,
            "b_hat": bias[c.k].b_hat,
            "b_variance": bias[c.k].var_b,
            "w": sel.w_stats[c.k],
        })
    intervals = {}
    for method, iv in ivs.items():
        intervals[method] = {
            "lower": iv.lower,
            "upper": iv.upper,
            "length": iv.length,
            "alpha1": iv.alpha1,
            "alpha2": iv.alpha2,
            "b_star": list(iv.b_star) if iv.b_star is not None else None,
            "degraded": iv.degraded,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "focusedmr", "version": __version__},
        "settings": {
            "alpha": alpha,
            "gamma": gamma,
            "candidates": "full" if candidates is None else f"kmeans:{candidates}",
            "mc_draws": mc_draws,
            "seed": seed,
            "grid_size": grid_size,
        },
        "data": {
            "n_variants": ds.total_count,
            "n_core": ds.core_count,
            "n_additional": ds.total_count - ds.core_count,
        },
        "core": {"theta_hat": sel.core_fit.theta_hat, "variance": sel.core_fit.variance},
        "K": len(sel.candidates),
        "candidates": cand_rows,
        "excluded": [{"k": k, "reason": why} for k, why in sel.excluded],
        "chosen": {
            "name": sel.chosen.name,
            "n_variants": len(sel.chosen),
            "theta_hat": sel.theta_hat,
            "variance": sel.variance,
        },
        "intervals": intervals,
        "diagnostics": {
            "core_concentration": concentration(ds, ds.core_indices),
            "additional_concentration": concentration(ds, ds.additional_indices),
            "degraded": sel.degraded,
            "warnings": notes,
        },
    }


def report_json(report):
    return json.dumps(_round9(report), sort_keys=True, indent=2) + "\n"


def _flatten(prefix, value, out):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, list) and value and isinstance(value[0], dict):
        for i, item in enumerate(value):
            _flatten(f"{prefix}.{i}", item, out)
    elif isinstance(value, list):
        out.append((prefix, ";".join("" if v is None else str(v) for v in value)))
    else:
        out.append((prefix, "" if value is None else str(value)))


def report_csv(report):
    """Report as two-column ``field,value`` CSV with dotted field paths."""
    rows = []
    _flatten("", _round9(report), rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "value"])
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_analyze(args):
    try:
        ds = read_tsv(args.data)
    except OSError as exc:
        print(f"error: cannot read {args.data}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {args.data}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = build_report(ds, args.alpha, args.gamma, args.candidates, args.mc_draws,
                              args.seed)
    except (EstimationError, NumericError) as exc:
        print(f"error: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = report_json(report) if args.format == "json" else report_csv(report)
    _emit(text, args.out)
    return 0


_CONFIG_TYPES = {f.name: type(f.default) for f in fields(simlab.SimConfig)}


def _convert(key, raw):
    kind = _CONFIG_TYPES[key]
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes"):
                return True
            if low in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: invalid value {raw!r}") from None


def _float_list(key, raw):
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: invalid list {raw!r}") from None


def _pair_list(key, raw):
    pairs = []
    for item in raw.split(","):
        if not item.strip():
            continue
        parts = item.split(":")
        try:
            if len(parts) != 2:
                raise ValueError(item)
            pairs.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"{key}: expected lambda_c:lambda_s pairs, got {item.strip()!r}") from None
    return pairs


def parse_config(text):
    """Parse a simulation config into ``(base SimConfig, tau_bar_values, lambda_pairs)``.

    One ``key=value`` per line; ``#`` starts a comment. Keys are the
    :class:`SimConfig` fields plus ``tau_bar_values`` (comma-separated)
    and ``lambda_pairs`` (comma-separated ``lc:ls``). Missing grid lists
    default to the single value in the base config.
    """
    values, grids = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key in values or key in grids:
            raise ConfigError(f"{key}: given more than once")
        if key == "tau_bar_values":
            grids[key] = _float_list(key, raw)
        elif key == "lambda_pairs":
            grids[key] = _pair_list(key, raw)
        elif key in _CONFIG_TYPES:
            values[key] = _convert(key, raw)
        else:
            raise ConfigError(f"{key}: unknown key")
    for key in GRID_KEYS:
        if key in grids and not grids[key]:
            raise ConfigError(f"{key}: empty list")
    try:
        base = replace(simlab.SimConfig(), **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    taus = grids.get("tau_bar_values", [base.tau_bar])
    pairs = grids.get("lambda_pairs", [(base.lambda_c, base.lambda_s)])
    for t in taus:
        if t < 0:
            raise ConfigError(f"tau_bar_values: negative value {t}")
    for lc, ls in pairs:
        if not (lc > 0 and ls > 0):
            raise ConfigError(f"lambda_pairs: nonpositive value in {lc}:{ls}")
    return base, taus, pairs


def _cell_line(cell):
    c = cell.config
    parts = [f"lambda={c.lambda_c:g}/{c.lambda_s:g}", f"tau_bar={c.tau_bar:g}",
             f"rmse_ratio={cell.rmse['focused'] / cell.rmse['core']:.3f}"]
    if cell.coverage:
        parts.append("coverage " + " ".join(f"{m}={v:.3f}" for m, v in cell.coverage.items()))
    parts.append(f"failures={cell.failures}")
    parts.append(f"{cell.seconds:.1f}s")
    return "cell " + " ".join(parts)


def cmd_simulate(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        base, taus, pairs = parse_config(text)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_INPUT

    def progress(cell):
        print(_cell_line(cell), file=sys.stderr, flush=True)

    cells = simlab.run_grid(base, taus, pairs, workers=args.threads, progress=progress)
    buf = io.StringIO()
    simlab.write_csv(cells, buf)
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="focusedmr",
        description="Focused instrument selection for summary-data Mendelian randomization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="analyze a TSV of summary statistics")
    an.add_argument("--data", required=True, help="TSV with columns " + ", ".join(
        ("id", "beta_exposure", "se_exposure", "beta_outcome", "se_outcome", "core")))
    an.add_argument("--alpha", type=_level, default=0.05)
    an.add_argument("--gamma", type=_level, default=0.2)
    an.add_argument("--candidates", type=_parse_candidates, default=None,
                    metavar="full|kmeans:<k>", help="candidate sets (default: full)")
    an.add_argument("--mc-draws", type=_positive_int, default=10_000)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--format", choices=("json", "csv"), default="json")
    an.add_argument("--out", default=None, help="output path (default: stdout)")
    an.set_defaults(func=cmd_analyze)

    sim = sub.add_parser("simulate", help="run a simulation grid from a config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None, help="CSV path (default: stdout)")
    sim.add_argument("--threads", type=_positive_int, default=1)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "analyze" and args.mc_draws < postsel.MIN_DRAWS:
        print(f"error: --mc-draws must be at least {postsel.MIN_DRAWS}", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
