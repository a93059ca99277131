"""Monte-Carlo laboratory for the focused estimator and its intervals.

Data are generated from the summary-data model with known standard errors
``1/sqrt(n)``; true exposure associations are equal within the core and
within the additional set and are scaled to hit the requested
concentration parameters. Direct effects on the outcome are fixed effects:
they are drawn once per master seed and reused by every replication.

Seeds: every random stream is derived from ``(master_seed, stream, ...)``
through :class:`numpy.random.SeedSequence`, so replication ``r`` always sees
the same numbers regardless of how replications are scheduled.
"""

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import postsel
from .exceptions import FocusedMRError
from .focus import focused_estimate
from .summary_data import Dataset

TAU_STREAM, DATA_STREAM, MC_STREAM = 1, 2, 3
FAILURE_CAP = 0.10
ESTIMATORS = ("core", "full", "focused")


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    p: int = 110
    n_core: int = 10
    lambda_c: float = 40.0
    lambda_s: float = 40.0
    tau_bar: float = 0.0
    tau_bar_c: float = 0.0
    theta0: float = 0.2
    reps: int = 1000
    alpha: float = 0.05
    gamma: float = 0.2
    mc_draws: int = 5000
    master_seed: int = 0
    grid_size: int = postsel.DEFAULT_GRID
    intervals: bool = True

    def __post_init__(self):
        if not 1 <= self.n_core < self.p:
            raise ValueError("need 1 <= n_core < p")
        for name in ("n", "reps", "mc_draws", "grid_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_c", "lambda_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau_bar", "tau_bar_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.alpha < 1 or not 0 < self.gamma < 1:
            raise ValueError("alpha and gamma must lie in (0, 1)")

    @property
    def n_add(self):
        return self.p - self.n_core


@dataclass
class CellSummary:
    config: SimConfig
    rmse: dict
    coverage: dict
    mean_length: dict
    selection_frequency: dict
    mc_error: dict
    mean_b_hat: float
    true_b: float
    failures: int
    completed: int
    focused_degraded: int
    valid: bool
    seconds: float = 0.0


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def truth(config):
    """True associations and direct effects for a configuration.

    Returns ``(beta_x, beta_y, tau, sigma)`` where ``sigma`` is the common
    standard error.
    """
    n, p, m = config.n, config.p, config.n_core
    bar_c = math.sqrt(config.lambda_c * m / n)
    bar_s = math.sqrt(config.lambda_s * (p - m) / n)
    beta_x = np.concatenate([np.full(m, bar_c / math.sqrt(m)),
                             np.full(p - m, bar_s / math.sqrt(p - m))])
    # Uniform draws are shared across tau_bar values so designs differ only in scale.
    u = _rng(config.master_seed, TAU_STREAM).random(p)
    scale = 1.0 / math.sqrt(n * p)
    tau = np.concatenate([config.tau_bar_c * scale * u[:m], config.tau_bar * scale * u[m:]])
    beta_y = beta_x * config.theta0 + tau
    return beta_x, beta_y, tau, 1.0 / math.sqrt(n)


def true_bias(config):
    """Asymptotic bias of the full-set estimator under the simulation truth."""
    beta_x, _, tau, sigma = truth(config)
    omega = sigma**2 * (1.0 + config.theta0**2)
    m = config.n_core
    eta_c = np.sum(beta_x[:m] ** 2) / omega
    eta_s = np.sum(beta_x[m:] ** 2) / omega
    return float(np.sum(beta_x[m:] * tau[m:]) / omega / (eta_c + eta_s))


def generate(config, rep_index):
    """Dataset for replication ``rep_index`` (core variants first)."""
    beta_x, beta_y, _, sigma = truth(config)
    rng = _rng(config.master_seed, DATA_STREAM, rep_index)
    p = config.p
    bx = beta_x + sigma * rng.standard_normal(p)
    by = beta_y + sigma * rng.standard_normal(p)
    se = np.full(p, sigma)
    core = np.arange(p) < config.n_core
    return Dataset.from_arrays(bx, se, by, se, core)


def _one_rep(config, rep_index):
    ds = generate(config, rep_index)
    sel = focused_estimate(ds)
    row = {
        "core": sel.core_fit.theta_hat,
        "full": sel.candidate_fits[1].theta_hat if 1 in sel.candidate_fits else float("nan"),
        "focused": sel.theta_hat,
        "selected": 0 if sel.chosen.is_core else sel.chosen.k,
        "b_hat": sel.bias_estimates[0].b_hat if sel.bias_estimates else float("nan"),
    }
    if config.intervals:
        seed = int(_rng(config.master_seed, MC_STREAM, rep_index).integers(2**63 - 1))
        ivs = postsel.all_intervals(ds, sel, config.alpha, config.gamma, config.mc_draws,
                                    seed, config.grid_size)
        row["intervals"] = {m: (iv.lower, iv.upper) for m, iv in ivs.items()}
        row["degraded"] = ivs[postsel.FOCUSED].degraded
    return row


def _run_reps(config, reps):
    out = []
    for r in reps:
        try:
            out.append(_one_rep(config, r))
        except (FocusedMRError, FloatingPointError) as exc:
            out.append({"error": str(exc)})
    return out


def _chunks(n, parts):
    size = max(1, math.ceil(n / parts))
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def run_cell(config, workers=1, executor=None):
    """Run all replications of one configuration and aggregate them.

    Aggregates are computed in replication order, so the result does not
    depend on ``workers``.
    """
    start = time.perf_counter()
    if workers > 1 or executor is not None:
        chunks = _chunks(config.reps, 4 * max(workers, 1))
        if executor is None:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_run_reps, [config] * len(chunks), chunks))
        else:
            parts = list(executor.map(_run_reps, [config] * len(chunks), chunks))
        rows = [row for part in parts for row in part]
    else:
        rows = _run_reps(config, range(config.reps))
    summary = summarize(config, rows)
    summary.seconds = time.perf_counter() - start
    return summary


def summarize(config, rows):
    ok = [r for r in rows if "error" not in r]
    failures = len(rows) - len(ok)
    n_ok = len(ok)
    theta0 = config.theta0
    nan = float("nan")

    rmse, mc_error = {}, {}
    for est in ESTIMATORS:
        err2 = np.array([(r[est] - theta0) ** 2 for r in ok], dtype=float)
        rmse[est] = float(math.sqrt(err2.mean())) if n_ok else nan
        mc_error[f"rmse_{est}"] = (
            float(err2.std(ddof=1) / (2 * rmse[est] * math.sqrt(n_ok)))
            if n_ok > 1 and rmse[est] > 0 else nan
        )

    coverage, mean_length = {}, {}
    if config.intervals:
        for m in postsel.METHODS:
            bounds = np.array([r["intervals"][m] for r in ok], dtype=float).reshape(-1, 2)
            hit = (bounds[:, 0] <= theta0) & (theta0 <= bounds[:, 1])
            coverage[m] = float(hit.mean()) if n_ok else nan
            mean_length[m] = float((bounds[:, 1] - bounds[:, 0]).mean()) if n_ok else nan
            mc_error[f"coverage_{m}"] = (
                math.sqrt(coverage[m] * (1 - coverage[m]) / n_ok) if n_ok else nan
            )
    selected = np.array([r["selected"] for r in ok], dtype=int)
    freq = {"core": float(np.mean(selected == 0)) if n_ok else nan}
    for k in sorted(set(selected.tolist()) - {0}) or [1]:
        freq[f"S{k}"] = float(np.mean(selected == k)) if n_ok else nan
    b_hat = np.array([r["b_hat"] for r in ok], dtype=float)
    return CellSummary(
        config=config,
        rmse=rmse,
        coverage=coverage,
        mean_length=mean_length,
        selection_frequency=freq,
        mc_error=mc_error,
        mean_b_hat=float(np.nanmean(b_hat)) if n_ok else nan,
        true_b=true_bias(config),
        failures=failures,
        completed=n_ok,
        focused_degraded=int(sum(bool(r.get("degraded")) for r in ok)),
        valid=failures <= FAILURE_CAP * len(rows),
    )


def run_grid(base, tau_bar_values, lambda_pairs, workers=1, progress=None):
    """Run :func:`run_cell` over every ``(lambda_c, lambda_s)`` and ``tau_bar``.

    Cells are ordered by lambda pair, then by ``tau_bar``. ``progress`` is
    called with each finished :class:`CellSummary`.
    """
    cells = [replace(base, lambda_c=float(lc), lambda_s=float(ls), tau_bar=float(t))
             for lc, ls in lambda_pairs for t in tau_bar_values]
    out = []
    if not cells:
        return out
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cfg in cells:
            summary = run_cell(cfg, workers=workers, executor=executor)
            out.append(summary)
            if progress is not None:
                progress(summary)
    finally:
        if executor is not None:
            executor.shutdown()
    return out


CONFIG_COLUMNS = tuple(f.name for f in fields(SimConfig))


def csv_header():
    cols = list(CONFIG_COLUMNS)
    cols += [f"rmse_{e}" for e in ESTIMATORS]
    cols += ["rmse_ratio_focused_core"]
    cols += [f"coverage_{m}" for m in postsel.METHODS]
    cols += [f"length_{m}" for m in postsel.METHODS]
    cols += [f"mcse_coverage_{m}" for m in postsel.METHODS]
    cols += [f"mcse_rmse_{e}" for e in ESTIMATORS]
    cols += ["select_core", "select_full", "mean_b_hat", "true_b",
             "completed", "failures", "focused_degraded", "valid"]
    return cols


def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".9g")
    return str(value)


def csv_row(cell):
    cfg = asdict(cell.config)
    row = [cfg[c] for c in CONFIG_COLUMNS]
    row += [cell.rmse.get(e, float("nan")) for e in ESTIMATORS]
    ratio = cell.rmse["focused"] / cell.rmse["core"] if cell.rmse["core"] > 0 else float("nan")
    row += [ratio]
    row += [cell.coverage.get(m, float("nan")) for m in postsel.METHODS]
    row += [cell.mean_length.get(m, float("nan")) for m in postsel.METHODS]
    row += [cell.mc_error.get(f"coverage_{m}", float("nan")) for m in postsel.METHODS]
    row += [cell.mc_error.get(f"rmse_{e}", float("nan")) for e in ESTIMATORS]
    freq = cell.selection_frequency
    row += [freq.get("core", float("nan")),
            sum(v for k, v in freq.items() if k != "core"),
            cell.mean_b_hat, cell.true_b,
            cell.completed, cell.failures, cell.focused_degraded, cell.valid]
    return [_fmt(v) for v in row]


def write_csv(cells, sink):
    """Write one row per cell; floats carry 9 significant digits."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(csv_header())
    for cell in cells:
        writer.writerow(csv_row(cell))
