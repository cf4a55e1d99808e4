"""Sensor-log preprocessing: impute, scale, window, estimate, bundle.

The pipeline turns a raw timestamped CSV of mixed continuous/discrete
channels into a replayable dataset: linear time interpolation for
continuous columns, forward/backward fill for discrete ones, robust
scaling fit on a training prefix only, non-overlapping window means,
and a ridge-regularized covariance estimate from the normal windows.
Every step is deterministic, so the same file and config produce a
byte-identical bundle.

Label convention: 0 = normal, any nonzero value = anomalous row.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .covmodel import CovarianceModel, load_matrix_csv, save_matrix_csv
from .environment import ReplayInstance
from .errors import IngestError, NumericError

RIDGE_DEFAULT = 1e-6
RIDGE_CEILING = 1e-2
DISCRETE_CARDINALITY = 10
DELTA_FLOOR = 1e-3

MODEL_FILE = "model.json"
META_FILE = "meta.json"
WINDOWS_FILE = "windows.csv"
SIGMA_FILE = "sigma.csv"


@dataclass(frozen=True)
class IngestConfig:
    """Knobs for one ingest run.

    ``timestamp_col`` may be a single column name or a (date, time) pair
    that gets merged. ``training_rows`` fixes the stats prefix; None means
    "rows before the first labeled anomaly" (all rows when unlabeled).
    """

    timestamp_col: str | tuple[str, str] = "timestamp"
    label_col: str | None = None
    window_seconds: int = 60
    training_rows: int | None = None
    ridge: float = RIDGE_DEFAULT

    def __post_init__(self):
        if self.window_seconds < 1:
            raise IngestError("window_seconds must be >= 1")
        if self.training_rows is not None and self.training_rows < 2:
            raise IngestError("training_rows must be >= 2")
        if self.ridge < 0.0:
            raise IngestError("ridge must be nonnegative")


@dataclass(frozen=True)
class ColumnRecord:
    name: str
    kind: str                 # continuous | discrete | dropped
    reason: str | None = None  # all-empty | zero-variance (dropped only)


@dataclass
class RawTable:
    """Cleaned sensor table: datetime index, no missing cells, drop log."""

    frame: pd.DataFrame
    labels: np.ndarray | None
    columns: list[ColumnRecord]
    train_rows: int

    @property
    def kept(self) -> list[str]:
        return [c.name for c in self.columns if c.kind != "dropped"]

    @property
    def dropped(self) -> list[ColumnRecord]:
        return [c for c in self.columns if c.kind == "dropped"]


@dataclass(frozen=True)
class ScalerParams:
    names: tuple[str, ...]
    median: np.ndarray
    iqr: np.ndarray           # raw IQR; zeros replaced by 1.0 in `divisor`

    @property
    def divisor(self) -> np.ndarray:
        return np.where(self.iqr > 0.0, self.iqr, 1.0)


@dataclass
class PreprocessedDataset:
    windows: np.ndarray        # T_w x K' scaled window means
    window_labels: np.ndarray | None
    column_names: tuple[str, ...]
    mu0: np.ndarray
    sigma_reg: np.ndarray
    ridge_used: float
    scaler: ScalerParams
    window_seconds: int
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# parsing and cleaning


def _merge_timestamps(df: pd.DataFrame, config: IngestConfig) -> pd.DatetimeIndex:
    if isinstance(config.timestamp_col, tuple):
        date_col, time_col = config.timestamp_col
        for col in (date_col, time_col):
            if col not in df.columns:
                raise IngestError(f"timestamp column {col!r} missing")
        text = df[date_col].astype(str).str.strip() + " " + df[time_col].astype(str).str.strip()
    else:
        if config.timestamp_col not in df.columns:
            raise IngestError(f"timestamp column {config.timestamp_col!r} missing")
        text = df[config.timestamp_col].astype(str).str.strip()
    stamps = pd.to_datetime(text, errors="coerce", format="mixed")
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        raise IngestError(f"unparseable timestamp at row {int(bad[0])}: {text.iloc[int(bad[0])]!r}")
    diffs = stamps.diff().dropna()
    non_increasing = np.flatnonzero((diffs <= pd.Timedelta(0)).to_numpy())
    if non_increasing.size:
        raise IngestError(
            f"timestamps not strictly increasing at row {int(non_increasing[0]) + 1}")
    return pd.DatetimeIndex(stamps)


def _column_kind(name: str, values: pd.Series) -> str:
    upper = name.upper()
    if "PV" in upper:
        return "continuous"
    if "STATUS" in upper:
        return "discrete"
    return "discrete" if values.dropna().nunique() <= DISCRETE_CARDINALITY else "continuous"


def classify_and_impute(df: pd.DataFrame, config: IngestConfig) -> RawTable:
    """Classify columns, drop the useless ones, and fill every gap.

    Continuous columns get linear interpolation against the time index
    (edges extended with the nearest value); discrete columns get
    forward- then backward-fill. Columns entirely empty, or constant on
    the training prefix after imputation, are dropped with a reason.
    """
    index = _merge_timestamps(df, config)
    ts_cols = (list(config.timestamp_col) if isinstance(config.timestamp_col, tuple)
               else [config.timestamp_col])
    sensors = df.drop(columns=ts_cols)

    labels = None
    if config.label_col is not None:
        if config.label_col not in sensors.columns:
            raise IngestError(f"label column {config.label_col!r} missing")
        raw = pd.to_numeric(sensors.pop(config.label_col), errors="coerce").fillna(0.0)
        labels = (raw.to_numpy() != 0.0).astype(int)

    if config.training_rows is not None:
        train_rows = min(config.training_rows, len(sensors))
    elif labels is not None and labels.any():
        train_rows = int(np.argmax(labels))
    else:
        train_rows = len(sensors)
    if train_rows < 2:
        raise IngestError("training prefix has fewer than 2 rows")

    records: list[ColumnRecord] = []
    kept = {}
    for name in sensors.columns:
        col = pd.to_numeric(sensors[name], errors="coerce")
        if col.dropna().empty:
            records.append(ColumnRecord(name, "dropped", "all-empty"))
            continue
        kind = _column_kind(name, col)
        col.index = index
        if kind == "continuous":
            filled = col.interpolate(method="time", limit_direction="both")
        else:
            filled = col.ffill().bfill()
        # nunique, not std: float summation error makes the std of a long
        # constant column slightly nonzero
        if filled.iloc[:train_rows].nunique() == 1:
            records.append(ColumnRecord(name, "dropped", "zero-variance"))
            continue
        records.append(ColumnRecord(name, kind))
        kept[name] = filled

    if not kept:
        raise IngestError("no usable sensor columns survived cleaning")
    frame = pd.DataFrame(kept, index=index)
    if frame.isna().any().any():
        raise IngestError("imputation left missing cells")  # pragma: no cover
    return RawTable(frame=frame, labels=labels, columns=records,
                    train_rows=train_rows)


def robust_scale(table: RawTable) -> tuple[RawTable, ScalerParams]:
    """Center on the training median, scale by the training IQR.

    Quantiles use linear interpolation; a zero IQR falls back to a
    divisor of 1 (center-only). Only the training prefix informs the
    parameters, so later rows can never leak into them.
    """
    train = table.frame.iloc[:table.train_rows]
    median = train.median().to_numpy(dtype=float)
    q1 = train.quantile(0.25).to_numpy(dtype=float)
    q3 = train.quantile(0.75).to_numpy(dtype=float)
    params = ScalerParams(names=tuple(table.frame.columns),
                          median=median, iqr=q3 - q1)
    scaled = (table.frame - median) / params.divisor
    return (RawTable(frame=scaled, labels=table.labels, columns=table.columns,
                     train_rows=table.train_rows), params)


# ---------------------------------------------------------------------------
# windowing and estimation


def window_means(table: RawTable, window_seconds: int
                 ) -> tuple[np.ndarray, np.ndarray | None, np.ndarray, np.ndarray]:
    """Mean over consecutive ``window_seconds`` buckets of the time axis.

    Buckets are anchored at the first timestamp. The trailing bucket is
    kept only when the data's time span reaches its end boundary (within
    one sampling interval) — a partial tail is dropped. Returns (means,
    per-window labels or None, first raw-row index per window, rows per
    window); a window is anomalous when any row inside it is.
    """
    if window_seconds < 1:
        raise IngestError("window_seconds must be >= 1")
    offsets = (table.frame.index - table.frame.index[0]).total_seconds().to_numpy()
    buckets = np.floor(offsets / float(window_seconds)).astype(int)
    ids, starts, counts = np.unique(buckets, return_index=True, return_counts=True)
    cadence = float(np.median(np.diff(offsets))) if offsets.size > 1 else 1.0
    if offsets[-1] < (ids[-1] + 1) * window_seconds - cadence:
        ids, starts, counts = ids[:-1], starts[:-1], counts[:-1]
    if ids.size == 0:
        raise IngestError(f"fewer rows than one {window_seconds}s window")

    values = table.frame.to_numpy(dtype=float)
    sums = np.add.reduceat(values, starts, axis=0)
    # reduceat spans to the end for the final bucket; re-slice if trimmed
    if starts.size and starts[-1] + counts[-1] < values.shape[0]:
        sums[-1] = values[starts[-1]:starts[-1] + counts[-1]].sum(axis=0)
    means = sums / counts[:, None]

    labels = None
    if table.labels is not None:
        labels = np.array([int(table.labels[s:s + c].any())
                           for s, c in zip(starts, counts)])
    return means, labels, starts, counts


def estimate_model(windows: np.ndarray, ridge: float = RIDGE_DEFAULT) -> tuple[np.ndarray, np.ndarray, float]:
    """Column means and a ridge-stabilized sample covariance (N-1 denominator).

    The ridge escalates tenfold until the matrix passes a Cholesky
    factorization, giving up past 1e-2. Returns (mu0, sigma_reg, ridge_used).
    """
    x = np.asarray(windows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise IngestError("need at least 2 windows to estimate a model")
    n, k = x.shape
    if n < k + 1:
        warnings.warn(f"only {n} training windows for {k} channels; "
                      "covariance estimate will be rank-deficient", stacklevel=2)
    mu0 = x.mean(axis=0)
    centered = x - mu0
    sigma_hat = (centered.T @ centered) / (n - 1)

    lam = float(ridge)
    while True:
        candidate = sigma_hat + lam * np.eye(k)
        try:
            np.linalg.cholesky(candidate)
            return mu0, candidate, lam
        except np.linalg.LinAlgError:
            lam = RIDGE_DEFAULT if lam == 0.0 else lam * 10.0
            if lam > RIDGE_CEILING:
                raise NumericError(
                    f"covariance not positive definite even at ridge {RIDGE_CEILING:g}")


def ingest_csv(path: str | Path, config: IngestConfig) -> PreprocessedDataset:
    """Full pipeline: CSV file -> PreprocessedDataset."""
    df = pd.read_csv(path)
    raw = classify_and_impute(df, config)
    scaled, scaler = robust_scale(raw)
    means, labels, starts, counts = window_means(scaled, config.window_seconds)

    # model fit: windows fully inside the training prefix and label-free
    in_train = (starts + counts) <= raw.train_rows
    normal = in_train if labels is None else in_train & (labels == 0)
    if normal.sum() < 2:
        raise IngestError("fewer than 2 normal training windows; "
                          "extend training_rows or shrink the window")
    mu0, sigma_reg, lam = estimate_model(means[normal], config.ridge)

    meta = {
        "n_raw_rows": int(len(df)),
        "n_sensor_columns": len(raw.columns),
        "n_kept_columns": len(raw.kept),
        "dropped": [{"name": c.name, "reason": c.reason} for c in raw.dropped],
        "kinds": {c.name: c.kind for c in raw.columns if c.kind != "dropped"},
        "train_rows": raw.train_rows,
        "n_windows": int(means.shape[0]),
        "n_training_windows": int(normal.sum()),
        "n_anomalous_windows": int(labels.sum()) if labels is not None else 0,
    }
    return PreprocessedDataset(windows=means, window_labels=labels,
                               column_names=tuple(raw.kept), mu0=mu0,
                               sigma_reg=sigma_reg, ridge_used=lam,
                               scaler=scaler, window_seconds=config.window_seconds,
                               meta=meta)


# ---------------------------------------------------------------------------
# bundle I/O


def write_bundle(dataset: PreprocessedDataset, out_dir: str | Path) -> Path:
    """windows.csv + sigma.csv + model.json + meta.json, all deterministic."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    header = ["window"] + (["label"] if dataset.window_labels is not None else [])
    header += list(dataset.column_names)
    lines = [",".join(header)]
    for i in range(dataset.windows.shape[0]):
        cells = [str(i)]
        if dataset.window_labels is not None:
            cells.append(str(int(dataset.window_labels[i])))
        cells += [repr(float(v)) for v in dataset.windows[i]]
        lines.append(",".join(cells))
    (out / WINDOWS_FILE).write_text("\n".join(lines) + "\n")

    save_matrix_csv(dataset.sigma_reg, out / SIGMA_FILE)

    model = {
        "schema": 1,
        "columns": list(dataset.column_names),
        "mu0": [float(v) for v in dataset.mu0],
        "sigma_csv": SIGMA_FILE,
        "ridge": dataset.ridge_used,
        "window_seconds": dataset.window_seconds,
        "scaler": {
            "median": [float(v) for v in dataset.scaler.median],
            "iqr": [float(v) for v in dataset.scaler.iqr],
        },
    }
    with open(out / MODEL_FILE, "w") as fh:
        json.dump(model, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / META_FILE, "w") as fh:
        json.dump(dataset.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_bundle(bundle_dir: str | Path) -> dict:
    """Load a bundle back into arrays; inverse of write_bundle."""
    bundle = Path(bundle_dir)
    for name in (WINDOWS_FILE, MODEL_FILE, META_FILE):
        if not (bundle / name).exists():
            raise IngestError(f"bundle incomplete: {name} missing in {bundle}")
    with open(bundle / MODEL_FILE) as fh:
        model = json.load(fh)
    frame = pd.read_csv(bundle / WINDOWS_FILE, float_precision="round_trip")
    labels = frame["label"].to_numpy(dtype=int) if "label" in frame.columns else None
    windows = frame[model["columns"]].to_numpy(dtype=float)
    sigma = load_matrix_csv(bundle / model["sigma_csv"])
    with open(bundle / META_FILE) as fh:
        meta = json.load(fh)
    return {"windows": windows, "labels": labels, "model": model,
            "sigma": sigma, "meta": meta}


def replay_from_bundle(bundle_dir: str | Path, *, budget: float,
                       n: int = 1, anomalous: tuple[int, ...] | None = None,
                       delta: float | None = None) -> ReplayInstance:
    """Build a replayable instance from a bundle.

    The anomalous set comes from ``anomalous`` when given; otherwise the
    top-n channels by |mean deviation| over labeled windows (labels
    required). ``delta`` overrides the per-channel deviation magnitudes
    that are otherwise measured from the same labeled windows.
    """
    data = read_bundle(bundle_dir)
    windows, labels = data["windows"], data["labels"]
    mu0 = np.asarray(data["model"]["mu0"], dtype=float)
    k = windows.shape[1]

    dev = None
    if labels is not None and labels.any():
        dev = windows[labels != 0].mean(axis=0) - mu0
    if anomalous is not None:
        s_star = tuple(sorted(int(i) for i in anomalous))
        if len(s_star) != len(set(s_star)) or any(not 0 <= i < k for i in s_star):
            raise IngestError(f"anomalous indices must be distinct and in [0, {k})")
    elif dev is not None:
        order = np.argsort(-np.abs(dev), kind="stable")
        s_star = tuple(sorted(int(i) for i in order[:n]))
    else:
        raise IngestError("replay needs labeled windows or an explicit anomalous set")

    if delta is not None:
        deltas = np.full(k, float(delta))
    elif dev is not None:
        # one hypothesized shift magnitude for every channel: the mean
        # attack-window deviation of the anomalous set (per-channel
        # magnitudes would make null-channel contrasts infeasible)
        scale = float(np.mean(np.abs(dev)[list(s_star)]))
        deltas = np.full(k, max(scale, DELTA_FLOOR))
    else:
        deltas = np.ones(k)

    cov = CovarianceModel.from_matrix(data["sigma"])
    return ReplayInstance(windows=windows, k=k, n=len(s_star), s_star=s_star,
                          delta=deltas, mu0=mu0, cov=cov, budget=float(budget))
