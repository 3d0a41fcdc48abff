"""Command-line front end.

Subcommands: ``test`` (run the multi-view test on CSV data), ``simulate``
(Monte Carlo size/power for a cataloged scenario), ``scatter`` (observed
plus permuted per-view statistics for plotting) and ``returns`` (turn a
price panel into before/after daily-returns matrices).

Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 degenerate
statistic. All file output is written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import independence_report
from .dissim import SampleMatrix
from .errors import DataError, DegenerateStatisticError, MatesError
from .graphs import GraphSpec, ViewSpec, build_views
from .inference import MatesResult, mates_test, scatter_data
from .simbench import (
    EXPERIMENT_CSV_HEADER,
    load_scenario_config,
    make_scenario,
    run_experiment,
)

__all__ = ["main", "TestReport"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


# ---------------------------------------------------------------------------
# small I/O helpers


def _atomic_write(path: str, text: str) -> None:
    # renaming over a device node, FIFO or symlink would replace the node
    # itself; those targets get a plain in-place write instead
    if os.path.islink(path) or (os.path.exists(path) and not os.path.isfile(path)):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mates-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        _atomic_write(out, text)


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as handle:
            rows = [row for row in csv.reader(handle) if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")
    return rows


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _read_numeric_csv(path: str) -> np.ndarray:
    """Numeric matrix from a CSV file, tolerating one header row."""
    rows = _read_rows(path)
    start = 0 if all(_is_float(c) for c in rows[0]) else 1
    if start == len(rows):
        raise DataError(f"{path}: no data rows below the header")
    data = np.empty((len(rows) - start, len(rows[0])))
    for i, row in enumerate(rows[start:]):
        for j, cell in enumerate(row):
            if not _is_float(cell):
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at data row {i + 1}, column {j + 1}"
                )
            data[i, j] = float(cell)
    return data


def _normalize_label(value: str) -> Optional[str]:
    lowered = value.strip().lower()
    if lowered in ("x", "0"):
        return "x"
    if lowered in ("y", "1"):
        return "y"
    return None


def _read_pooled_csv(path: str, label_column: str) -> SampleMatrix:
    """Pooled CSV with a label column; labels are x/y (any case) or 0/1."""
    rows = _read_rows(path)
    first = rows[0]
    try:
        label_idx = int(label_column)
    except ValueError:
        label_idx = None
    if label_idx is None:
        if label_column not in first:
            raise DataError(
                f"{path}: no column named {label_column!r}; pass a header name or a 0-based index"
            )
        label_idx = first.index(label_column)
        data_rows = rows[1:]
    else:
        if not 0 <= label_idx < len(first):
            raise DataError(f"{path}: label column index {label_idx} out of range")
        # a first row whose label cell does not parse as a label is a header
        data_rows = rows if _normalize_label(first[label_idx]) is not None else rows[1:]
    if not data_rows:
        raise DataError(f"{path}: no data rows")

    x_rows, y_rows = [], []
    for i, row in enumerate(data_rows):
        label = _normalize_label(row[label_idx])
        if label is None:
            raise DataError(
                f"{path}: bad label {row[label_idx]!r} at data row {i + 1} "
                "(expected x/y or 0/1)"
            )
        values = []
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            if not _is_float(cell):
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at data row {i + 1}, column {j + 1}"
                )
            values.append(float(cell))
        (x_rows if label == "x" else y_rows).append(values)
    if len(x_rows) < 2 or len(y_rows) < 2:
        raise DataError(
            f"{path}: need at least 2 rows per group, got {len(x_rows)} x and {len(y_rows)} y"
        )
    return SampleMatrix(
        values=np.array(x_rows + y_rows, dtype=float), m=len(x_rows), n=len(y_rows)
    )


def _load_sample(args) -> tuple[SampleMatrix, dict]:
    if args.pooled is not None:
        if args.x is not None or args.y is not None:
            raise DataError("pass either --x/--y or --pooled/--labels, not both")
        if args.labels is None:
            raise DataError("--pooled requires --labels")
        sample = _read_pooled_csv(args.pooled, args.labels)
        meta = {"pooled": args.pooled, "labels": args.labels}
    else:
        if args.x is None or args.y is None:
            raise DataError("need both --x and --y (or --pooled with --labels)")
        x = _read_numeric_csv(args.x)
        y = _read_numeric_csv(args.y)
        if x.shape[1] != y.shape[1]:
            raise DataError(
                f"column mismatch: {args.x} has {x.shape[1]} columns, {args.y} has {y.shape[1]}"
            )
        if len(x) < 2 or len(y) < 2:
            raise DataError("need at least 2 rows per group")
        sample = SampleMatrix(values=np.vstack([x, y]), m=len(x), n=len(y))
        meta = {"x": args.x, "y": args.y}
    meta.update({"m": sample.m, "n": sample.n, "d": sample.d})
    return sample, meta


# ---------------------------------------------------------------------------
# argument parsing


def _nonneg_int(value: str) -> int:
    parsed = int(value)
    if parsed < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {value}")
    return parsed


def _positive_int(value: str) -> int:
    parsed = int(value)
    if parsed < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return parsed


def _k_value(value: str):
    if value == "auto":
        return "auto"
    parsed = int(value)
    if parsed < 1:
        raise argparse.ArgumentTypeError(f"k must be a positive integer or 'auto', got {value}")
    return parsed


def _bandwidth_value(value: str):
    if value == "median":
        return "median"
    parsed = float(value)
    if not parsed > 0:
        raise argparse.ArgumentTypeError(f"bandwidth must be positive or 'median', got {value}")
    return parsed


def _default_threads() -> int:
    env = os.environ.get("MATES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _add_data_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--x", help="CSV with the first sample (rows = observations)")
    parser.add_argument("--y", help="CSV with the second sample")
    parser.add_argument("--pooled", help="single CSV holding both samples")
    parser.add_argument("--labels", help="label column (name or index) for --pooled; x/y or 0/1")


def _add_view_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--views",
        nargs="+",
        default=["moments:1,2,3,4"],
        help="view tokens: moments:1,2,3,4 | lp:1,2 | precomputed:FILE (repeatable)",
    )
    parser.add_argument("--graph", choices=["knn", "kmst"], default="knn")
    parser.add_argument("--k", type=_k_value, default="auto", help="graph size or 'auto'")
    parser.add_argument(
        "--weights",
        choices=["binary", "similarity", "kernel", "rank"],
        default="kernel",
    )
    parser.add_argument(
        "--bandwidth", type=_bandwidth_value, default="median", help="kernel bandwidth or 'median'"
    )


def _parse_view_tokens(tokens: Sequence[str], graph: GraphSpec) -> list[ViewSpec]:
    specs: list[ViewSpec] = []
    for token in tokens:
        kind, sep, payload = token.partition(":")
        if not sep or not payload:
            raise DataError(f"bad view token {token!r}; expected KIND:ARGS")
        if kind == "moments":
            for part in payload.split(","):
                try:
                    order = int(part)
                except ValueError:
                    raise DataError(f"bad moment order {part!r} in {token!r}") from None
                specs.append(ViewSpec(kind="moment", param=order, graph=graph))
        elif kind == "lp":
            for part in payload.split(","):
                try:
                    order = float(part)
                except ValueError:
                    raise DataError(f"bad lp order {part!r} in {token!r}") from None
                specs.append(ViewSpec(kind="lp", param=order, graph=graph))
        elif kind == "precomputed":
            specs.append(ViewSpec(kind="precomputed", param=_read_numeric_csv(payload), graph=graph))
        else:
            raise DataError(f"unknown view kind {kind!r} in {token!r}")
    if not specs:
        raise DataError("no views configured")
    return specs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mates",
        description="Multi-view aggregated graph-based two-sample test",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run the test on CSV data")
    _add_data_options(p_test)
    _add_view_options(p_test)
    p_test.add_argument("--method", choices=["asymptotic", "permutation", "both"], default="asymptotic")
    p_test.add_argument("--perms", type=_positive_int, default=1000)
    p_test.add_argument("--seed", type=_nonneg_int, default=0)
    p_test.add_argument("--out", help="output file (default: stdout)")
    p_test.add_argument("--format", choices=["json", "csv"], default="json")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="Monte Carlo size/power for a scenario")
    p_sim.add_argument("--scenario", help="scenario id, e.g. null-a or alt-I")
    p_sim.add_argument("--pattern", choices=["i", "ii", "iii", "iv"])
    p_sim.add_argument("--d", type=_positive_int, default=200)
    p_sim.add_argument("--m", type=_positive_int, default=50)
    p_sim.add_argument("--n", type=_positive_int, default=50)
    p_sim.add_argument("--config", help="JSON scenario config (overrides the flags above)")
    p_sim.add_argument("--reps", type=_positive_int, default=1000)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--seed", type=_nonneg_int, default=0)
    p_sim.add_argument("--threads", type=_positive_int, default=_default_threads())
    p_sim.add_argument("--out", help="output CSV (default: stdout)")
    p_sim.set_defaults(func=cmd_simulate)

    p_scatter = sub.add_parser("scatter", help="observed and permuted per-view statistics")
    _add_data_options(p_scatter)
    _add_view_options(p_scatter)
    p_scatter.add_argument("--perms", type=_nonneg_int, default=1000)
    p_scatter.add_argument("--seed", type=_nonneg_int, default=0)
    p_scatter.add_argument("--out", help="output CSV (default: stdout)")
    p_scatter.set_defaults(func=cmd_scatter)

    p_ret = sub.add_parser("returns", help="daily returns matrices from a price panel")
    p_ret.add_argument("--prices", required=True, help="CSV: date column plus one column per asset")
    p_ret.add_argument("--date-column", default=None, help="date column name (default: first)")
    p_ret.add_argument("--split-date", required=True, help="returns on/after this date go to 'after'")
    p_ret.add_argument(
        "--drop-missing-threshold",
        type=float,
        default=0.0,
        help="drop assets whose missing-price fraction exceeds this",
    )
    p_ret.add_argument("--log-returns", action="store_true", help="log(p_t/p_{t-1}) instead of simple returns")
    p_ret.add_argument("--out-before", required=True)
    p_ret.add_argument("--out-after", required=True)
    p_ret.set_defaults(func=cmd_returns)

    return parser


# ---------------------------------------------------------------------------
# the test report


@dataclass
class TestReport:
    """Serializable outcome of one ``mates test`` invocation."""

    __test__ = False  # not a pytest class, despite the name

    meta: dict
    views: list[dict]
    t_stat: float
    p_asymptotic: float
    diagnostics: dict
    p_permutation: Optional[float] = None

    def to_dict(self) -> dict:
        payload = {
            "meta": self.meta,
            "views": self.views,
            "T_S": self.t_stat,
            "p_asymptotic": self.p_asymptotic,
            "diagnostics": self.diagnostics,
        }
        if self.p_permutation is not None:
            payload["p_permutation"] = self.p_permutation
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        return cls(
            meta=data["meta"],
            views=data["views"],
            t_stat=data["T_S"],
            p_asymptotic=data["p_asymptotic"],
            diagnostics=data["diagnostics"],
            p_permutation=data.get("p_permutation"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["s", "U_x", "U_y", "U_w", "U_diff", "T_prime", "p_prime",
             "T_S", "p_asymptotic", "p_permutation"]
        )
        for view in self.views:
            writer.writerow(
                [
                    view["s"],
                    repr(view["U_x"]),
                    repr(view["U_y"]),
                    repr(view["U_w"]),
                    repr(view["U_diff"]),
                    repr(view["T_prime"]),
                    repr(view["p_prime"]),
                    repr(self.t_stat),
                    repr(self.p_asymptotic),
                    "" if self.p_permutation is None else repr(self.p_permutation),
                ]
            )
        return buffer.getvalue()


def build_report(result: MatesResult, meta: dict, independence: dict) -> TestReport:
    views = []
    for s in range(result.n_views):
        views.append(
            {
                "s": s + 1,
                "U_x": float(result.u_x[s]),
                "U_y": float(result.u_y[s]),
                "U_w": float(result.u_w[s]),
                "U_diff": float(result.u_diff[s]),
                "U_w_centered": float(result.u_w_centered[s]),
                "U_diff_centered": float(result.u_diff_centered[s]),
                "T_prime": float(result.t_prime[s]),
                "p_prime": float(result.p_prime[s]),
            }
        )
    diagnostics = {"independence": independence}
    if result.diagnostics is not None:
        diagnostics["conditions"] = result.diagnostics.to_dict()
    if result.n_permutations is not None:
        meta = {**meta, "perms": result.n_permutations}
    return TestReport(
        meta=meta,
        views=views,
        t_stat=float(result.t_stat),
        p_asymptotic=float(result.p_asymptotic),
        diagnostics=diagnostics,
        p_permutation=result.p_permutation,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_test(args) -> int:
    sample, meta = _load_sample(args)
    graph = GraphSpec(kind=args.graph, k=args.k, weight_scheme=args.weights, bandwidth=args.bandwidth)
    specs = _parse_view_tokens(args.views, graph)
    views = build_views(sample, specs)
    result = mates_test(
        sample,
        method=args.method,
        permutations=args.perms,
        seed=args.seed,
        views=views,
    )
    report_obj = independence_report(views, sample.m, sample.n)
    independence = {
        "rank_w": report_obj.rank_w,
        "rank_diff": report_obj.rank_diff,
        "singular_views_w": list(report_obj.singular_views_w),
        "singular_views_diff": list(report_obj.singular_views_diff),
    }
    meta.update(
        {
            "views": list(args.views),
            "graph": args.graph,
            "k": args.k,
            "weights": args.weights,
            "bandwidth": args.bandwidth,
            "method": args.method,
            "seed": args.seed,
        }
    )
    report = build_report(result, meta, independence)
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        spec = load_scenario_config(args.config)
    else:
        if not args.scenario:
            raise DataError("pass --scenario (or --config)")
        spec = make_scenario(args.scenario, pattern=args.pattern, d=args.d, m=args.m, n=args.n)
    if not 0.0 <= args.alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {args.alpha}")

    total = args.reps
    step = max(1, total // 20)

    def progress(done: int) -> None:
        if done % step == 0 or done == total:
            print(f"\r{spec.label}: {done}/{total} replications", end="", file=sys.stderr)
            if done == total:
                print(file=sys.stderr)

    result = run_experiment(
        spec,
        replications=args.reps,
        alpha=args.alpha,
        seed=args.seed,
        threads=args.threads,
        progress=progress,
    )
    _emit(EXPERIMENT_CSV_HEADER + "\n" + result.csv_row() + "\n", args.out)
    return EXIT_OK


def cmd_scatter(args) -> int:
    sample, _ = _load_sample(args)
    graph = GraphSpec(kind=args.graph, k=args.k, weight_scheme=args.weights, bandwidth=args.bandwidth)
    specs = _parse_view_tokens(args.views, graph)
    views = build_views(sample, specs)
    rows = scatter_data(views, sample.m, sample.n, args.perms, seed=args.seed)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["view", "u_w", "u_diff", "is_observed"])
    for view_idx, u_w, u_diff, observed in rows:
        writer.writerow([view_idx, repr(u_w), repr(u_diff), int(observed)])
    _emit(buffer.getvalue(), args.out)
    return EXIT_OK


def cmd_returns(args) -> int:
    import pandas as pd

    try:
        frame = pd.read_csv(args.prices)
    except OSError as exc:
        raise DataError(f"cannot read {args.prices}: {exc}") from exc
    except ValueError as exc:  # covers ParserError and EmptyDataError
        raise DataError(f"cannot parse {args.prices}: {exc}") from exc
    if frame.shape[1] < 2:
        raise DataError("price panel needs a date column plus at least one asset column")

    date_column = args.date_column if args.date_column is not None else frame.columns[0]
    if date_column not in frame.columns:
        raise DataError(f"no date column {date_column!r} in {args.prices}")
    try:
        dates = pd.to_datetime(frame[date_column], format="mixed")
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable dates in column {date_column!r}: {exc}") from exc
    try:
        split = pd.Timestamp(args.split_date)
    except ValueError as exc:
        raise DataError(f"unparseable --split-date {args.split_date!r}: {exc}") from exc

    prices = frame.drop(columns=[date_column])
    prices = prices.apply(pd.to_numeric, errors="coerce")
    prices.index = dates
    prices = prices.sort_index()

    threshold = args.drop_missing_threshold
    if not 0.0 <= threshold < 1.0:
        raise DataError(f"--drop-missing-threshold must lie in [0, 1), got {threshold}")
    missing_fraction = prices.isna().mean()
    keep = missing_fraction[missing_fraction <= threshold].index
    prices = prices[keep].ffill()
    prices = prices.dropna(axis="columns")  # assets missing their first price
    if prices.shape[1] < 1:
        raise DataError("no asset survives the missing-data filter")
    if (prices <= 0).any().any():
        asset = prices.columns[(prices <= 0).any().values][0]
        raise DataError(f"non-positive price for asset {asset!r}")

    ratio = prices / prices.shift(1)
    returns = np.log(ratio) if args.log_returns else ratio - 1.0
    returns = returns.iloc[1:]  # first row has no previous price

    before = returns[returns.index < split]
    after = returns[returns.index >= split]
    if len(before) < 3 or len(after) < 3:
        raise DataError(
            f"need at least 3 return rows on each side of the split, "
            f"got {len(before)} before and {len(after)} after"
        )

    for block, path in ((before, args.out_before), (after, args.out_after)):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(list(block.columns))
        for row in block.to_numpy():
            writer.writerow([repr(float(v)) for v in row])
        _atomic_write(path, buffer.getvalue())
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateStatisticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MatesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
