"""Statistical comparison of detector configurations: two-sample t-tests,
box-plot summaries, histograms, and training-log ingestion.

The p-value kernel is self-contained: the Student-t survival function is
computed through the regularized incomplete beta function, evaluated with a
modified Lentz continued fraction, accurate to ~1e-12 for df <= 1000 and
|t| <= 50.

Config ids follow the "<model>-<variant>" scheme, e.g. "v8-SP": model in
{v5, v8, v12} and variant in {SP, SS, MP, MS} (Single/Multi class x
Pretrained/Scratch), giving the standard grid of 12 configurations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

CONFIG_MODELS: tuple[str, ...] = ("v5", "v8", "v12")
CONFIG_VARIANTS: tuple[str, ...] = ("SP", "SS", "MP", "MS")
STANDARD_CONFIG_IDS: tuple[str, ...] = tuple(
    f"{m}-{v}" for m in CONFIG_MODELS for v in CONFIG_VARIANTS
)
METRIC_NAMES: tuple[str, ...] = ("map_50_95", "precision", "recall", "f1")
DEFAULT_ALPHA = 0.05
SMALL_P_TEXT = "<0.0001"
SMALL_P_CUTOFF = 1e-4


class DegenerateSamplesError(ValueError):
    """Both samples have zero variance; the t statistic is undefined."""


class TrainingLogError(ValueError):
    """Training-log CSV is malformed (column, monotonicity, or cell errors)."""


class ComparisonError(ValueError):
    """A comparison references an unknown config id or missing metric."""


@dataclass(frozen=True)
class MetricSeries:
    """One metric's values (per epoch or per run) for one configuration."""

    config_id: str
    metric_name: str
    values: tuple

    def __post_init__(self):
        if self.metric_name not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric_name!r}")
        if not self.values:
            raise ValueError("values must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("values must all be finite")

    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # statistical result, not a test-runner collectable

    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    alpha: float
    significant: bool

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value out of [0, 1]: {self.p_value}")
        if self.significant != (self.p_value < self.alpha):
            raise ValueError("significant flag inconsistent with p_value/alpha")


@dataclass(frozen=True)
class BoxSummary:
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: tuple


# --- numerical kernel -------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x out of [0, 1]: {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """One-sided survival probability P(T > t) for Student's t with df > 0."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if t < 0:
        return 1.0 - student_t_sf(-t, df)
    x = df / (df + t * t)
    return 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)


# --- t-tests ----------------------------------------------------------------

def _mean_var(xs) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


def t_test(a, b, variant: str = "pooled", alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Independent two-sample t-test with two-sided p-value.

    variant "pooled" is the classical equal-variance Student test
    (df = n_a + n_b - 2); "welch" uses the Welch-Satterthwaite df.
    """
    if variant not in ("pooled", "welch"):
        raise ValueError(f"variant must be 'pooled' or 'welch', got {variant!r}")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    for xs in (a, b):
        if not all(math.isfinite(x) for x in xs):
            raise ValueError("samples must be finite")
    na, nb = len(a), len(b)
    mean_a, var_a = _mean_var(a)
    mean_b, var_b = _mean_var(b)
    if variant == "pooled":
        df = float(na + nb - 2)
        pooled_var = ((na - 1) * var_a + (nb - 1) * var_b) / df
        denom = math.sqrt(pooled_var * (1.0 / na + 1.0 / nb))
    else:
        se_a, se_b = var_a / na, var_b / nb
        se2 = se_a + se_b
        denom = math.sqrt(se2)
        if denom > 0.0:
            df = se2 * se2 / (se_a * se_a / (na - 1) + se_b * se_b / (nb - 1))
        else:
            df = 0.0
    if denom == 0.0:
        raise DegenerateSamplesError(
            "t statistic undefined: both samples have zero variance"
        )
    t = (mean_a - mean_b) / denom
    p = min(1.0, 2.0 * student_t_sf(abs(t), df))
    return TestResult(t, df, p, alpha, p < alpha)


def format_p_value(p: float) -> str:
    """Report rendering: 4 decimals, with very small values as "<0.0001"."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p out of [0, 1]: {p}")
    return SMALL_P_TEXT if p < SMALL_P_CUTOFF else f"{p:.4f}"


def format_test_result(result: TestResult) -> str:
    return f"t={result.t_statistic:.4f}, p={format_p_value(result.p_value)}"


# --- distribution summaries -------------------------------------------------

def quantile(values, q: float) -> float:
    """Linear-interpolation quantile: position (n-1)*q in the sorted data."""
    if not values:
        raise ValueError("quantile of empty data")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q out of [0, 1]: {q}")
    xs = sorted(values)
    pos = (len(xs) - 1) * q
    lo = int(math.floor(pos))
    frac = pos - lo
    if frac == 0.0 or lo + 1 >= len(xs):
        return float(xs[lo])
    return xs[lo] + frac * (xs[lo + 1] - xs[lo])


def box_summary(values) -> BoxSummary:
    """Five-number summary with 1.5*IQR whiskers clipped to the data."""
    if not values:
        raise ValueError("box_summary of empty data")
    if not all(math.isfinite(v) for v in values):
        raise ValueError("values must be finite")
    xs = sorted(float(v) for v in values)
    q1 = quantile(xs, 0.25)
    med = quantile(xs, 0.50)
    q3 = quantile(xs, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = [x for x in xs if lo_fence <= x <= hi_fence]
    outliers = tuple(x for x in xs if x < lo_fence or x > hi_fence)
    return BoxSummary(
        median=med,
        q1=q1,
        q3=q3,
        iqr=iqr,
        whisker_low=inside[0] if inside else q1,
        whisker_high=inside[-1] if inside else q3,
        outliers=outliers,
    )


def histogram(values, bin_count: int):
    """Equal-width bins over [min, max]; right-open except the last (closed).

    Returns a list of (bin_low, bin_high, count); counts sum to len(values).
    All values land in bin 0 when the data has zero range.
    """
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    if not values:
        raise ValueError("histogram of empty data")
    lo = min(values)
    hi = max(values)
    width = (hi - lo) / bin_count
    counts = [0] * bin_count
    for v in values:
        if width == 0.0:
            idx = 0
        else:
            idx = min(bin_count - 1, int((v - lo) / width))
        counts[idx] += 1
    bins = []
    for i in range(bin_count):
        b_lo = lo + i * width
        b_hi = hi if i == bin_count - 1 else lo + (i + 1) * width
        bins.append((b_lo, b_hi, counts[i]))
    return bins


# --- training-log ingestion -------------------------------------------------

def ingest_training_log(csv_text: str, config_id: str | None = None):
    """Parse a training log CSV into one MetricSeries per metric.

    Required columns: epoch plus every metric name; an optional ``config``
    column names the configuration per row (grouping rows), otherwise
    config_id must be given. Epochs must be strictly increasing per config.
    """
    reader = csv.DictReader(io.StringIO(csv_text))
    if reader.fieldnames is None:
        raise TrainingLogError("empty training log")
    fields = [f.strip() for f in reader.fieldnames]
    required = ("epoch",) + METRIC_NAMES
    for col in required:
        if col not in fields:
            raise TrainingLogError(f"missing column {col!r}")
    has_config_col = "config" in fields
    if not has_config_col and config_id is None:
        raise TrainingLogError("no config column and no config_id given")

    order: list[str] = []  # configs in first-appearance order
    per_config: dict[str, dict[str, list]] = {}
    last_epoch: dict[str, float] = {}
    rows = 0
    for line_no, row in enumerate(reader, start=2):
        rows += 1
        clean = {(k or "").strip(): (v or "").strip() for k, v in row.items()}
        cid = clean.get("config", "") if has_config_col else config_id
        if not cid:
            raise TrainingLogError(f"line {line_no}: empty config cell")
        numbers = {}
        for col in required:
            try:
                numbers[col] = float(clean[col])
            except (ValueError, KeyError):
                raise TrainingLogError(
                    f"line {line_no}: non-numeric {col!r} cell {clean.get(col)!r}"
                ) from None
        if cid in last_epoch and numbers["epoch"] <= last_epoch[cid]:
            raise TrainingLogError(
                f"line {line_no}: epoch {numbers['epoch']:g} not greater than "
                f"previous {last_epoch[cid]:g} for config {cid!r}"
            )
        last_epoch[cid] = numbers["epoch"]
        if cid not in per_config:
            order.append(cid)
            per_config[cid] = {m: [] for m in METRIC_NAMES}
        for m in METRIC_NAMES:
            per_config[cid][m].append(numbers[m])
    if rows == 0:
        raise TrainingLogError("training log has a header but no rows")
    return [
        MetricSeries(cid, m, tuple(per_config[cid][m]))
        for cid in order
        for m in METRIC_NAMES
    ]


# --- configuration comparison -----------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    config_a: str
    config_b: str
    metric: str
    result: TestResult
    direction: str  # config id with the higher mean, or "equal"


def compare_configs(
    series,
    pairs,
    metric: str,
    variant: str = "pooled",
    alpha: float = DEFAULT_ALPHA,
):
    """One t-test row per (config_a, config_b) pair, in input pair order."""
    if metric not in METRIC_NAMES:
        raise ComparisonError(f"unknown metric {metric!r}")
    lookup = {(s.config_id, s.metric_name): s for s in series}
    rows = []
    for config_a, config_b in pairs:
        try:
            sa = lookup[(config_a, metric)]
            sb = lookup[(config_b, metric)]
        except KeyError as missing:
            raise ComparisonError(
                f"no series for config/metric {missing.args[0]!r}"
            ) from None
        result = t_test(sa.values, sb.values, variant=variant, alpha=alpha)
        mean_a, mean_b = sa.mean(), sb.mean()
        if mean_a > mean_b:
            direction = config_a
        elif mean_b > mean_a:
            direction = config_b
        else:
            direction = "equal"
        rows.append(ComparisonRow(config_a, config_b, metric, result, direction))
    return rows


def serialize_comparisons(rows, sample_unit: str = "per_epoch") -> str:
    """Comparison table CSV; sample_unit names what one value represents."""
    lines = ["pair,metric,t,df,p,significant,direction,sample_unit"]
    for row in rows:
        r = row.result
        lines.append(
            f"{row.config_a} vs {row.config_b},{row.metric},"
            f"{r.t_statistic:.4f},{r.degrees_of_freedom:.4f},"
            f"{format_p_value(r.p_value)},{str(r.significant).lower()},"
            f"{row.direction},{sample_unit}"
        )
    return "\n".join(lines) + "\n"


def serialize_box_summaries(items) -> str:
    """CSV of (label, BoxSummary) pairs; outliers joined with ';'."""
    lines = ["label,median,q1,q3,iqr,whisker_low,whisker_high,outliers"]
    for label, s in items:
        outliers = ";".join(f"{o:g}" for o in s.outliers)
        lines.append(
            f"{label},{s.median:.6f},{s.q1:.6f},{s.q3:.6f},{s.iqr:.6f},"
            f"{s.whisker_low:.6f},{s.whisker_high:.6f},{outliers}"
        )
    return "\n".join(lines) + "\n"


def serialize_histogram(bins) -> str:
    lines = ["bin_low,bin_high,count"]
    for b_lo, b_hi, count in bins:
        lines.append(f"{b_lo:.6f},{b_hi:.6f},{count}")
    return "\n".join(lines) + "\n"
