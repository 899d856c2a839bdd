"""Single-change validity tests f(segment) <= gamma.

Each test comes in two forms: a standalone full-window scan (the
defining computation) and an incremental per-start state the engine
pushes one observation at a time.  The incremental statistics are exact,
they equal the full rescan at every prefix length.

The sticky flag turns any test into a stable one: once a growing
segment fails, every extension of it reports invalid.  The range test
has that property natively (max - min never shrinks under extension).
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass

import numpy as np

from .core import DomainError, InvalidRangeError, TimeSeries

VALIDITY_KINDS = (
    "glr_gaussian_naive",
    "glr_gaussian_focus",
    "wilcoxon",
    "mood",
    "range",
)


@dataclass(frozen=True)
class ValidityTest:
    """Test selector plus threshold; ``sticky`` turns on the stable wrapper."""

    kind: str
    gamma: float
    sticky: bool = False

    def __post_init__(self) -> None:
        if self.kind not in VALIDITY_KINDS:
            raise DomainError(
                f"unknown validity kind {self.kind!r}, expected one of {VALIDITY_KINDS}"
            )
        if not math.isfinite(self.gamma):
            raise DomainError("gamma must be finite")

    @property
    def gamma_stable(self) -> bool:
        """True when invalid segments stay invalid under right extension."""
        return self.sticky or self.kind == "range"

    @property
    def gamma_inverse_stable(self) -> bool:
        """True when invalid segments stay invalid under left extension.

        The range statistic grows in both directions; the sticky wrapper
        only latches right extensions, so it does not qualify.
        """
        return self.kind == "range"

    def new_state(self, start: int) -> "ValidityState":
        cls = _STATE_CLASSES[self.kind]
        return cls(self, start)


class ValidityState:
    """Incremental statistic for the growing segment starting at ``start``.

    ``feed`` advances by one observation; sticky tests evaluate at every
    step so the trip flag sees every prefix, other tests defer the
    evaluation until the statistic is read.  The empty segment carries
    the minimal statistic 0 (nothing to split).
    """

    __slots__ = ("test", "start", "length", "tripped", "_stat", "_stale")

    def __init__(self, test: ValidityTest, start: int):
        self.test = test
        self.start = start
        self.length = 0
        self.tripped = False
        self._stat = 0.0
        self._stale = False

    def push(self, value: float) -> float:
        """Extend the segment and return the updated statistic."""
        self.feed(value)
        return self.statistic

    def feed(self, value: float) -> None:
        self.length += 1
        self._advance(value)
        if self.test.sticky:
            stat = self._evaluate()
            self._stat = stat
            self._stale = False
            if stat > self.test.gamma:
                self.tripped = True
        else:
            self._stale = True

    @property
    def statistic(self) -> float:
        if self._stale:
            self._stat = self._evaluate()
            self._stale = False
        return self._stat

    @property
    def is_valid(self) -> bool:
        if self.test.sticky:
            return not self.tripped
        return self.statistic <= self.test.gamma

    def _advance(self, value: float) -> None:
        raise NotImplementedError

    def _evaluate(self) -> float:
        raise NotImplementedError


class RangeState(ValidityState):
    __slots__ = ("_lo", "_hi")

    def __init__(self, test: ValidityTest, start: int):
        super().__init__(test, start)
        self._lo = math.inf
        self._hi = -math.inf

    def _advance(self, value: float) -> None:
        if value < self._lo:
            self._lo = value
        if value > self._hi:
            self._hi = value

    def _evaluate(self) -> float:
        if self.length < 1:
            return 0.0
        return self._hi - self._lo


def _glr_max_gain(cs: np.ndarray, css: np.ndarray, a: int, b: int) -> float:
    """Max over interior splits of C(a,b) - C(a,u) - C(u,b), gaussian cost."""
    if b - a < 2:
        return 0.0
    s_full = cs[b] - cs[a]
    ss_full = css[b] - css[a]
    c_full = max(0.5 * (ss_full - s_full * s_full / (b - a)), 0.0)
    taus = np.arange(a + 1, b)
    sl = cs[taus] - cs[a]
    cl = np.maximum(0.5 * (css[taus] - css[a] - sl * sl / (taus - a)), 0.0)
    sr = cs[b] - cs[taus]
    cr = np.maximum(0.5 * (css[b] - css[taus] - sr * sr / (b - taus)), 0.0)
    return float(max(np.max(c_full - cl - cr), 0.0))


def glr_scan_naive(series: TimeSeries, a: int, b: int) -> float:
    """Gaussian likelihood-ratio scan over all interior split points.

    Splits leave both sides non-empty; a segment too short to split
    scores 0, the minimal element.
    """
    if not (0 <= a < b <= len(series)):
        raise InvalidRangeError(f"segment ({a}, {b}] is not a valid range for n={len(series)}")
    return _glr_max_gain(series.cumsum, series.cumsum_sq, a, b)


class GlrNaiveState(ValidityState):
    """Reference GLR state: full rescan of the buffered segment per push."""

    __slots__ = ("_cs", "_css")

    def __init__(self, test: ValidityTest, start: int):
        super().__init__(test, start)
        self._cs = [0.0]
        self._css = [0.0]

    def _advance(self, value: float) -> None:
        self._cs.append(self._cs[-1] + value)
        self._css.append(self._css[-1] + value * value)

    def _evaluate(self) -> float:
        if self.length < 2:
            return 0.0
        return _glr_max_gain(np.asarray(self._cs), np.asarray(self._css), 0, self.length)


class FocusState(ValidityState):
    """Functionally pruned sequential max-GLR (gaussian mean change).

    Keeps two candidate-change piece lists, one per change direction.
    Each piece is (prefix sum at its split, split offset, best one-mean
    fit of that prefix); a piece's value at the current step is its
    stored fit plus the best fit of the data after its split.  Pieces
    whose suffix means fall out of order can never attain the maximum
    again and are dropped, which keeps the lists logarithmic on average.
    """

    __slots__ = ("_n", "_sn", "_lo", "_hi")

    def __init__(self, test: ValidityTest, start: int):
        super().__init__(test, start)
        self._n = 0
        self._sn = 0.0
        self._lo = [(0.0, 0, 0.0)]
        self._hi = [(0.0, 0, 0.0)]

    def _advance(self, value: float) -> None:
        self._n = n = self._n + 1
        self._sn = sn = self._sn + value
        m0 = sn * sn / (2.0 * n)
        hi = self._hi
        while len(hi) > 1:
            st1, tau1, _ = hi[-1]
            st0, tau0, _ = hi[-2]
            # argmax ordering: (sn-st1)/(n-tau1) <= (sn-st0)/(n-tau0)
            if (sn - st1) * (n - tau0) <= (sn - st0) * (n - tau1):
                hi.pop()
            else:
                break
        lo = self._lo
        while len(lo) > 1:
            st1, tau1, _ = lo[-1]
            st0, tau0, _ = lo[-2]
            if (sn - st1) * (n - tau0) >= (sn - st0) * (n - tau1):
                lo.pop()
            else:
                break
        piece = (sn, n, m0)
        hi.append(piece)
        lo.append(piece)

    def _evaluate(self) -> float:
        n = self._n
        if n < 2:
            return 0.0
        sn = self._sn
        m0 = sn * sn / (2.0 * n)
        best = 0.0
        # The newest piece (split at n) is skipped: its suffix is empty.
        for pieces in (self._hi, self._lo):
            for st, tau, m0p in pieces:
                if tau == n:
                    continue
                diff = sn - st
                val = m0p + diff * diff / (2.0 * (n - tau)) - m0
                if val > best:
                    best = val
        return best

    @property
    def piece_count(self) -> int:
        return len(self._hi) + len(self._lo)


class WilcoxonState(ValidityState):
    """Centered Wilcoxon scan max |W_u|, updated exactly in O(len) per push.

    Appending x adds the pairs (i, new point); each existing split u
    gains (number of left values <= x) - u/2, and the new split counts x
    against the whole previous segment.  Ties count as <=.
    """

    __slots__ = ("_vals", "_w")

    def __init__(self, test: ValidityTest, start: int):
        super().__init__(test, start)
        self._vals = np.empty(8, dtype=np.float64)
        self._w = np.empty(8, dtype=np.float64)

    def _grow(self, needed: int) -> None:
        if needed > self._vals.size:
            cap = max(needed, 2 * self._vals.size)
            for name in ("_vals", "_w"):
                buf = np.empty(cap, dtype=np.float64)
                old = getattr(self, name)
                buf[: old.size] = old
                setattr(self, name, buf)

    def _advance(self, value: float) -> None:
        m = self.length - 1
        self._grow(m + 1)
        vals = self._vals
        if m > 0:
            counts = np.cumsum(vals[:m] <= value)
            w = self._w
            if m > 1:
                w[: m - 1] += counts[: m - 1] - 0.5 * np.arange(1, m)
            w[m - 1] = counts[m - 1] - 0.5 * m
        vals[m] = value

    def _evaluate(self) -> float:
        if self.length < 2:
            return 0.0
        return float(np.abs(self._w[: self.length - 1]).max())


def wilcoxon_scan(window) -> float:
    """Max over splits of |W_u| on a window, computed from the pair matrix.

    Independent of the incremental path; intended for validation and
    post-hoc checks.
    """
    a = np.asarray(window, dtype=np.float64)
    size = a.size
    if size < 2:
        return 0.0
    le = a[:, None] <= a[None, :]
    rows = np.cumsum(le, axis=0)
    tails = np.cumsum(rows[:, ::-1], axis=1)[:, ::-1]
    u = np.arange(1, size)
    pairs = tails[u - 1, u]
    w = pairs - 0.5 * u * (size - u)
    return float(np.abs(w).max())


def _mood_table_max(vals: np.ndarray, med: float) -> float:
    """Max over splits of the 2x2 chi-square around a given pooled median.

    Cells with zero expected count contribute 0 (a degenerate column,
    e.g. constant data, then declares no change).
    """
    size = vals.size
    below = vals <= med
    cum = np.cumsum(below)
    total_m = float(cum[-1])
    total_p = size - total_m
    u = np.arange(1, size, dtype=np.float64)
    n1m = cum[:-1].astype(np.float64)
    cells = (
        (n1m, u, total_m),
        (u - n1m, u, total_p),
        (total_m - n1m, size - u, total_m),
        ((size - u) - (total_m - n1m), size - u, total_p),
    )
    stat = None
    for count, row_total, col_total in cells:
        e = row_total * col_total / size
        safe = np.where(e > 0.0, e, 1.0)
        term = np.where(e > 0.0, (count - e) ** 2 / safe, 0.0)
        stat = term if stat is None else stat + term
    return float(stat.max())


def mood_scan(window) -> float:
    """Max over splits of Mood's median chi-square on a window."""
    vals = np.asarray(window, dtype=np.float64)
    size = vals.size
    if size < 2:
        return 0.0
    srt = np.sort(vals)
    half = size // 2
    med = float(srt[half]) if size % 2 else 0.5 * (float(srt[half - 1]) + float(srt[half]))
    return _mood_table_max(vals, med)


class MoodState(ValidityState):
    """Mood median scan; the pooled median shifts, so every push rescans."""

    __slots__ = ("_vals", "_sorted")

    def __init__(self, test: ValidityTest, start: int):
        super().__init__(test, start)
        self._vals = np.empty(8, dtype=np.float64)
        self._sorted: list[float] = []

    def _advance(self, value: float) -> None:
        m = self.length - 1
        if m + 1 > self._vals.size:
            buf = np.empty(max(m + 1, 2 * self._vals.size), dtype=np.float64)
            buf[: self._vals.size] = self._vals
            self._vals = buf
        self._vals[m] = value
        insort(self._sorted, value)

    def _evaluate(self) -> float:
        size = self.length
        if size < 2:
            return 0.0
        sl = self._sorted
        half = size // 2
        med = sl[half] if size % 2 else 0.5 * (sl[half - 1] + sl[half])
        return _mood_table_max(self._vals[:size], med)


_STATE_CLASSES: dict[str, type[ValidityState]] = {
    "range": RangeState,
    "glr_gaussian_naive": GlrNaiveState,
    "glr_gaussian_focus": FocusState,
    "wilcoxon": WilcoxonState,
    "mood": MoodState,
}


def segment_statistic(series: TimeSeries, a: int, b: int, kind: str) -> float:
    """Full-scan statistic of a fixed segment, by definition of each test."""
    if not (0 <= a < b <= len(series)):
        raise InvalidRangeError(f"segment ({a}, {b}] is not a valid range for n={len(series)}")
    if kind == "range":
        seg = series.values[a:b]
        return float(seg.max() - seg.min())
    if kind in ("glr_gaussian_naive", "glr_gaussian_focus"):
        return glr_scan_naive(series, a, b)
    if kind == "wilcoxon":
        return wilcoxon_scan(series.values[a:b])
    if kind == "mood":
        return mood_scan(series.values[a:b])
    raise DomainError(f"unknown validity kind {kind!r}")


def segment_sticky_statistic(series: TimeSeries, a: int, b: int, kind: str) -> float:
    """Max of the full-scan statistic over all prefixes of the segment."""
    return max(segment_statistic(series, a, u, kind) for u in range(a + 1, b + 1))


def is_segment_valid(series: TimeSeries, a: int, b: int, test: ValidityTest) -> bool:
    """Check one segment against the test by direct recomputation."""
    if test.sticky:
        return segment_sticky_statistic(series, a, b, test.kind) <= test.gamma
    return segment_statistic(series, a, b, test.kind) <= test.gamma


def wilcoxon_threshold(typical_len: float) -> float:
    """Scale threshold 1.5 * sqrt(len^3 / 12) for the Wilcoxon scan."""
    if typical_len <= 0:
        raise DomainError("typical segment length must be positive")
    return 1.5 * math.sqrt(typical_len**3 / 12.0)


def sidak_threshold(num_splits: int, alpha: float) -> float:
    """Chi-square(1) quantile after a Dunn-Sidak split-count correction."""
    if num_splits < 1:
        raise DomainError("num_splits must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie strictly between 0 and 1")
    alpha_split = 1.0 - (1.0 - alpha) ** (1.0 / num_splits)
    return chi2_quantile_1df(1.0 - alpha_split)


def chi2_quantile_1df(p: float) -> float:
    """Quantile of the chi-square distribution with one degree of freedom.

    Uses the identity P(1/2, x/2) = erf(sqrt(x/2)) to invert the
    regularized incomplete gamma via erf inversion.
    """
    if not 0.0 <= p < 1.0:
        raise DomainError("probability must lie in [0, 1)")
    if p == 0.0:
        return 0.0
    z = _erfinv(p)
    return 2.0 * z * z


def _erfinv(p: float) -> float:
    """Inverse of erf on [0, 1), Newton iteration with a bisection guard."""
    if p == 0.0:
        return 0.0
    # Winitzki-style starting point.
    a = 0.147
    ln1m = math.log1p(-p * p)
    t = 2.0 / (math.pi * a) + ln1m / 2.0
    z = math.sqrt(math.sqrt(t * t - ln1m / a) - t)
    lo, hi = 0.0, max(z, 1.0)
    while math.erf(hi) < p:
        lo, hi = hi, hi * 2.0
    c = 2.0 / math.sqrt(math.pi)
    for _ in range(60):
        err = math.erf(z) - p
        if err > 0.0:
            hi = z
        else:
            lo = z
        step = err / (c * math.exp(-z * z))
        z_new = z - step
        if not (lo < z_new < hi):
            z_new = 0.5 * (lo + hi)
        if abs(z_new - z) <= 1e-15 * max(1.0, z):
            return z_new
        z = z_new
    return z
