"""Sampling, validation, enumeration and switching of labeled d-regular graphs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from .errors import (
    EdgeNotPresent,
    InfeasibleDegree,
    InvalidSwitching,
    OddDegreeSum,
    RetryBudgetExceeded,
    TooLarge,
    ValidationFailure,
)
from .seeding import make_rng

__all__ = [
    "RegularGraph",
    "Switching",
    "apply_switching",
    "circulant_graph",
    "complete_graph",
    "cycle_graph",
    "enumerate_regular_graphs",
    "graph_from_text",
    "graph_to_text",
    "list_switchable_pairs",
    "read_graph",
    "sample_by_switching",
    "sample_configuration_model",
    "sample_regular",
    "switching_walk",
    "validate_regular",
    "write_graph",
]

DEFAULT_MAX_RETRIES = 1_000_000
AUTO_REJECTION_LOG_ATTEMPTS = 9.0


def _normalize_edge(i, j) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True, eq=False)
class RegularGraph:
    """Labeled simple graph that is meant to be d-regular.

    Construction does not enforce the regularity invariants so malformed
    inputs can be inspected with :func:`validate_regular`.

    Attributes
    ----------
    n, d : int
        Vertex count and target degree.
    edges : ndarray, shape (m, 2)
        Rows ``(i, j)`` with ``i <= j``, lexicographically sorted. Duplicate
        rows are kept so multi-edges stay visible.
    """

    n: int
    d: int
    edges: np.ndarray

    @classmethod
    def from_edges(cls, n: int, d: int, edges) -> RegularGraph:
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        arr = np.sort(arr, axis=1)
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        arr = np.ascontiguousarray(arr[order])
        arr.flags.writeable = False
        return cls(int(n), int(d), arr)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.edges.tolist()))

    def edge_list(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in self.edges.tolist()]

    def has_edge(self, i: int, j: int) -> bool:
        return _normalize_edge(i, j) in self.edge_set

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)[: self.n]

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(n, d) table of sorted neighbor lists; requires a valid d-regular graph."""
        if np.any(self.degrees() != self.d):
            raise ValidationFailure("neighbor table needs every degree equal to d")
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        table = both[order, 1].reshape(self.n, self.d).copy()
        table.flags.writeable = False
        return table

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        np.add.at(a, (self.edges[:, 0], self.edges[:, 1]), 1.0)
        np.add.at(a, (self.edges[:, 1], self.edges[:, 0]), 1.0)
        return a

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegularGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and self.edges.shape == other.edges.shape
            and bool(np.array_equal(self.edges, other.edges))
        )

    def __hash__(self) -> int:
        return hash((self.n, self.d, self.edges.tobytes()))

    def key(self) -> tuple[tuple[int, int], ...]:
        return tuple(self.edge_list())


@dataclass(frozen=True)
class Switching:
    """Replace edges ``first=(i,j)``, ``second=(k,l)`` by a rewired pair.

    ``parallel`` inserts (i,k),(j,l); ``crossed`` inserts (i,l),(j,k).
    Orientation of ``first`` and ``second`` matters.
    """

    first: tuple[int, int]
    second: tuple[int, int]
    variant: str = "parallel"

    def __post_init__(self):
        if self.variant not in ("parallel", "crossed"):
            raise ValidationFailure(f"unknown switching variant {self.variant!r}")

    def replacement(self) -> tuple[tuple[int, int], tuple[int, int]]:
        i, j = self.first
        k, l = self.second
        if self.variant == "parallel":
            return _normalize_edge(i, k), _normalize_edge(j, l)
        return _normalize_edge(i, l), _normalize_edge(j, k)

    def inverse(self) -> Switching:
        i, j = self.first
        k, l = self.second
        if self.variant == "parallel":
            return Switching((i, k), (j, l), "parallel")
        return Switching((i, l), (j, k), "parallel")


def complete_graph(n: int) -> RegularGraph:
    return RegularGraph.from_edges(n, n - 1, itertools.combinations(range(n), 2))


def cycle_graph(n: int) -> RegularGraph:
    return RegularGraph.from_edges(n, 2, [(i, (i + 1) % n) for i in range(n)])


def _check_feasible(n: int, d: int) -> None:
    if (n * d) % 2:
        raise OddDegreeSum(f"n*d = {n * d} is odd; half-edges cannot be matched")
    if d < 1 or d >= n:
        raise InfeasibleDegree(f"need 1 <= d < n, got n={n}, d={d}")


@numba.njit(cache=True)
def _matching_kernel(stubs, raw, nbrs, cnt, max_attempts):
    """Run whole-matching attempts on ``raw`` until one is simple.

    Each attempt is a Fisher-Yates shuffle of ``stubs`` whose consecutive
    pairs are checked as soon as they are fixed, so a doomed attempt is
    abandoned at its first loop or repeated pair. An attempt starts only if
    enough random words remain to finish it. Returns ``(attempts, status)``
    with status 1 on success and 0 when ``raw`` or the budget ran out.
    """
    size = stubs.shape[0]
    m = size // 2
    pos = 0
    attempts = 0
    scale = 1.0 / 9007199254740992.0
    while attempts < max_attempts and raw.shape[0] - pos >= size:
        attempts += 1
        ok = True
        formed = 0
        for p in range(m):
            for slot in (2 * p, 2 * p + 1):
                r = size - slot
                k = slot + int((raw[pos] >> np.uint64(11)) * scale * r)
                pos += 1
                tmp = stubs[slot]
                stubs[slot] = stubs[k]
                stubs[k] = tmp
            a = stubs[2 * p]
            b = stubs[2 * p + 1]
            if a == b:
                ok = False
            else:
                for c in range(cnt[a]):
                    if nbrs[a, c] == b:
                        ok = False
                        break
            if not ok:
                break
            nbrs[a, cnt[a]] = b
            cnt[a] += 1
            nbrs[b, cnt[b]] = a
            cnt[b] += 1
            formed += 1
        if ok:
            return attempts, 1
        for p in range(formed):
            cnt[stubs[2 * p]] = 0
            cnt[stubs[2 * p + 1]] = 0
    return attempts, 0


def sample_configuration_model(
    n: int, d: int, seed: int, max_retries: int = DEFAULT_MAX_RETRIES
) -> RegularGraph:
    """Uniform labeled simple d-regular graph by whole-matching rejection.

    Half-edges are shuffled (Fisher-Yates) and paired consecutively; any
    matching with a loop or a repeated pair is discarded in full and redrawn.
    Pairs are checked while the shuffle runs, which only saves work: the
    accepted matching is still uniform over simple matchings.
    """
    _check_feasible(n, d)
    rng = make_rng(seed)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    nbrs = np.empty((n, d), dtype=np.int64)
    cnt = np.zeros(n, dtype=np.int64)
    block = 8 * stubs.size
    remaining = max_retries
    while remaining > 0:
        raw = rng.bit_generator.random_raw(block)
        block = min(2 * block, max(1 << 22, 2 * stubs.size))
        attempts, status = _matching_kernel(stubs, raw, nbrs, cnt, remaining)
        remaining -= attempts
        if status:
            pairs = stubs.reshape(-1, 2)
            lo = np.minimum(pairs[:, 0], pairs[:, 1])
            hi = np.maximum(pairs[:, 0], pairs[:, 1])
            codes = np.sort(lo * n + hi)
            edges = np.stack([codes // n, codes % n], axis=1)
            edges.flags.writeable = False
            return RegularGraph(n, d, edges)
    raise RetryBudgetExceeded(f"no simple matching after {max_retries} attempts (n={n}, d={d})")


def validate_regular(g: RegularGraph) -> list[str]:
    """Return one message per violated invariant; empty means valid."""
    report = []
    if (g.n * g.d) % 2:
        report.append(f"n*d = {g.n * g.d} is odd")
    for i, j in g.edges.tolist():
        if i == j:
            report.append(f"self-loop at vertex {i}")
        if not (0 <= i < g.n and 0 <= j < g.n):
            report.append(f"edge ({i}, {j}) has a vertex outside 0..{g.n - 1}")
    seen = set()
    for e in g.edges.tolist():
        e = tuple(e)
        if e in seen:
            report.append(f"multi-edge {e}")
        seen.add(e)
    in_range = g.edges[(g.edges >= 0).all(axis=1) & (g.edges < g.n).all(axis=1)]
    deg = np.bincount(in_range.ravel(), minlength=g.n)
    for v in np.flatnonzero(deg != g.d).tolist():
        report.append(f"vertex {v} has degree {int(deg[v])}, expected {g.d}")
    if g.num_edges * 2 != g.n * g.d:
        report.append(f"edge count {g.num_edges} != n*d/2 = {g.n * g.d / 2:g}")
    return report


def enumerate_regular_graphs(n: int, d: int) -> list[RegularGraph]:
    """Every labeled simple d-regular graph on n vertices, lexicographically ordered.

    Backtracking: the lowest vertex with a degree deficit picks its remaining
    neighbors among higher vertices, so each graph is produced exactly once.
    """
    if n > 10 or d > 3:
        raise TooLarge(f"enumeration guarded to n <= 10, d <= 3 (got n={n}, d={d})")
    if (n * d) % 2 or d >= n or d < 0:
        return []
    deficit = [d] * n
    chosen: list[tuple[int, int]] = []
    found: list[tuple[tuple[int, int], ...]] = []

    def extend(v: int) -> None:
        while v < n and deficit[v] == 0:
            v += 1
        if v == n:
            found.append(tuple(sorted(chosen)))
            return
        candidates = [u for u in range(v + 1, n) if deficit[u] > 0]
        for nbrs in itertools.combinations(candidates, deficit[v]):
            need = deficit[v]
            deficit[v] = 0
            for u in nbrs:
                deficit[u] -= 1
                chosen.append((v, u))
            extend(v + 1)
            for u in nbrs:
                deficit[u] += 1
                chosen.pop()
            deficit[v] = need

    extend(0)
    found.sort()
    return [RegularGraph.from_edges(n, d, edges) for edges in found]


def _check_switching(g: RegularGraph, s: Switching) -> str | None:
    i, j = s.first
    k, l = s.second
    if not g.has_edge(i, j):
        return f"missing edge {s.first}"
    if not g.has_edge(k, l):
        return f"missing edge {s.second}"
    if len({i, j, k, l}) < 4:
        return f"edges {s.first} and {s.second} share a vertex"
    for e in s.replacement():
        if g.has_edge(*e):
            return f"replacement edge {e} already present"
    return None


def list_switchable_pairs(g: RegularGraph, e: tuple[int, int]) -> list[Switching]:
    """All valid switchings with ``first = e``, in edge order then variant order."""
    i, j = int(e[0]), int(e[1])
    if not g.has_edge(i, j):
        raise EdgeNotPresent(f"edge {(i, j)} not in graph")
    out = []
    for k, l in g.edges.tolist():
        if k in (i, j) or l in (i, j):
            continue
        for variant in ("parallel", "crossed"):
            s = Switching((i, j), (k, l), variant)
            a, b = s.replacement()
            if not g.has_edge(*a) and not g.has_edge(*b):
                out.append(s)
    return out


def apply_switching(g: RegularGraph, s: Switching) -> RegularGraph:
    reason = _check_switching(g, s)
    if reason is not None:
        raise InvalidSwitching(reason)
    drop = {_normalize_edge(*s.first), _normalize_edge(*s.second)}
    kept = [e for e in g.edge_list() if e not in drop]
    return RegularGraph.from_edges(g.n, g.d, kept + list(s.replacement()))


@numba.njit(cache=True)
def _walk_kernel(edges, nbrs, first, second, variant):
    m = edges.shape[0]
    d = nbrs.shape[1]
    for t in range(first.shape[0]):
        a = first[t]
        b = second[t]
        if b >= a:
            b += 1
        i = edges[a, 0]
        j = edges[a, 1]
        k = edges[b, 0]
        l = edges[b, 1]
        if i == k or i == l or j == k or j == l:
            continue
        if variant[t] == 1:
            k, l = l, k
        # proposed new edges (i,k), (j,l)
        bad = False
        for c in range(d):
            if nbrs[i, c] == k or nbrs[j, c] == l:
                bad = True
                break
        if bad:
            continue
        for c in range(d):
            if nbrs[i, c] == j:
                nbrs[i, c] = k
            if nbrs[j, c] == i:
                nbrs[j, c] = l
            if nbrs[k, c] == l:
                nbrs[k, c] = i
            if nbrs[l, c] == k:
                nbrs[l, c] = j
        edges[a, 0] = min(i, k)
        edges[a, 1] = max(i, k)
        edges[b, 0] = min(j, l)
        edges[b, 1] = max(j, l)
    return m


def switching_walk(g: RegularGraph, steps: int, seed: int, block: int = 1 << 16) -> RegularGraph:
    """Lazy double-edge-swap chain started at ``g``.

    Each step draws an ordered pair of distinct edges and a variant uniformly;
    proposals that would share a vertex or create a multi-edge are skipped but
    still count as a step.
    """
    if steps < 0:
        raise ValidationFailure("steps must be non-negative")
    if steps == 0 or g.num_edges < 2:
        return g
    edges = np.array(g.edges, dtype=np.int64)
    nbrs = np.array(g.neighbors, dtype=np.int64)
    m = len(edges)
    rng = make_rng(seed)
    remaining = steps
    while remaining:
        size = min(block, remaining)
        first = rng.integers(0, m, size=size)
        second = rng.integers(0, m - 1, size=size)
        variant = rng.integers(0, 2, size=size)
        _walk_kernel(edges, nbrs, first, second, variant)
        remaining -= size
    return RegularGraph.from_edges(g.n, g.d, edges)


def circulant_graph(n: int, d: int) -> RegularGraph:
    """Deterministic d-regular graph: i ~ i +- 1..d//2, plus i ~ i + n/2 when d is odd."""
    _check_feasible(n, d)
    edges = [(i, (i + k) % n) for i in range(n) for k in range(1, d // 2 + 1)]
    if d % 2:
        edges += [(i, i + n // 2) for i in range(n // 2)]
    return RegularGraph.from_edges(n, d, edges)


def sample_by_switching(n: int, d: int, seed: int, sweeps: int = 100) -> RegularGraph:
    """Approximately uniform d-regular graph from the lazy switching chain.

    Starts at :func:`circulant_graph` and runs ``sweeps * n * d / 2`` steps.
    The chain's stationary law is uniform, so this trades exactness for speed
    in regimes where whole-matching rejection is impractical (large d).
    """
    g = circulant_graph(n, d)
    return switching_walk(g, sweeps * g.num_edges, seed)


def sample_regular(n: int, d: int, seed: int, method: str = "auto") -> RegularGraph:
    """Dispatch between exact rejection and the switching chain.

    ``"auto"`` uses rejection while its expected attempt count
    ``exp((d^2 - 1) / 4)`` stays below ``exp(9)`` (d <= 6) and the
    switching chain beyond that.
    """
    if method == "auto":
        method = "rejection" if (d * d - 1) / 4 <= AUTO_REJECTION_LOG_ATTEMPTS else "switching"
    if method == "rejection":
        return sample_configuration_model(n, d, seed)
    if method == "switching":
        return sample_by_switching(n, d, seed)
    raise ValidationFailure(f"unknown sampler {method!r}")


def graph_to_text(g: RegularGraph) -> str:
    lines = [f"{g.n} {g.d}"]
    lines.extend(f"{i} {j}" for i, j in g.edges.tolist())
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> RegularGraph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValidationFailure("graph text must start with a 'n d' header line")
    n, d = int(rows[0][0]), int(rows[0][1])
    edges = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValidationFailure(f"line {lineno}: expected 'i j'")
        edges.append((int(row[0]), int(row[1])))
    if n < 1 or d < 0:
        raise ValidationFailure(f"bad header: n={n}, d={d}")
    if 2 * len(edges) != n * d:
        raise ValidationFailure(f"expected {n * d // 2} edges for n={n}, d={d}, found {len(edges)}")
    return RegularGraph.from_edges(n, d, np.array(edges, dtype=np.int64).reshape(-1, 2))


def write_graph(g: RegularGraph, path) -> Path:
    path = Path(path)
    path.write_text(graph_to_text(g))
    return path


def read_graph(path) -> RegularGraph:
    return graph_from_text(Path(path).read_text())
