"""Problem instances for TSP, MDKP and MIS: types, parsers, writers, generators.

All instance types are frozen dataclasses holding tuples, so they compare by
value and can be shared freely. Numeric views (``numpy`` arrays) are built
lazily on first access.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import InvalidInstanceError, ParseError

# Recorded in generated instances so they can be reproduced elsewhere.
GENERATOR_ID = "numpy.random.default_rng/PCG64"


def euclid_round(dx, dy) -> int:
    """Euclidean length rounded to the nearest integer, halves away from zero."""
    return int(math.floor(math.sqrt(dx * dx + dy * dy) + 0.5))


@dataclass(frozen=True)
class TspInstance:
    name: str
    n: int
    coords: tuple
    dist: tuple
    comment: str = ""

    kind = "tsp"

    def __post_init__(self):
        if self.n < 3:
            raise InvalidInstanceError(f"TSP needs at least 3 cities, got {self.n}")
        if len(self.coords) != self.n or len(self.dist) != self.n:
            raise InvalidInstanceError("coordinate/distance dimensions disagree with n")
        for i in range(self.n):
            row = self.dist[i]
            if len(row) != self.n:
                raise InvalidInstanceError(f"distance row {i} has wrong length")
            if row[i] != 0:
                raise InvalidInstanceError(f"dist[{i}][{i}] must be 0")
            for j in range(i + 1, self.n):
                if row[j] != self.dist[j][i]:
                    raise InvalidInstanceError(f"dist not symmetric at ({i}, {j})")
                if row[j] < 0:
                    raise InvalidInstanceError(f"negative distance at ({i}, {j})")

    @classmethod
    def from_coords(cls, name, coords, comment=""):
        coords = tuple((int(x), int(y)) for x, y in coords)
        n = len(coords)
        dist = tuple(
            tuple(euclid_round(xi - xj, yi - yj) for (xj, yj) in coords)
            for (xi, yi) in coords
        )
        return cls(name=name, n=n, coords=coords, dist=dist, comment=comment)

    @cached_property
    def cost(self) -> np.ndarray:
        return np.array(self.dist, dtype=float)

    @cached_property
    def edges(self) -> list:
        """Edge-variable layout used everywhere: (i, j), i < j, lexicographic."""
        return list(combinations(range(self.n), 2))

    @property
    def best_known(self):
        return None

    def tour_length(self, tour) -> int:
        return sum(self.dist[tour[k - 1]][tour[k]] for k in range(len(tour)))


@dataclass(frozen=True)
class MdkpInstance:
    name: str
    n: int
    m: int
    p: tuple
    w: tuple
    c: tuple
    best_known: Optional[float] = None

    kind = "mdkp"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InvalidInstanceError("MDKP needs n >= 1 and m >= 1")
        if len(self.p) != self.n or len(self.c) != self.m or len(self.w) != self.m:
            raise InvalidInstanceError("MDKP dimensions inconsistent")
        if any(len(row) != self.n for row in self.w):
            raise InvalidInstanceError("MDKP weight rows must have n entries")
        if any(v < 0 for v in self.p):
            raise InvalidInstanceError("negative profit")
        if any(v < 0 for row in self.w for v in row):
            raise InvalidInstanceError("negative weight")
        if any(v <= 0 for v in self.c):
            raise InvalidInstanceError("capacities must be positive")

    @cached_property
    def profits(self) -> np.ndarray:
        return np.array(self.p, dtype=float)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array(self.w, dtype=float).reshape(self.m, self.n)

    @cached_property
    def capacities(self) -> np.ndarray:
        return np.array(self.c, dtype=float)

    def usage(self, x) -> np.ndarray:
        """Resource consumption sum_i w_ji x_i for every constraint j."""
        return self.weights @ np.asarray(x, dtype=float)

    def objective(self, x) -> float:
        return float(self.profits @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class MisInstance:
    name: str
    n: int
    edges: tuple
    best_known: Optional[float] = None
    duplicates: int = field(default=0, compare=False)

    kind = "mis"

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInstanceError("graph needs at least one vertex")
        seen = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise InvalidInstanceError(f"self-loop at vertex {i}")
            if not (0 <= i < j < self.n):
                raise InvalidInstanceError(f"edge {e} not a normalized pair in [0, {self.n})")
            if e in seen:
                raise InvalidInstanceError(f"duplicate edge {e}")
            seen.add(e)

    @classmethod
    def from_edges(cls, name, n, edges, best_known=None):
        norm = sorted({(min(i, j), max(i, j)) for i, j in edges})
        return cls(name=name, n=n, edges=tuple(norm), best_known=best_known)

    @cached_property
    def incidence(self) -> np.ndarray:
        """|E| x n edge-vertex incidence matrix."""
        a = np.zeros((len(self.edges), self.n))
        for k, (i, j) in enumerate(self.edges):
            a[k, i] = a[k, j] = 1.0
        return a

    @cached_property
    def neighbors(self) -> list:
        nb = [set() for _ in range(self.n)]
        for i, j in self.edges:
            nb[i].add(j)
            nb[j].add(i)
        return nb

    def degrees(self) -> list:
        return [len(s) for s in self.neighbors]

    def objective(self, x) -> float:
        return float(np.sum(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------- generation


def generate_tsp(n, seed, coord_range=1000, name=None) -> TspInstance:
    """Uniform integer coordinates in [0, coord_range]^2, rounded Euclidean costs."""
    if n < 3:
        raise InvalidInstanceError(f"TSP needs at least 3 cities, got {n}")
    if coord_range <= 0:
        raise InvalidInstanceError("coord_range must be positive")
    rng = np.random.default_rng(seed)
    xy = rng.integers(0, coord_range, size=(n, 2), endpoint=True)
    comment = f"generator={GENERATOR_ID} seed={seed} range={coord_range}"
    return TspInstance.from_coords(name or f"tsp{n}_s{seed}", [tuple(r) for r in xy], comment)


def generate_mdkp(n, m, seed, max_weight=30, max_profit=50, tightness=0.5, name=None):
    """Random MDKP with integer data; capacity_j = tightness * sum_i w_ji (at least 1).

    ``best_known`` is left unset; callers that need it fill it by enumeration.
    """
    rng = np.random.default_rng(seed)
    w = rng.integers(1, max_weight, size=(m, n), endpoint=True)
    p = rng.integers(1, max_profit, size=n, endpoint=True)
    c = np.maximum(1, np.floor(tightness * w.sum(axis=1))).astype(int)
    return MdkpInstance(
        name=name or f"mdkp{n}x{m}_s{seed}",
        n=n,
        m=m,
        p=tuple(int(v) for v in p),
        w=tuple(tuple(int(v) for v in row) for row in w),
        c=tuple(int(v) for v in c),
    )


def generate_mis(n, edge_prob, seed, name=None) -> MisInstance:
    rng = np.random.default_rng(seed)
    draws = rng.random(n * (n - 1) // 2)
    edges = [e for e, u in zip(combinations(range(n), 2), draws) if u < edge_prob]
    return MisInstance.from_edges(name or f"mis{n}_s{seed}", n, edges)


# ------------------------------------------------------------------- TSPLIB

_TSPLIB_KEYS = {"NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE"}


def _lines(text):
    # splitlines() already treats CRLF as one break
    return text.splitlines()


def _as_int(token, line):
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r}", line) from None
    if not math.isfinite(v) or v != int(v):
        raise ParseError(f"expected an integer, got {token!r}", line)
    return int(v)


def parse_tsplib(text) -> TspInstance:
    header = {}
    coords = {}
    lines = _lines(text)
    k = 0
    section_line = None
    while k < len(lines):
        raw = lines[k].strip()
        k += 1
        if not raw:
            continue
        if raw == "EOF":
            break
        if raw.startswith("NODE_COORD_SECTION"):
            section_line = k
            break
        if ":" not in raw:
            raise ParseError(f"expected 'KEY: value', got {raw!r}", k)
        key, value = (s.strip() for s in raw.split(":", 1))
        if key not in _TSPLIB_KEYS:
            raise ParseError(f"unsupported keyword {key!r}", k)
        header[key] = (value, k)

    for key in ("TYPE", "DIMENSION", "EDGE_WEIGHT_TYPE"):
        if key not in header:
            raise ParseError(f"missing keyword {key}", k if k else None)
    if header["TYPE"][0] != "TSP":
        raise ParseError(f"TYPE must be TSP, got {header['TYPE'][0]!r}", header["TYPE"][1])
    if header["EDGE_WEIGHT_TYPE"][0] != "EUC_2D":
        raise ParseError("only EUC_2D weights are supported", header["EDGE_WEIGHT_TYPE"][1])
    dim = _as_int(header["DIMENSION"][0], header["DIMENSION"][1])
    if section_line is None:
        raise ParseError("missing NODE_COORD_SECTION", len(lines))

    last_line = section_line
    while k < len(lines):
        raw = lines[k].strip()
        k += 1
        if not raw:
            continue
        if raw == "EOF":
            break
        last_line = k
        parts = raw.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'index x y', got {raw!r}", k)
        idx, x, y = (_as_int(t, k) for t in parts)
        if not 1 <= idx <= dim:
            raise ParseError(f"node index {idx} outside 1..{dim}", k)
        if idx in coords:
            raise ParseError(f"node {idx} listed twice", k)
        coords[idx] = (x, y)
    if len(coords) != dim:
        raise ParseError(f"DIMENSION is {dim} but {len(coords)} coordinates were given", last_line)

    name = header.get("NAME", ("", 0))[0]
    comment = header.get("COMMENT", ("", 0))[0]
    try:
        return TspInstance.from_coords(name, [coords[i] for i in range(1, dim + 1)], comment)
    except InvalidInstanceError as exc:
        raise ParseError(str(exc), header["DIMENSION"][1]) from exc


def write_tsplib(inst: TspInstance) -> str:
    out = [f"NAME: {inst.name}", "TYPE: TSP"]
    if inst.comment:
        out.append(f"COMMENT: {inst.comment}")
    out += [f"DIMENSION: {inst.n}", "EDGE_WEIGHT_TYPE: EUC_2D", "NODE_COORD_SECTION"]
    out += [f"{i + 1} {x} {y}" for i, (x, y) in enumerate(inst.coords)]
    out.append("EOF")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------- MDKP


def _number(token):
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {token!r}")
    return int(v) if v == int(v) else v


def parse_mdkp(text, name="") -> MdkpInstance:
    """Canonical layout: ``n m``, n profits, m rows of n weights, m capacities,
    then an optional best-known objective. Token positions are all that matter.
    """
    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError("truncated stream: missing 'n m' header")
    n, m = _number(tokens[0]), _number(tokens[1])
    if not (isinstance(n, int) and isinstance(m, int)) or n < 1 or m < 1:
        raise ParseError(f"bad header {tokens[0]} {tokens[1]}")
    need = 2 + n + n * m + m
    if len(tokens) < need:
        raise ParseError(f"truncated stream: expected at least {need} values, got {len(tokens)}")
    if len(tokens) > need + 1:
        raise ParseError(f"{len(tokens) - need - 1} unexpected trailing values")
    vals = [_number(t) for t in tokens[2:]]
    p = vals[:n]
    w = [vals[n + j * n: n + (j + 1) * n] for j in range(m)]
    c = vals[n + n * m: need - 2]
    best = vals[need - 2] if len(vals) > need - 2 else None
    if any(v < 0 for row in w for v in row):
        raise ParseError("negative weight")
    if any(v <= 0 for v in c):
        raise ParseError("capacities must be positive")
    try:
        return MdkpInstance(name, n, m, tuple(p), tuple(tuple(r) for r in w), tuple(c), best)
    except InvalidInstanceError as exc:
        raise ParseError(str(exc)) from exc


def write_mdkp(inst: MdkpInstance) -> str:
    out = [f"{inst.n} {inst.m}", " ".join(map(str, inst.p))]
    out += [" ".join(map(str, row)) for row in inst.w]
    out.append(" ".join(map(str, inst.c)))
    if inst.best_known is not None:
        out.append(str(inst.best_known))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------- DIMACS


def parse_dimacs_graph(text, name="") -> MisInstance:
    """DIMACS ``p edge n m`` / ``e u v`` (1-based). Duplicate edges are collapsed
    and counted in ``duplicates``. A ``c best_known <v>`` comment is honoured.
    """
    n = m = None
    best = None
    edges = set()
    count = dups = 0
    header_line = None
    for k, raw in enumerate(_lines(text), start=1):
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "c":
            if len(parts) == 3 and parts[1] == "best_known":
                best = _number(parts[2])
            continue
        if tag == "p":
            if n is not None:
                raise ParseError("second problem line", k)
            if len(parts) != 4 or parts[1] not in ("edge", "col"):
                raise ParseError(f"expected 'p edge n m', got {raw.strip()!r}", k)
            n, m = _as_int(parts[2], k), _as_int(parts[3], k)
            header_line = k
            continue
        if tag == "e":
            if n is None:
                raise ParseError("edge before problem line", k)
            if len(parts) != 3:
                raise ParseError(f"expected 'e u v', got {raw.strip()!r}", k)
            u, v = _as_int(parts[1], k), _as_int(parts[2], k)
            if not (1 <= u <= n and 1 <= v <= n):
                raise ParseError(f"vertex out of range 1..{n}", k)
            if u == v:
                raise ParseError("self-loop", k)
            count += 1
            e = (min(u, v) - 1, max(u, v) - 1)
            if e in edges:
                dups += 1
            edges.add(e)
            continue
        raise ParseError(f"unknown line type {tag!r}", k)
    if n is None:
        raise ParseError("missing 'p edge' line")
    if count != m:
        raise ParseError(f"header declares {m} edges but {count} were listed", header_line)
    return MisInstance(name, n, tuple(sorted(edges)), best, duplicates=dups)


def write_dimacs(inst: MisInstance) -> str:
    out = []
    if inst.best_known is not None:
        out.append(f"c best_known {inst.best_known}")
    out.append(f"p edge {inst.n} {len(inst.edges)}")
    out += [f"e {i + 1} {j + 1}" for i, j in inst.edges]
    return "\n".join(out) + "\n"


def load_instance(path, kind=None):
    """Read an instance file; ``kind`` defaults to the file extension."""
    import os

    text = open(path, encoding="utf-8").read()
    stem, ext = os.path.splitext(os.path.basename(path))
    kind = kind or {".tsp": "tsp", ".dat": "mdkp", ".txt": "mdkp", ".col": "mis", ".clq": "mis"}.get(ext)
    if kind == "tsp":
        return parse_tsplib(text)
    if kind == "mdkp":
        return parse_mdkp(text, name=stem)
    if kind == "mis":
        return parse_dimacs_graph(text, name=stem)
    raise InvalidInstanceError(f"cannot infer problem kind for {path!r}")
