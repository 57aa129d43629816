"""Problem data, synthetic generators and the text codecs.

An instance is a set of nodes that are both demand points and candidate
facility sites.  Node ``i`` can be served by a facility at ``j`` when
``dist[i][j] <= d_max``.  Scenarios hold integer demand realizations, all
equally likely.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterator, Union

import numpy as np

MASK64 = (1 << 64) - 1

PathOrStream = Union[str, "os.PathLike[str]", IO[str]]


class ParseError(ValueError):
    """Malformed instance or scenario file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SplitMix64:
    """The splitmix64 generator; integer stream identical on every platform."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return lo + int(self.uniform() * (hi - lo + 1))

    def normal(self) -> float:
        # Box-Muller, cosine branch only: two uniforms per normal.
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def build_arcs(dist, d_max: float) -> list[tuple[int, int]]:
    """All ordered pairs ``(i, j)`` with ``dist[i][j] <= d_max``, row-major."""
    d = np.asarray(dist)
    n = d.shape[0]
    return [(i, j) for i in range(n) for j in range(n) if d[i, j] <= d_max]


@dataclass(frozen=True, eq=False)
class Instance:
    dist: np.ndarray
    d_max: int
    cost: np.ndarray
    capacity: np.ndarray
    demand_mean: np.ndarray
    name: str = "instance"
    arcs: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=np.int64)
        n = dist.shape[0]
        if dist.shape != (n, n):
            raise ValueError("distance matrix must be square")
        for label in ("cost", "capacity", "demand_mean"):
            arr = np.asarray(getattr(self, label), dtype=np.int64)
            if arr.shape != (n,):
                raise ValueError(f"{label} must have {n} entries")
            if (arr < 0).any():
                raise ValueError(f"{label} entries must be nonnegative")
            arr.setflags(write=False)
            object.__setattr__(self, label, arr)
        if (dist < 0).any():
            raise ValueError("distances must be nonnegative")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "d_max", int(self.d_max))
        object.__setattr__(self, "arcs", tuple(build_arcs(dist, self.d_max)))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.d_max == other.d_max
            and np.array_equal(self.dist, other.dist)
            and np.array_equal(self.cost, other.cost)
            and np.array_equal(self.capacity, other.capacity)
            and np.array_equal(self.demand_mean, other.demand_mean)
        )

    def sources_of(self, j: int) -> list[int]:
        """Demand nodes that facility ``j`` may serve."""
        return [i for (i, jj) in self.arcs if jj == j]


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    demand: np.ndarray
    seed: int = 0
    cv: float = 0.0

    def __post_init__(self):
        demand = np.array(self.demand, dtype=np.int64, ndmin=2)
        if (demand < 0).any():
            raise ValueError("scenario demands must be nonnegative")
        demand.setflags(write=False)
        object.__setattr__(self, "demand", demand)

    @property
    def count(self) -> int:
        return self.demand.shape[0]

    @property
    def n(self) -> int:
        return self.demand.shape[1]

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioSet):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.cv == other.cv
            and np.array_equal(self.demand, other.demand)
        )


@dataclass(frozen=True)
class GeneratorParams:
    side: int = 100
    cost: tuple[int, int] = (1, 3)
    capacity: tuple[int, int] = (100, 300)
    demand: tuple[int, int] = (10, 60)
    # target mean number of other nodes within reach of each node
    reach: float = 3.0

    def validate(self) -> None:
        for label in ("cost", "capacity", "demand"):
            lo, hi = getattr(self, label)
            if lo > hi or lo < 0:
                raise ValueError(f"empty or negative {label} range {lo}..{hi}")
        if self.side < 1:
            raise ValueError("side must be positive")
        if self.reach < 0:
            raise ValueError("reach must be nonnegative")


def _choose_dmax(dist: np.ndarray, reach: float) -> int:
    n = dist.shape[0]
    off = dist[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    nearest = int(off.min(axis=1).max())
    pairs = np.sort(off.ravel())
    k = min(len(pairs) - 1, max(0, int(math.ceil(reach * n)) - 1))
    return max(nearest, int(pairs[k]))


def generate_instance(
    n: int, seed: int, params: GeneratorParams | None = None, name: str | None = None
) -> Instance:
    """Random points in a square with Euclidean integer distances.

    ``d_max`` is the larger of the worst nearest-neighbour distance (so every
    node reaches some other site) and the distance quantile that gives about
    ``params.reach`` reachable neighbours per node.
    """
    params = params or GeneratorParams()
    params.validate()
    if not 2 <= n <= 64:
        raise ValueError("n must lie in [2, 64]")
    rng = SplitMix64(seed)
    xy = np.array([[rng.uniform() * params.side, rng.uniform() * params.side] for _ in range(n)])
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.floor(np.sqrt((diff**2).sum(axis=2)) + 0.5).astype(np.int64)
    cost = [rng.randint(*params.cost) for _ in range(n)]
    capacity = [rng.randint(*params.capacity) for _ in range(n)]
    demand = [rng.randint(*params.demand) for _ in range(n)]
    return Instance(
        dist=dist,
        d_max=_choose_dmax(dist, params.reach),
        cost=np.array(cost),
        capacity=np.array(capacity),
        demand_mean=np.array(demand),
        name=name or f"rand{n}_{seed}",
    )


def generate_scenarios(instance: Instance, count: int, cv: float, seed: int) -> ScenarioSet:
    """Lognormal demand multipliers with mean 1 and coefficient of variation ``cv``.

    Draws are taken scenario-major (all nodes of scenario 0 first), one
    normal deviate per draw.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if cv < 0:
        raise ValueError("cv must be nonnegative")
    sigma2 = math.log1p(cv * cv)
    sigma = math.sqrt(sigma2)
    mu = -sigma2 / 2.0
    rng = SplitMix64(seed)
    w = instance.demand_mean.tolist()
    rows = []
    for _ in range(count):
        row = []
        for i in range(instance.n):
            m = math.exp(mu + sigma * rng.normal())
            row.append(max(0, math.floor(w[i] * m + 0.5)))
        rows.append(row)
    return ScenarioSet(demand=np.array(rows, dtype=np.int64), seed=seed & MASK64, cv=float(cv))


# --- codecs -----------------------------------------------------------------


def _open_text(target: PathOrStream, mode: str):
    if hasattr(target, "read") or hasattr(target, "write"):
        return _NoClose(target)
    return open(target, mode, encoding="ascii", newline="\n")


class _NoClose:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        return False


def _lines(stream) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(stream, start=1):
        yield lineno, raw.split()


class _Reader:
    def __init__(self, stream):
        self.it = _lines(stream)
        self.lineno = 0

    def next(self, what: str) -> list[str]:
        try:
            self.lineno, tokens = next(self.it)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected {what}", self.lineno + 1) from None
        return tokens

    def ints(self, tokens: list[str], count: int, what: str, nonneg: bool = True) -> list[int]:
        if len(tokens) != count:
            raise ParseError(f"{what}: expected {count} values, got {len(tokens)}", self.lineno)
        try:
            values = [int(t) for t in tokens]
        except ValueError:
            raise ParseError(f"{what}: non-integer value", self.lineno) from None
        if nonneg and any(v < 0 for v in values):
            raise ParseError(f"{what}: negative value", self.lineno)
        return values

    def keyed(self, key: str, count: int) -> list[int]:
        tokens = self.next(key)
        if not tokens or tokens[0] != key:
            raise ParseError(f"expected '{key}'", self.lineno)
        return self.ints(tokens[1:], count, key)

    def expect_end(self) -> None:
        for lineno, tokens in self.it:
            if tokens:
                raise ParseError("trailing content", lineno)


def write_instance(instance: Instance, target: PathOrStream) -> None:
    with _open_text(target, "w") as f:
        f.write("BOSFLP 1\n")
        f.write(f"n {instance.n}\n")
        f.write(f"dmax {instance.d_max}\n")
        f.write("cost " + " ".join(map(str, instance.cost.tolist())) + "\n")
        f.write("capacity " + " ".join(map(str, instance.capacity.tolist())) + "\n")
        f.write("demand " + " ".join(map(str, instance.demand_mean.tolist())) + "\n")
        for row in instance.dist.tolist():
            f.write(" ".join(map(str, row)) + "\n")


def read_instance(source: PathOrStream, name: str | None = None) -> Instance:
    if name is None and isinstance(source, (str, os.PathLike)):
        name = os.path.splitext(os.path.basename(os.fspath(source)))[0]
    with _open_text(source, "r") as f:
        r = _Reader(f)
        if r.next("header") != ["BOSFLP", "1"]:
            raise ParseError("expected header 'BOSFLP 1'", r.lineno)
        (n,) = r.keyed("n", 1)
        if n < 1:
            raise ParseError("n must be positive", r.lineno)
        (dmax,) = r.keyed("dmax", 1)
        cost = r.keyed("cost", n)
        capacity = r.keyed("capacity", n)
        demand = r.keyed("demand", n)
        dist = [r.ints(r.next("distance row"), n, "distance row") for _ in range(n)]
        r.expect_end()
    return Instance(
        dist=np.array(dist, dtype=np.int64),
        d_max=dmax,
        cost=np.array(cost),
        capacity=np.array(capacity),
        demand_mean=np.array(demand),
        name=name or "instance",
    )


def write_scenarios(scenarios: ScenarioSet, target: PathOrStream) -> None:
    with _open_text(target, "w") as f:
        f.write("SCEN 1\n")
        f.write(f"n {scenarios.n} N {scenarios.count} seed {scenarios.seed} cv {scenarios.cv!r}\n")
        for row in scenarios.demand.tolist():
            f.write(" ".join(map(str, row)) + "\n")


def read_scenarios(source: PathOrStream) -> ScenarioSet:
    with _open_text(source, "r") as f:
        r = _Reader(f)
        if r.next("header") != ["SCEN", "1"]:
            raise ParseError("expected header 'SCEN 1'", r.lineno)
        tokens = r.next("dimensions")
        if len(tokens) != 8 or tokens[0::2] != ["n", "N", "seed", "cv"]:
            raise ParseError("expected 'n <int> N <int> seed <u64> cv <decimal>'", r.lineno)
        try:
            n, count, seed = int(tokens[1]), int(tokens[3]), int(tokens[5])
            cv = float(tokens[7])
        except ValueError:
            raise ParseError("bad number in dimension line", r.lineno) from None
        if n < 1 or count < 1 or not 0 <= seed <= MASK64 or not cv >= 0:
            raise ParseError("dimension out of range", r.lineno)
        rows = [r.ints(r.next("scenario row"), n, "scenario row") for _ in range(count)]
        r.expect_end()
    return ScenarioSet(demand=np.array(rows, dtype=np.int64).reshape(count, n), seed=seed, cv=cv)


def dumps_instance(instance: Instance) -> str:
    buf = io.StringIO()
    write_instance(instance, buf)
    return buf.getvalue()


def dumps_scenarios(scenarios: ScenarioSet) -> str:
    buf = io.StringIO()
    write_scenarios(scenarios, buf)
    return buf.getvalue()


def reference_instance() -> tuple[Instance, ScenarioSet]:
    """Three nodes on a line at 0, 1 and 5 with reach 2 and two scenarios."""
    pos = np.array([0, 1, 5])
    inst = Instance(
        dist=np.abs(pos[:, None] - pos[None, :]),
        d_max=2,
        cost=np.array([3, 2, 4]),
        capacity=np.array([5, 5, 5]),
        demand_mean=np.array([3, 4, 7]),
        name="T1",
    )
    return inst, ScenarioSet(demand=np.array([[4, 3, 6], [2, 5, 8]]))
