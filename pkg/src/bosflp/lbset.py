"""Lower and upper bound sets in objective space.

Both objectives are minimized: ``f1`` is opening cost and ``f2`` the negated
expected coverage.  A lower bound set is the lower-left boundary of the
convex hull of a node's relaxation, described by its corner points and
computed by weighted-sum (dichotomic) search.  The upper bound set holds the
exact images of all nondominated binary solutions found so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .bruteforce import FrontPoint
from .instance import Instance, ScenarioSet
from .lp import INF
from .master import INT_TOL, MasterState, is_integer_vector, separate_cuts
from .subproblem import CoverageEvaluator

SHAVE_EPS = 1e-6  # in grid units; absorbs LP round-off, errs towards keeping
SHAVE_REL = 1e-7  # LP round-off grows with the value, whatever the grid


class LBSetError(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class ObjPoint:
    f1: float
    f2: float
    z: np.ndarray
    is_integer: bool

    @classmethod
    def at(cls, f1: float, f2: float, z) -> "ObjPoint":
        z = np.asarray(z, dtype=float)
        return cls(float(f1), float(f2), z, is_integer_vector(z))


@dataclass(frozen=True)
class Lifted:
    """A weighted solve whose point ended strictly above the segment it probed."""

    point: ObjPoint


@dataclass(frozen=True)
class LBSet:
    points: tuple[ObjPoint, ...]

    def __post_init__(self):
        check_lb_set(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __bool__(self) -> bool:
        return bool(self.points)

    def value_at(self, x: float) -> float:
        """Height of the boundary at cost ``x`` (``inf`` left of the first corner)."""
        pts = self.points
        if x < pts[0].f1:
            return INF
        for p, q in zip(pts, pts[1:]):
            if x <= q.f1:
                t = (x - p.f1) / (q.f1 - p.f1)
                return p.f2 + t * (q.f2 - p.f2)
        return pts[-1].f2

    def cost_at(self, y: float) -> float:
        """Smallest cost at which the boundary is at or below ``y``."""
        pts = self.points
        if y >= pts[0].f2:
            return pts[0].f1
        if y < pts[-1].f2:
            return INF
        for p, q in zip(pts, pts[1:]):
            if y >= q.f2:
                t = (p.f2 - y) / (p.f2 - q.f2)
                return p.f1 + t * (q.f1 - p.f1)
        return pts[-1].f1



def check_lb_set(points: Sequence[ObjPoint]) -> None:
    """Ordering (f1 up, f2 down) and strict convexity of the corner points."""
    for p, q in zip(points, points[1:]):
        if not (q.f1 > p.f1 and q.f2 < p.f2):
            raise LBSetError(f"corner points out of order: {(p.f1, p.f2)} then {(q.f1, q.f2)}")
    slopes = [(q.f2 - p.f2) / (q.f1 - p.f1) for p, q in zip(points, points[1:])]
    for s, t in zip(slopes, slopes[1:]):
        if not t > s:
            raise LBSetError(f"lower bound set not convex: slopes {s} then {t}")


EMPTY = LBSet(())


# --- granularity -------------------------------------------------------------


def shave_bound(value: float, g, direction: str = "up") -> float:
    """Move ``value`` to the adjacent multiple of ``g``.

    ``"up"`` tightens a lower bound, ``"down"`` an upper bound.  Values within
    ``SHAVE_EPS`` grid units, or ``SHAVE_REL * (1 + |value|)``, of a multiple
    snap to it.
    """
    if g <= 0:
        raise ValueError("granularity must be positive")
    if math.isinf(value):
        return value
    g = float(g)
    eps = max(SHAVE_EPS, SHAVE_REL * (1.0 + abs(value)) / g)
    if direction == "up":
        return math.ceil(value / g - eps) * g
    if direction == "down":
        return math.floor(value / g + eps) * g
    raise ValueError(f"unknown direction {direction!r}")


# --- upper bound set ---------------------------------------------------------


class UBSet:
    """Mutually nondominated binary solutions with exact images, sorted by cost."""

    def __init__(self, instance: Instance, scenarios: ScenarioSet, evaluator: CoverageEvaluator | None = None):
        self.instance = instance
        self.scenarios = scenarios
        self.evaluator = evaluator or CoverageEvaluator(instance, scenarios)
        self.entries: list[FrontPoint] = []
        self._seen: dict[bytes, tuple[int, Fraction]] = {}
        self.evaluations = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def images(self) -> list[tuple[int, Fraction]]:
        return [(p.f1, p.f2) for p in self.entries]

    def evaluate(self, z) -> tuple[int, Fraction]:
        zb = tuple(int(round(v)) for v in z)
        key = bytes(zb)
        hit = self._seen.get(key)
        if hit is None:
            covered = int(self.evaluator.coverages(zb).sum())
            hit = (int(np.dot(self.instance.cost, zb)), Fraction(-covered, self.scenarios.count))
            self.evaluations += 1
            self._seen[key] = hit
        return hit

    def insert(self, z) -> bool:
        """Add the binary solution ``z`` unless weakly dominated; True when added."""
        zb = tuple(int(round(v)) for v in z)
        f1, f2 = self.evaluate(zb)
        return self.insert_point(FrontPoint(f1, f2, zb))

    def insert_point(self, p: FrontPoint) -> bool:
        for q in self.entries:
            if q.f1 <= p.f1 and q.f2 <= p.f2:
                return False
        kept = [q for q in self.entries if not (p.f1 <= q.f1 and p.f2 <= q.f2)]
        kept.append(p)
        kept.sort(key=lambda q: (q.f1, q.f2))
        self.entries = kept
        return True


def insert_ub(ub: UBSet, z, instance: Instance | None = None, scenarios: ScenarioSet | None = None) -> UBSet:
    ub.insert(z)
    return ub


# --- weighted-sum machinery ---------------------------------------------------


@dataclass
class CutPolicy:
    """How cuts are generated while solving one weighted problem.

    ``incumbent_only``: separate only at integer solutions.  ``mode``:
    ``first_violated`` or ``all_violated``.
    """

    incumbent_only: bool = False
    mode: str = "first_violated"


def _cut_loop(state: MasterState, sol, policy: CutPolicy, ub: UBSet | None):
    rounds = 0
    while sol.optimal and state.decomposed:
        z = sol.primal[: state.instance.n]
        if policy.incumbent_only and not is_integer_vector(z):
            break
        if not separate_cuts(state, sol, policy.mode):
            break
        rounds += 1
        if rounds > state.settings.max_cut_rounds:
            raise RuntimeError("cut loop did not terminate")
        sol = state.solve()
    if sol.optimal and ub is not None:
        z = sol.primal[: state.instance.n]
        if is_integer_vector(z):
            ub.insert(z)
    return sol


def _weighted_value(w1: float, w2: float, f1: float, f2: float) -> float:
    s = w1 + w2
    return (w1 * f1 + w2 * f2) / s


def lexmin_extreme(state: MasterState, first: str, policy: CutPolicy, ub: UBSet | None = None) -> ObjPoint | None:
    """Lexicographic minimum with ``first`` (``"f1"`` or ``"f2"``) as the leading objective.

    The leading objective is fixed through its bound row for the second
    phase.  Returns None when the node's master is infeasible.
    """
    if first not in ("f1", "f2"):
        raise ValueError(first)
    lead, follow = ((1.0, 0.0), (0.0, 1.0)) if first == "f1" else ((0.0, 1.0), (1.0, 0.0))
    saved = (state.bound1, state.bound2)
    try:
        for _ in range(state.settings.max_cut_rounds):
            state.set_weights(lead)
            sol = _cut_loop(state, state.solve(), policy, ub)
            if not sol.optimal:
                return None
            p = state.point(sol)
            v = p.f1 if first == "f1" else p.f2
            cap = v + 1e-9 * (1.0 + abs(v))
            if first == "f1":
                state.set_bounds(min(saved[0], cap), saved[1])
            else:
                state.set_bounds(saved[0], min(saved[1], cap))
            state.set_weights(follow)
            sol = _cut_loop(state, state.solve(), policy, ub)
            state.set_bounds(*saved)
            if sol.optimal:
                p = state.point(sol)
                return ObjPoint.at(p.f1, p.f2, p.z)
            # cuts added in the second phase moved the first optimum; redo
        raise RuntimeError("lexicographic solve did not settle")
    finally:
        state.set_bounds(*saved)


def weights_for(a: ObjPoint, b: ObjPoint) -> tuple[float, float]:
    """Weights whose level lines are parallel to segment ``a``-``b``."""
    return a.f2 - b.f2, b.f1 - a.f1


def solve_weighted(
    state: MasterState,
    w1: float,
    w2: float,
    policy: CutPolicy,
    ub: UBSet | None = None,
    segment: tuple[ObjPoint, ObjPoint] | None = None,
) -> ObjPoint | Lifted | None:
    """Weighted-sum optimum of the master under ``policy``.

    When ``segment`` is given and the final point lies strictly above the
    line through it, the result is wrapped in :class:`Lifted`.
    """
    state.set_weights((w1, w2))
    sol = _cut_loop(state, state.solve(), policy, ub)
    if not sol.optimal:
        return None
    p = state.point(sol)
    point = ObjPoint.at(p.f1, p.f2, p.z)
    if segment is not None:
        a = segment[0]
        ref = _weighted_value(w1, w2, a.f1, a.f2)
        val = _weighted_value(w1, w2, point.f1, point.f2)
        if val - ref > state.settings.tol_seg * (1.0 + abs(ref)):
            return Lifted(point)
    return point


class SegmentScreen:
    """Tells when refining a segment cannot matter any more.

    Corners are exact bound values, so a segment with no admissible cost
    strictly between its ends never needs refining.  Otherwise the part of
    the boundary between corners ``a`` and ``b`` lies in ``f1 >= a1,
    f2 >= b2``; if no admissible point of that quadrant with ``f1 <= b1``
    sits in a box left open by the UB set, refining it cannot change which
    regions survive filtering either.
    """

    def __init__(self, ub: UBSet, g1, g2, bounds=(INF, INF)):
        self.ub, self.g1, self.g2, self.bounds = ub, g1, g2, bounds
        self._size = -1
        self._boxes: list[tuple[float, float]] = []

    def _current(self) -> list[tuple[float, float]]:
        if len(self.ub) != self._size:
            self._size = len(self.ub)
            self._boxes = [
                (shave_bound(float(n1), self.g1, "down"), shave_bound(float(n2), self.g2, "down"))
                for n1, n2 in local_upper_bounds(self.ub.images(), self.g1, self.g2, self.bounds)
            ]
        return self._boxes

    def useless(self, a: ObjPoint, b: ObjPoint) -> bool:
        # corners are exact, so only admissible costs strictly between them matter
        g1 = float(self.g1)
        inner = (math.floor(a.f1 / g1 + SHAVE_EPS) + 1) * g1
        if inner >= b.f1 - SHAVE_EPS * g1:
            return True
        x = shave_bound(a.f1, self.g1, "up")
        y = shave_bound(b.f2, self.g2, "up")
        return not any(
            n1 >= x - 1e-9 * (1 + abs(x)) and n2 >= y - 1e-9 * (1 + abs(y)) for n1, n2 in self._current()
        )


def compute_lb_set(
    state: MasterState, policy: CutPolicy, ub: UBSet | None = None, screen: SegmentScreen | None = None
) -> LBSet:
    """Corner points of the node's lower bound set (node already applied to ``state``).

    With a ``screen``, segments it reports useless are not refined.
    """
    a = lexmin_extreme(state, "f1", policy, ub)
    if a is None:
        return EMPTY
    b = lexmin_extreme(state, "f2", policy, ub)
    if b is None:
        return EMPTY
    eps = 1e-9
    if b.f1 <= a.f1 + eps * (1 + abs(a.f1)) or a.f2 <= b.f2 + eps * (1 + abs(b.f2)):
        # degenerate extremes: the ideal point is the bound
        if abs(a.f1 - b.f1) <= eps * (1 + abs(a.f1)) and abs(a.f2 - b.f2) <= eps * (1 + abs(a.f2)):
            return LBSet((a,))
        src = b if b.f1 <= a.f1 + eps * (1 + abs(a.f1)) else a
        return LBSet((ObjPoint(min(a.f1, b.f1), min(a.f2, b.f2), src.z, False),))
    tol = state.settings.tol_seg
    # iterative dichotomic refinement; ``out`` collects corners left to right
    out = [a]
    stack = [(a, b)]
    while stack:
        left, right = stack.pop()
        if screen is not None and screen.useless(left, right):
            out.append(right)
            continue
        w1, w2 = weights_for(left, right)
        c = solve_weighted(state, w1, w2, policy, ub, segment=(left, right))
        if isinstance(c, Lifted) or c is None:
            out.append(right)
            continue
        ref = _weighted_value(w1, w2, left.f1, left.f2)
        gain = ref - _weighted_value(w1, w2, c.f1, c.f2)
        inside = (
            left.f1 + eps * (1 + abs(left.f1)) < c.f1 < right.f1 - eps * (1 + abs(right.f1))
            and right.f2 + eps * (1 + abs(right.f2)) < c.f2 < left.f2 - eps * (1 + abs(left.f2))
        )
        if gain > tol * (1.0 + abs(ref)) and inside:
            # process (left, c) first so corners come out ordered
            stack.append((c, right))
            stack.append((left, c))
        else:
            out.append(right)
    return LBSet(tuple(_drop_collinear(out)))


def _drop_collinear(points: list[ObjPoint]) -> list[ObjPoint]:
    """Remove corners that break strict convexity through round-off."""
    pts = list(points)
    changed = True
    while changed and len(pts) > 2:
        changed = False
        for k in range(1, len(pts) - 1):
            p, q, r = pts[k - 1], pts[k], pts[k + 1]
            s1 = (q.f2 - p.f2) / (q.f1 - p.f1)
            s2 = (r.f2 - q.f2) / (r.f1 - q.f1)
            if not s2 > s1:
                del pts[k]
                changed = True
                break
    return pts


# --- filtering ----------------------------------------------------------------


@dataclass
class LBPiece:
    """A continuous part of a filtered lower bound set.

    ``lo``/``hi`` delimit it along the cost axis; ``bound1``/``bound2`` bound
    the objective-space region a child node must search; ``corners`` are the
    corner points whose segments touch the piece.
    """

    lo: float
    hi: float
    bound1: float | Fraction
    bound2: float | Fraction
    corners: list[ObjPoint] = field(default_factory=list)


def local_upper_bounds(ub_images, g1, g2, bounds=(INF, INF)) -> list[tuple]:
    """Corners of the region not yet excluded by the UB points, shaved by one grid step.

    An admissible point not weakly dominated by ``u`` has ``f1 <= u1 - g1``
    or ``f2 <= u2 - g2``; the union of those half-planes over the UB set is
    a staircase whose outer corners are returned, sorted by cost.
    """
    B1, B2 = bounds
    pts = sorted(ub_images)
    if not pts:
        raw = [(B1, B2)]
    else:
        raw = [(pts[0][0] - g1, B2)]
        raw += [(pts[k + 1][0] - g1, pts[k][1] - g2) for k in range(len(pts) - 1)]
        raw.append((B1, pts[-1][1] - g2))
    capped = [(_min(n1, B1), _min(n2, B2)) for n1, n2 in raw]
    out = []
    for k, n in enumerate(capped):
        # drop boxes contained in another one (keep the first of equal boxes)
        if any(
            (m[0] >= n[0] and m[1] >= n[1]) and (m != n or i < k)
            for i, m in enumerate(capped)
            if i != k
        ):
            continue
        out.append(n)
    out.sort(key=lambda n: (float(n[0]), -float(n[1])))
    return out


def _min(a, b):
    return b if float(b) < float(a) else a


def box_is_relevant(lb: LBSet, n1, n2, g1, g2) -> bool:
    """Whether some admissible point in ``{f1 <= n1, f2 <= n2}`` lies on or above ``lb``."""
    a, b = lb.points[0], lb.points[-1]
    x = float(n1)
    if not math.isinf(x):
        x = shave_bound(x, g1, "down")
        if x < shave_bound(a.f1, g1, "up") - 1e-9 * (1 + abs(x)):
            return False
        x = min(x, b.f1)
    else:
        x = b.f1
    need = shave_bound(lb.value_at(max(x, a.f1)), g2, "up")
    y = float(n2)
    if not math.isinf(y):
        y = shave_bound(y, g2, "down")
    return need <= y + 1e-9 * (1 + abs(y))


def filter_against_ub(lb: LBSet, ub, g1, g2, bounds=(INF, INF)) -> list[LBPiece]:
    """Continuous pieces of ``lb`` not excluded by the UB set; empty means fathom.

    ``ub`` may be a :class:`UBSet` or a list of ``(f1, f2)`` images.
    """
    if not lb:
        return []
    images = ub.images() if isinstance(ub, UBSet) else list(ub)
    boxes = [n for n in local_upper_bounds(images, g1, g2, bounds) if box_is_relevant(lb, n[0], n[1], g1, g2)]
    a, b = lb.points[0], lb.points[-1]
    pieces: list[LBPiece] = []
    for n1, n2 in boxes:
        hi = b.f1 if math.isinf(float(n1)) else min(float(n1), b.f1)
        lo = a.f1 if math.isinf(float(n2)) else max(a.f1, lb.cost_at(float(n2)))
        lo = min(lo, hi)
        if pieces and lo <= pieces[-1].hi + 1e-9 * (1 + abs(lo)):
            last = pieces[-1]
            last.hi = max(last.hi, hi)
            last.bound1 = n1
        else:
            pieces.append(LBPiece(lo, hi, n1, n2))
    for piece in pieces:
        piece.corners = _corners_touching(lb, piece.lo, piece.hi)
    return pieces


def _corners_touching(lb: LBSet, lo: float, hi: float) -> list[ObjPoint]:
    pts = lb.points
    eps = 1e-9
    keep = set()
    for k, p in enumerate(pts):
        if lo - eps * (1 + abs(lo)) <= p.f1 <= hi + eps * (1 + abs(hi)):
            keep.add(k)
    for k in range(len(pts) - 1):
        if pts[k].f1 < hi and pts[k + 1].f1 > lo:
            keep.update((k, k + 1))
    if not keep:
        # piece right of the last corner (flat tail) or a single-point set
        keep.add(len(pts) - 1 if lo >= pts[-1].f1 else 0)
    return [pts[k] for k in sorted(keep)]
