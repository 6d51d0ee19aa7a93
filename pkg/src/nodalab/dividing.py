"""Recursive cube partitions near the boundary and their nodal-measure accounting.

A boundary cube Q of side R is cut into ``A^{n+1}`` subcubes arranged in A
layers parallel to the flattened boundary Γ (layer 1 farthest from Γ).  Slabs
of subcubes that lie at least ``L = 10(n+1)`` side lengths away from Γ are
charged with the interior bound ``M s^n`` per cube; the remaining slabs are
subdivided again.  Cubes whose doubling index falls to ``M0`` or below stop
and are charged ``A M0 s^n``.

Two kinds of input drive the recursion: a field seen through a chart (doubling
indices computed, shallow depth) and synthetic oracles that give each child's
index from its parent's (deep recursion, exact rational arithmetic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .doubling import DIM, ChartView, Cube, cube_doubling
from .geometry import DomainSpec, build_domain, collar_params, straighten

N_DIM = DIM - 1


class NotApplicable(ValueError):
    """The dividing hypothesis ``M(Q) >= M0`` fails."""


# ----------------------------------------------------------------- config
@dataclass(frozen=True)
class DividingConfig:
    A: int = 3
    n: int = N_DIM
    M0: float = 2.0
    R: float = 1.0
    C_interior: Fraction = Fraction(1)
    C_terminal: Fraction = Fraction(1)
    gate_exponent: float = 1.0
    enforce_A0_gate: bool = False

    def __post_init__(self) -> None:
        if self.A < 3 or self.A % 2 == 0:
            raise ValueError("A must be an odd integer >= 3")
        if self.M0 <= 1:
            raise ValueError("M0 must exceed 1")
        if self.enforce_A0_gate and not self.A0_gate:
            raise ValueError(f"A = {self.A} is below M0^(C M0) = {self.A0:.4g}")

    @property
    def kappa(self) -> Fraction:
        return 1 - Fraction(1, 2 * self.A**self.n)

    @property
    def L(self) -> int:
        return 10 * (self.n + 1)

    @property
    def A0(self) -> float:
        return self.M0 ** (self.gate_exponent * self.M0)

    @property
    def A0_gate(self) -> bool:
        return self.A >= self.A0

    def k0(self, M_Q: float) -> int:
        return int(math.floor(math.log2(M_Q / self.M0))) + 1


# ---------------------------------------------------------------- cube tree
@dataclass(frozen=True)
class CubeNode:
    """Cube ``[y1, y1+s] x [y2, y2+s] x [t, t+s]`` with exact rational corners."""

    y1: Fraction
    y2: Fraction
    t: Fraction
    side: Fraction
    generation: int = 0
    layer: int = 0  # 1..A from the top; 0 for the root
    parent: int = -1
    M: float = math.nan
    classification: str = ""

    @property
    def volume(self) -> Fraction:
        return self.side ** (N_DIM + 1)

    def as_cube(self) -> Cube:
        return Cube(float(self.y1), float(self.y2), float(self.side), float(self.t))

    def children(self, A: int, index: int) -> list["CubeNode"]:
        s = self.side / A
        out = []
        for k in range(A):  # y2 index from Γ upwards
            layer = A - k
            for i in range(A):
                for j in range(A):
                    out.append(CubeNode(self.y1 + i * s, self.y2 + k * s, self.t + j * s, s, self.generation + 1, layer, index))
        return out


def partition_exact(parent: CubeNode, children: Sequence[CubeNode]) -> bool:
    return sum((c.volume for c in children), Fraction(0)) == parent.volume


# ---------------------------------------------------------- dividing check
@dataclass(frozen=True)
class LayerResult:
    layer: int
    min_M: float
    values: list


@dataclass(frozen=True)
class DividingLemmaReport:
    M_Q: float
    threshold: float
    error: float
    layers: list
    passed: bool


def _layer_report(M_Q: float, err: float, layers: dict[int, list[tuple[float, float]]]) -> DividingLemmaReport:
    out, ok = [], True
    for layer in sorted(layers):
        vals = layers[layer]
        m, e = min(vals)
        out.append(LayerResult(layer, m, [v for v, _ in vals]))
        if m > M_Q / 2 + err + e:
            ok = False
    return DividingLemmaReport(M_Q, M_Q / 2, err, out, ok)


def check_dividing_lemma(view: ChartView, Q: Cube, A: int = 3, M0: float = 2.0) -> DividingLemmaReport:
    """Every layer of the ``A^{n+1}`` subdivision has a subcube with ``M <= M(Q)/2``.

    Subcubes differing only in t share M, so each layer needs ``A`` evaluations.
    """
    cd = cube_doubling(view, Q)
    if cd.M_Q < M0:
        raise NotApplicable(f"M(Q) = {cd.M_Q:.4g} < M0 = {M0}")
    s = Q.side / A
    layers: dict[int, list[tuple[float, float]]] = {}
    for k in range(A):
        col = []
        for i in range(A):
            sub = cube_doubling(view, Cube(Q.y1 + i * s, Q.y2 + k * s, s))
            col.append((sub.M_Q, sub.error))
        layers[A - k] = col * A  # the A t-positions repeat the column values
    return _layer_report(cd.M_Q, cd.error, layers)


def check_dividing_oracle(oracle: "Oracle", M_Q: float, A: int = 3, n: int = N_DIM) -> DividingLemmaReport:
    layers = {}
    for layer in range(1, A + 1):
        layers[layer] = [(float(oracle.child(Fraction(M_Q), i, layer)), 0.0) for i in range(A**n)]
    return _layer_report(M_Q, 0.0, layers)


# ------------------------------------------------------------ synthetic oracles
@dataclass(frozen=True)
class Oracle:
    """Child index from the parent's index, child position and layer.

    ``halving``: every child halves.  ``worst_case``: in each layer exactly one
    of the ``A^n`` children halves, the rest keep the parent's value (the
    weakest input that still satisfies the dividing property).
    ``counterexample``: the children of layer ``bad_layer`` all keep the
    parent's value.
    """

    name: str
    bad_layer: int = 1

    def child(self, M: Fraction, position: int, layer: int) -> Fraction:
        if self.name == "halving":
            return M / 2
        if self.name == "worst_case":
            return M / 2 if position == 0 else M
        if self.name == "counterexample":
            return M if layer == self.bad_layer else M / 2
        raise ValueError(f"unknown oracle {self.name!r}")


# ------------------------------------------------------------ accounting
@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    slabs: int
    recursed_slabs: int
    charged_slabs: int
    active_per_slab: int
    terminal_per_slab: int
    charge_interior: Fraction
    charge_terminal: Fraction

    @property
    def charge(self) -> Fraction:
        return self.charge_interior + self.charge_terminal


@dataclass(frozen=True)
class AccountingReport:
    config: DividingConfig
    M_Q: Fraction
    k0: int
    generations: list
    series_total: Fraction
    closed_form_total: Fraction
    depth: int
    partial: bool

    @property
    def recursion_total(self) -> Fraction:
        return sum((g.charge for g in self.generations), Fraction(0))

    @property
    def within_series(self) -> bool:
        return self.recursion_total <= self.closed_form_total


def _to_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**12)


def run_dividing(oracle: Oracle, M_Q, config: DividingConfig, max_generations: int = 60) -> AccountingReport:
    """Synthetic recursion with class-aggregated cube counts (exact arithmetic).

    Cubes of one slab are tracked as a multiset of doubling-index values; all
    slabs of a generation share the same multiset because they descend from
    identical parents.
    """
    A, n, L = config.A, config.n, config.L
    M_Q = _to_fraction(M_Q)
    M0 = _to_fraction(config.M0)
    R = _to_fraction(config.R)
    if M_Q < M0:
        raise NotApplicable("M(Q) < M0")
    k0 = config.k0(float(M_Q))
    active: dict[Fraction, int] = {M_Q: 1}
    recursed_prev = 1
    gens = []
    depth = 0
    for k in range(1, max_generations + 1):
        if not active:
            break
        s_n = (R / A**k) ** n
        slabs = A * recursed_prev
        recursed = min(slabs, L)
        charged = slabs - recursed
        per_layer: dict[Fraction, int] = {}
        for M, cnt in active.items():
            for pos in range(A**n):
                # all layers of a worst-case oracle look alike; charge by layer 1's children
                c = oracle.child(M, pos, A)
                per_layer[c] = per_layer.get(c, 0) + cnt
        term = {M: c for M, c in per_layer.items() if M <= M0}
        nxt = {M: c for M, c in per_layer.items() if M > M0}
        interior = charged * sum((M * c for M, c in per_layer.items()), Fraction(0)) * s_n * config.C_interior
        terminal = recursed * sum(term.values()) * A * M0 * s_n * config.C_terminal
        gens.append(
            GenerationRecord(k, slabs, recursed, charged, sum(nxt.values()), sum(term.values()), interior, terminal)
        )
        active, recursed_prev, depth = nxt, recursed, k
    S = series_bound(config, M_Q)
    return AccountingReport(config, M_Q, k0, gens, S.series_total, S.closed_form_total, depth, bool(active))


def class_counts(oracle: Oracle, A: int, n: int, generations: int, M_Q: Fraction = Fraction(2**40)) -> list[dict[int, int]]:
    """Cubes per halving class in one layer lineage, without stopping at M0.

    Entry ``k`` maps ``j`` (number of halvings) to the number of generation-k
    cubes with index ``M_Q / 2^j``.
    """
    active = {M_Q: 1}
    out = []
    for _ in range(generations):
        nxt: dict[Fraction, int] = {}
        for M, cnt in active.items():
            for pos in range(A**n):
                c = oracle.child(M, pos, A)
                nxt[c] = nxt.get(c, 0) + cnt
        active = nxt
        out.append({int(round(math.log2(M_Q / M))): c for M, c in active.items()})
    return out


def class_count_formula(A: int, n: int, k: int, k0: int) -> int:
    return comb(k, k0) * (A**n - 1) ** (k - k0)


# ----------------------------------------------------------------- series
@dataclass(frozen=True)
class SeriesBound:
    interior_series: Fraction  # Σ_{k>=1} C_int L A R^n M κ^k
    terminal_series: Fraction  # Σ_{k>=k0} C_term L A C(k,k0) (A^n-1)^{k-k0} M0 (R/A^k)^n
    loose_terminal: Fraction  # A² R^n M κ^{k0} / (1-κ)
    final_bound: Fraction  # R^n A^{n+2} M
    fitted_C: Fraction  # (A R^n M κ/(1-κ) + A^{n+2} M0 R^n) / final
    fitted_C_loose: Fraction  # (A R^n M κ/(1-κ) + loose) / final
    chain_ok: bool

    @property
    def series_total(self) -> Fraction:
        return self.interior_series + self.terminal_series

    @property
    def closed_form_total(self) -> Fraction:
        return self.series_total


def series_bound(config: DividingConfig, M_Q, R=None) -> SeriesBound:
    """Closed forms of both accounting series.

    With ``κ/(1-κ) = 2A^n - 1`` and ``Σ_{k>=k0} C(k,k0) (A^n-1)^{k-k0} A^{-nk} = A^n``
    both sums are exact.  The slot ``L`` in the totals covers the at most
    ``L(A-1)`` charged and ``L`` recursed slabs per generation; the fitted
    constants use unit slots.
    """
    A, n, L = config.A, config.n, config.L
    M = _to_fraction(M_Q)
    M0 = _to_fraction(config.M0)
    R = _to_fraction(config.R if R is None else R)
    kappa = config.kappa
    Rn = R**n
    geo = kappa / (1 - kappa)
    s1 = A * Rn * M * geo
    s2 = A ** (n + 2) * M0 * Rn
    k0 = config.k0(float(M))
    loose = A * A * Rn * M * kappa**k0 / (1 - kappa)
    final = Rn * A ** (n + 2) * M
    fitted = (s1 + s2) / final
    return SeriesBound(
        config.C_interior * L * s1,
        config.C_terminal * L * s2 / A,
        loose,
        final,
        fitted,
        (s1 + loose) / final,
        fitted <= 2,
    )


def tail_terms(A: int, n: int, k0: int, kmax: int = 60) -> list[tuple[int, Fraction, Fraction]]:
    """``(k, C(k,k0) (½A^{-n})^{k0} (1-A^{-n})^{k-k0}, κ^k)`` for ``k0 <= k <= kmax``."""
    p = Fraction(1, 2 * A**n)
    q = 1 - Fraction(1, A**n)
    kappa = p + q
    return [(k, comb(k, k0) * p**k0 * q ** (k - k0), kappa**k) for k in range(k0, kmax + 1)]


# ------------------------------------------------------------- field mode
@dataclass(frozen=True)
class FieldTree:
    nodes: list
    class_sizes: dict
    partition_ok: bool


def run_dividing_field(view: ChartView, Q: Cube, config: DividingConfig, max_generations: int = 1) -> FieldTree:
    """Shallow recursion on a real field; M from the doubling module.

    Doubling indices are shared between cubes that differ only in t.
    """
    root = CubeNode(_to_fraction(Q.y1), _to_fraction(Q.y2), Fraction(0), _to_fraction(Q.side))
    cache: dict[tuple, float] = {}

    def M_of(node: CubeNode) -> float:
        key = (node.y1, node.y2, node.side)
        if key not in cache:
            cache[key] = cube_doubling(view, node.as_cube()).M_Q
        return cache[key]

    M_root = M_of(root)
    nodes = [CubeNode(root.y1, root.y2, root.t, root.side, 0, 0, -1, M_root, "root")]
    frontier = [0]
    sizes: dict[str, int] = {}
    ok = True
    for _ in range(max_generations):
        new = []
        for idx in frontier:
            parent = nodes[idx]
            kids = parent.children(config.A, idx)
            ok &= partition_exact(parent, kids)
            for c in kids:
                m = M_of(c)
                if m <= config.M0:
                    cls = "terminal_small"
                elif m <= parent.M / 2:
                    cls = "halved"
                else:
                    cls = "carried"
                sizes[cls] = sizes.get(cls, 0) + 1
                nodes.append(CubeNode(c.y1, c.y2, c.t, c.side, c.generation, c.layer, idx, m, cls))
                if cls != "terminal_small":
                    new.append(len(nodes) - 1)
        frontier = new
    return FieldTree(nodes, sizes, ok)


def dump_tree(nodes: Sequence[CubeNode]) -> list[str]:
    return [
        f"{c.generation} {c.layer} {float(c.y1)!r} {float(c.y2)!r} {float(c.t)!r} {float(c.side)!r} {c.M!r} {c.classification}"
        for c in nodes
    ]


# --------------------------------------------------------- collar covering
@dataclass(frozen=True)
class CoveringResult:
    count: int
    R: float
    fitted_C: float  # count * R^{n-1}
    anchors: np.ndarray
    within_hypothesis: bool


def collar_covering_count(domain: DomainSpec, R: float, n_samples: int = 6) -> CoveringResult:
    """Greedy cover of ``(∂Ω)_R`` by chart cubes ``[-R/2, R/2] x [0, R]``.

    Anchors start at arclength spacing R; uncovered collar samples then seed
    extra charts at their nearest boundary points.
    """
    domain = domain if domain.samples is not None else build_domain(domain, 1024)
    collar = collar_params(domain)
    per = domain.perimeter
    m = max(1, int(math.ceil(per / R)))
    params = (np.arange(m) + 0.5) / m
    # collar samples: boundary samples pushed inward along the normal
    us = np.linspace(0, 1, int(math.ceil(4 * per / R)) * 2, endpoint=False)
    base = domain.curve(us)
    nrm = domain.normal_at(us)
    depth = np.linspace(0, R, n_samples)[1:]  # the boundary itself has measure zero in the collar
    pts = (base[None, :, :] + depth[:, None, None] * nrm[None, :, :]).reshape(-1, 2)
    pts = pts[domain.contains(pts) & (domain.distance(pts) <= R)]
    covered = np.zeros(len(pts), dtype=bool)
    anchors = []

    def add(anchor):
        ch = straighten(domain, anchor, R, allow_corners=True)
        y = ch.phi(pts[~covered])
        inside = (np.abs(y[:, 0]) <= R / 2 + 1e-12) & (y[:, 1] >= -1e-12) & (y[:, 1] <= R + 1e-12)
        idx = np.nonzero(~covered)[0][inside]
        covered[idx] = True
        anchors.append(anchor)

    for u in params:
        add(domain.curve(np.array(u)))
    guard = 0
    while not covered.all() and guard < 10 * m:
        p = pts[np.nonzero(~covered)[0][0]]
        u, _ = domain.parameter_of(p)
        add(domain.curve(np.array(u)))
        guard += 1
    count = len(anchors)
    return CoveringResult(count, R, count * R ** (N_DIM - 1), np.array(anchors), bool(R <= collar.r0 / 8))
