"""Bi-directed independence graphs and their augmented DAG representation.

A bi-directed graph encodes marginal independencies between categorical
variables: a missing edge means the endpoint variables are marginally
independent, and more generally every connected vertex set is independent of
the vertices it has no path to (connected set Markov property).  The
:class:`BidirectedGraph` here is the single source of truth for the
independence structure; :class:`AugmentedDag` is the Markov equivalent DAG
over the observed margin obtained by the sink-orientation construction, with
one latent source vertex per residual bi-directed edge.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .exceptions import GraphError

__all__ = [
    "Variable",
    "BidirectedGraph",
    "AugmentedDag",
    "from_edge_list",
    "d_separated",
]


@dataclass(frozen=True)
class Variable:
    """A categorical variable with ``levels`` possible values (coded 1..levels)."""

    name: str
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise GraphError(f"variable {self.name!r} needs >= 2 levels, got {self.levels}")


@dataclass(frozen=True)
class BidirectedGraph:
    """Bi-directed graph over an ordered vertex set.

    The declaration order of ``vertices`` is total and fixed: it defines the
    canonical vec ordering of table cells, deterministic edge orientations,
    and the sorting of every derived collection.
    """

    vertices: tuple[Variable, ...]
    edges: frozenset[frozenset]

    def __post_init__(self):
        names = [v.name for v in self.vertices]
        if len(set(names)) != len(names):
            raise GraphError("duplicate vertex names")
        known = set(names)
        for e in self.edges:
            pair = tuple(e)
            if len(pair) != 2:
                raise GraphError(f"self-loop at vertex {pair[0]!r}")
            for u in pair:
                if u not in known:
                    raise GraphError(f"edge references unknown vertex {u!r}")

    # -- basic accessors -------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.vertices)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(v.levels for v in self.vertices)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def has_edge(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self.edges

    def neighbours(self, v: str) -> set:
        return {next(iter(e - {v})) for e in self.edges if v in e}

    def sorted_set(self, vs) -> tuple[str, ...]:
        """Vertex subset as a tuple sorted by declaration order."""
        order = {n: i for i, n in enumerate(self.names)}
        return tuple(sorted(vs, key=order.__getitem__))

    # -- independence structure ------------------------------------------

    def _components(self, subset) -> list[set]:
        """Connected components of the skeleton induced on ``subset``."""
        subset = set(subset)
        seen, comps = set(), []
        for start in self.names:
            if start not in subset or start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                x = stack.pop()
                if x in comp:
                    continue
                comp.add(x)
                stack.extend(self.neighbours(x) & subset - comp)
            seen |= comp
            comps.append(comp)
        return comps

    def disconnected_sets(self) -> list[tuple[str, ...]]:
        """All vertex subsets whose induced skeleton is disconnected.

        Sorted by cardinality, then lexicographically by declaration order.
        Each of these sets indexes a marginal table whose highest-order
        interaction the graphical model constrains to zero.
        """
        out = []
        for r in range(2, len(self.vertices) + 1):
            for combo in itertools.combinations(self.names, r):
                if len(self._components(combo)) >= 2:
                    out.append(combo)
        return out

    def implied_independencies(self) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
        """Maximal marginal independence statements of the connected set Markov property.

        For every connected set ``C`` with a non-empty remainder
        ``R = V \\ (C u boundary(C))`` the property asserts ``Y_C ⫫ Y_R``.
        Statements implied by a larger one (both sides contained) are dropped,
        and each pair is reported once, smaller side (by vertex order) first.
        """
        stmts = set()
        for r in range(1, len(self.vertices)):
            for combo in itertools.combinations(self.names, r):
                if len(self._components(combo)) != 1:
                    continue
                boundary = set().union(*(self.neighbours(v) for v in combo)) - set(combo)
                rest = set(self.names) - set(combo) - boundary
                if not rest:
                    continue
                a, b = self.sorted_set(combo), self.sorted_set(rest)
                key = (a, b) if (len(a), a) <= (len(b), b) else (b, a)
                stmts.add(key)

        def covered(s, t):
            return s != t and (
                (set(s[0]) <= set(t[0]) and set(s[1]) <= set(t[1]))
                or (set(s[0]) <= set(t[1]) and set(s[1]) <= set(t[0]))
            )

        maximal = [s for s in stmts if not any(covered(s, t) for t in stmts)]
        order = {n: i for i, n in enumerate(self.names)}
        return sorted(maximal, key=lambda s: ([order[v] for v in s[0]], [order[v] for v in s[1]]))

    def is_homogeneous(self) -> bool:
        """True iff no induced 4-vertex subgraph is a 4-chain or chordless 4-cycle.

        Homogeneous graphs admit an augmented DAG without latent variables.
        Brute force over vertex quadruples; graphs here are small.
        """
        for quad in itertools.combinations(self.names, 4):
            sub = [e for e in self.edges if e <= set(quad)]
            degs = sorted(sum(1 for e in sub if v in e) for v in quad)
            if len(self._components(quad)) != 1:
                continue
            if len(sub) == 3 and degs == [1, 1, 2, 2]:
                return False  # induced 4-chain
            if len(sub) == 4 and degs == [2, 2, 2, 2]:
                return False  # chordless 4-cycle
        return True

    def augmented_dag(self, latent_levels: int = 2) -> "AugmentedDag":
        """Markov equivalent DAG over the observed margin (sink orientation).

        Every ``u - v - z`` path with ``u`` and ``z`` non-adjacent gets the
        head-to-head arrows ``u -> v <- z``; each edge that ends up oriented
        both ways is replaced by ``u <- L -> v`` with a fresh latent source
        ``L``; remaining undirected edges are oriented from lower to higher
        declaration order.  Latents all get ``latent_levels`` levels.
        """
        if latent_levels < 2:
            raise GraphError(f"latent_levels must be >= 2, got {latent_levels}")
        names = self.names
        arrows = set()  # (tail, head) marks from v-configurations
        for u, z in itertools.combinations(names, 2):
            if self.has_edge(u, z):
                continue
            for v in self.neighbours(u) & self.neighbours(z):
                arrows.add((u, v))
                arrows.add((z, v))

        parents: dict = {n: set() for n in names}
        latents: list[Variable] = []
        order = {n: i for i, n in enumerate(names)}
        taken = set(names)
        for e in sorted(self.edges, key=lambda e: tuple(sorted(order[v] for v in e))):
            u, v = sorted(e, key=order.__getitem__)
            fwd, bwd = (u, v) in arrows, (v, u) in arrows
            if fwd and bwd:
                k, lname = len(latents) + 1, f"L{len(latents) + 1}"
                while lname in taken:
                    lname = "_" + lname
                taken.add(lname)
                latents.append(Variable(lname, latent_levels))
                parents[u].add(lname)
                parents[v].add(lname)
            elif fwd:
                parents[v].add(u)
            elif bwd:
                parents[u].add(v)
            else:
                parents[v].add(u)  # undirected: low -> high declaration order
        for lv in latents:
            parents[lv.name] = set()

        full_order = {n: i for i, n in enumerate(names + tuple(l.name for l in latents))}
        parent_map = {
            n: tuple(sorted(ps, key=full_order.__getitem__)) for n, ps in parents.items()
        }
        return AugmentedDag(self.vertices, tuple(latents), parent_map)


def from_edge_list(vertices, edges) -> BidirectedGraph:
    """Build a normalized graph from ``(name, levels)`` pairs and name pairs.

    Edges are deduplicated and stored unordered; self-loops, unknown names and
    duplicate declarations are rejected.
    """
    vs = tuple(Variable(str(n), int(l)) for n, l in vertices)
    names = {v.name for v in vs}
    if len(names) != len(vs):
        raise GraphError("duplicate vertex names")
    es = set()
    for u, v in edges:
        if u == v:
            raise GraphError(f"self-loop at vertex {u!r}")
        if u not in names or v not in names:
            raise GraphError(f"edge ({u!r}, {v!r}) references an undeclared vertex")
        es.add(frozenset((u, v)))
    return BidirectedGraph(vs, frozenset(es))


@dataclass(eq=False)
class AugmentedDag:
    """DAG over observed plus latent variables.

    ``parents`` maps every vertex name (observed and latent) to its parent
    tuple, sorted in the canonical order (observed declaration order followed
    by latent creation order).  Latents are sources by construction.
    Instances are treated as immutable once built.
    """

    observed: tuple[Variable, ...]
    latents: tuple[Variable, ...]
    parents: dict = field(default_factory=dict)

    def __post_init__(self):
        for l in self.latents:
            if self.parents.get(l.name):
                raise GraphError(f"latent {l.name!r} must be a source vertex")
        self.topological_order()  # raises on cycles

    @property
    def vertices(self) -> tuple[Variable, ...]:
        return self.observed + self.latents

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.vertices)

    def variable(self, name: str) -> Variable:
        for v in self.vertices:
            if v.name == name:
                return v
        raise KeyError(name)

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(n for n in self.names if name in self.parents.get(n, ()))

    def topological_order(self) -> list[str]:
        indeg = {n: len(self.parents.get(n, ())) for n in self.names}
        queue = [n for n in self.names if indeg[n] == 0]
        out = []
        while queue:
            n = queue.pop(0)
            out.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(out) != len(self.names):
            raise GraphError("parent map contains a directed cycle")
        return out


def d_separated(dag: AugmentedDag, xs, ys, zs=()) -> bool:
    """Whether vertex sets ``xs`` and ``ys`` are d-separated given ``zs``.

    Uses the moralized-ancestral-graph criterion: restrict to the ancestors of
    the three sets, marry co-parents, drop directions, and test separation.
    """
    xs, ys, zs = set(xs), set(ys), set(zs)
    anc = set(xs | ys | zs)
    changed = True
    while changed:
        changed = False
        for n in list(anc):
            for p in dag.parents.get(n, ()):
                if p not in anc:
                    anc.add(p)
                    changed = True
    moral: dict = {n: set() for n in anc}
    for n in anc:
        ps = [p for p in dag.parents.get(n, ()) if p in anc]
        for p in ps:
            moral[n].add(p)
            moral[p].add(n)
        for a, b in itertools.combinations(ps, 2):
            moral[a].add(b)
            moral[b].add(a)
    seen, stack = set(), list(xs)
    while stack:
        n = stack.pop()
        if n in seen or n in zs:
            continue
        if n in ys:
            return False
        seen.add(n)
        stack.extend(moral.get(n, ()) - seen)
    return True
