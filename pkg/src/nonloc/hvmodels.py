"""Finite hidden-variables models for sequential measurements.

A deterministic model is a finite weighted sample space together with
response trees: for every atom and every admissible sequence of observable
choices, the realized outcome string.  Responses never read later choices
(causality is structural), and in the ``local_causal`` shape each side's
responses read only that side's choices (locality is structural too).
Stochastic models replace responses with per-side outcome kernels composed by
the chain rule.

Constructions provided here:

* ``trivial_causal_model``: conditional-probability splitting of the unit
  interval, one atom per elementary interval breakpoint cell.  Reproduces the
  quantum sequence distributions of any state, with no locality.
* ``product_local_model``: independent per-side interval models for a product
  state (the locality base case).
* ``mix_models``: convex combination on the tagged disjoint union.
* ``collapse_model``: conditioning on the outcome of an allowed first step.
* ``couple_lchv_d2``: extends a single-time local model of the d=2 flip
  family to all finite sequences by handing follow-up measurements to
  single-system models of the collapsed (pure) states.
* Fine-style translations ``deterministic_to_stochastic`` /
  ``stochastic_to_deterministic`` between the two model kinds.
* ``extend_commuting_povm``: turns a single-time local model over basis
  observables into a stochastic model of a pair of commuting POVMs.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import hilbert, measurement
from .hilbert import DimPair
from .measurement import OperationFamily, embed_local, local_sequence
from .states import PROB_FLOOR, DensityMatrix, make_density

ATOM_BUDGET = 10**6
DEFAULT_VERIFY_TOL = 1e-10

StepKey = tuple[int, str]  # (side, family name)


class BudgetExceededError(RuntimeError):
    pass


class ZeroProbabilityBranch(ValueError):
    pass


class NotCommutingError(ValueError):
    def __init__(self, info: measurement.NotCommuting):
        self.info = info
        super().__init__(
            f"effects {info.pair} do not commute "
            f"(commutator norm {info.commutator_norm:.3e})"
        )


class MissingBasisObservable(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Context:
    """Finite measurement context: per-side observable menus and length caps."""

    side1: tuple[OperationFamily, ...]
    side2: tuple[OperationFamily, ...]
    max_len1: int
    max_len2: int

    def __post_init__(self) -> None:
        for side, bound in ((self.side1, self.max_len1), (self.side2, self.max_len2)):
            if bound < 0:
                raise ValueError("length bounds must be >= 0")
            if not side and bound > 0:
                raise ValueError("empty side cannot have a positive length bound")
            names = [f.name for f in side]
            if len(set(names)) != len(names):
                raise ValueError("duplicate family names on one side")
            dims = {f.dim for f in side}
            if len(dims) > 1:
                raise ValueError("families on one side have mismatched dimensions")
        if not self.side1 and not self.side2:
            raise ValueError("context needs at least one observable")

    @property
    def dims(self) -> DimPair:
        d1 = self.side1[0].dim if self.side1 else 1
        d2 = self.side2[0].dim if self.side2 else 1
        return DimPair(d1, d2)

    def families(self, side: int) -> tuple[OperationFamily, ...]:
        return self.side1 if side == 1 else self.side2

    def family(self, side: int, name: str) -> OperationFamily:
        for f in self.families(side):
            if f.name == name:
                return f
        raise KeyError(f"no side-{side} family named {name!r}")

    def names(self, side: int) -> tuple[str, ...]:
        return tuple(f.name for f in self.families(side))

    def collected_sequences(self):
        """All (side-1 choices, side-2 choices) pairs within the caps.

        At least one side is non-empty.  Side-1 steps are taken first; since
        the two sides' operators commute, this ordering convention loses no
        generality for local models.
        """
        side1_seqs = [()]
        for n in range(1, self.max_len1 + 1):
            side1_seqs.extend(itertools.product(self.names(1), repeat=n))
        side2_seqs = [()]
        for n in range(1, self.max_len2 + 1):
            side2_seqs.extend(itertools.product(self.names(2), repeat=n))
        for c1 in side1_seqs:
            for c2 in side2_seqs:
                if c1 or c2:
                    yield c1, c2

    def interleaved_sequences(self):
        """All non-empty time-ordered step sequences within the per-side caps."""

        def extend(prefix: tuple[StepKey, ...], used1: int, used2: int):
            if prefix:
                yield prefix
            if used1 < self.max_len1:
                for name in self.names(1):
                    yield from extend(prefix + ((1, name),), used1 + 1, used2)
            if used2 < self.max_len2:
                for name in self.names(2):
                    yield from extend(prefix + ((2, name),), used1, used2 + 1)

        yield from extend((), 0, 0)

    def step_family(self, key: StepKey) -> OperationFamily:
        return self.family(key[0], key[1])


@dataclass(frozen=True, eq=False)
class FiniteSampleSpace:
    """Finitely many atoms with a probability weight each."""

    atoms: tuple[str, ...]
    weights: np.ndarray
    intervals: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.atoms),):
            raise ValueError("weights do not match atoms")
        if np.any(w < -1e-15):
            raise ValueError("negative atom weight")
        if abs(float(np.sum(w)) - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {float(np.sum(w))!r}, not 1")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True, eq=False)
class DeterministicModel:
    """Deterministic hidden-variables model over a finite context.

    ``shape`` is ``"causal"`` (one global response tree per atom, keyed by
    time-ordered step sequences) or ``"local_causal"`` (two per-side trees per
    atom, keyed by own-side choice sequences).  Response trees store realized
    outcome strings: ``responses[atom][choices] == outcomes``, with prefix
    consistency guaranteeing causality.
    """

    space: FiniteSampleSpace
    shape: str
    context: Context
    # causal: {atom: {path (StepKey tuple): outcome tuple}}
    # local_causal: {atom: {1: {names tuple: outcomes}, 2: {...}}}
    responses: dict

    def __post_init__(self) -> None:
        if self.shape not in ("causal", "local_causal"):
            raise ValueError(f"unknown shape {self.shape!r}")

    def response(self, atom: str, side: int, choices: tuple[str, ...]):
        if self.shape != "local_causal":
            raise ValueError("per-side responses require local_causal shape")
        return self.responses[atom][side][choices]

    def distribution_interleaved(
        self, path: tuple[StepKey, ...]
    ) -> dict[tuple[str, ...], float]:
        """Outcome table for a time-ordered step sequence."""
        out: dict[tuple[str, ...], float] = {}
        if self.shape == "causal":
            for atom, w in zip(self.space.atoms, self.space.weights):
                key = self.responses[atom][path]
                out[key] = out.get(key, 0.0) + float(w)
            return out
        idx1 = [i for i, s in enumerate(path) if s[0] == 1]
        idx2 = [i for i, s in enumerate(path) if s[0] == 2]
        c1 = tuple(path[i][1] for i in idx1)
        c2 = tuple(path[i][1] for i in idx2)
        for atom, w in zip(self.space.atoms, self.space.weights):
            o1 = self.responses[atom][1][c1] if c1 else ()
            o2 = self.responses[atom][2][c2] if c2 else ()
            merged = [None] * len(path)
            for i, o in zip(idx1, o1):
                merged[i] = o
            for i, o in zip(idx2, o2):
                merged[i] = o
            key = tuple(merged)
            out[key] = out.get(key, 0.0) + float(w)
        return out

    def distribution_collected(
        self, choices1: tuple[str, ...], choices2: tuple[str, ...]
    ) -> dict[tuple[str, ...], float]:
        """Outcome table with all side-1 steps taken before side-2 steps."""
        path = tuple((1, n) for n in choices1) + tuple((2, n) for n in choices2)
        return self.distribution_interleaved(path)


@dataclass(frozen=True, eq=False)
class StochasticModel:
    """Stochastic local model: per-atom, per-side outcome kernels.

    ``kernels[atom][side][(choices, past)]`` is the outcome distribution of
    the last observable in ``choices`` given earlier own-side outcomes
    ``past``.  Joint sequence probabilities compose by the chain rule per
    side and multiply across sides, then average over atoms.
    """

    space: FiniteSampleSpace
    context: Context
    kernels: dict

    shape: str = field(default="stochastic", init=False)

    def kernel(
        self, atom: str, side: int, choices: tuple[str, ...], past: tuple[str, ...]
    ) -> dict[str, float]:
        return self.kernels[atom][side][(choices, past)]

    def side_distribution(
        self, atom: str, side: int, choices: tuple[str, ...]
    ) -> dict[tuple[str, ...], float]:
        table: dict[tuple[str, ...], float] = {(): 1.0}
        for k in range(1, len(choices) + 1):
            new: dict[tuple[str, ...], float] = {}
            for past, p in table.items():
                if p == 0.0:
                    continue
                dist = self.kernel(atom, side, choices[:k], past)
                for o, q in dist.items():
                    new[past + (o,)] = new.get(past + (o,), 0.0) + p * q
            table = new
        return table

    def distribution_collected(
        self, choices1: tuple[str, ...], choices2: tuple[str, ...]
    ) -> dict[tuple[str, ...], float]:
        out: dict[tuple[str, ...], float] = {}
        for atom, w in zip(self.space.atoms, self.space.weights):
            t1 = self.side_distribution(atom, 1, choices1) if choices1 else {(): 1.0}
            t2 = self.side_distribution(atom, 2, choices2) if choices2 else {(): 1.0}
            for o1, p1 in t1.items():
                for o2, p2 in t2.items():
                    key = o1 + o2
                    out[key] = out.get(key, 0.0) + float(w) * p1 * p2
        return out


def _embedded_ops(ctx: Context, dims: DimPair, key: StepKey):
    fam = ctx.step_family(key)
    return [
        (lab, embed_local(op, key[0], dims))
        for lab, op in zip(fam.labels, fam.operators)
    ]


def _dedupe_points(points: set[float], tol: float = 1e-12) -> list[float]:
    """Sorted breakpoints with near-coincident values merged.

    Different interleavings split [0, 1] at the same conditional boundary up
    to float drift; merging within tol kills the resulting sliver atoms
    while moving at most tol of mass per boundary.
    """
    out: list[float] = []
    for p in sorted(points):
        if out and p - out[-1] <= tol:
            continue
        out.append(p)
    if out[-1] != 1.0:
        out[-1] = 1.0
    return out


def trivial_causal_model(
    rho: DensityMatrix, ctx: Context, atom_budget: int = ATOM_BUDGET
) -> DeterministicModel:
    """Causal (non-local) model matching the quantum sequence distributions.

    The unit interval is split recursively: each admissible step sequence
    partitions [0, 1] into cells whose lengths are the joint outcome
    probabilities, refining the partitions of its prefixes.  Atoms are the
    elementary intervals of the common refinement, so every sequence random
    variable is constant on each atom and all distributions are reproduced by
    construction.
    """
    if ctx.dims != rho.dims:
        raise ValueError(f"context dims {ctx.dims} do not match state {rho.dims}")
    dims = rho.dims
    op_cache: dict[StepKey, list] = {}
    # cells[path] = list of (lo, hi, outcomes, unnormalized state); hi - lo is
    # the joint probability of (path, outcomes).
    cells: dict[tuple[StepKey, ...], list] = {
        (): [(0.0, 1.0, (), rho.matrix)]
    }
    paths = list(ctx.interleaved_sequences())
    work = 0
    for path in paths:
        parent = cells[path[:-1]]
        key = path[-1]
        if key not in op_cache:
            op_cache[key] = _embedded_ops(ctx, dims, key)
        ops = op_cache[key]
        children = []
        for lo, hi, outs, sigma in parent:
            if hi <= lo:
                continue
            cursor = lo
            branch = []
            total = 0.0
            for lab, r in ops:
                child = r @ sigma @ r.conj().T
                p = max(float(np.real(np.trace(child))), 0.0)
                branch.append((lab, child, p))
                total += p
            for i, (lab, child, p) in enumerate(branch):
                nxt = hi if i == len(branch) - 1 else cursor + p
                children.append((cursor, nxt, outs + (lab,), child))
                cursor = nxt
            work += len(branch)
            if work > atom_budget:
                raise BudgetExceededError(
                    f"interval construction exceeded atom budget {atom_budget}"
                )
        cells[path] = children
    breakpoints = {0.0, 1.0}
    for path in paths:
        for lo, hi, _, _ in cells[path]:
            breakpoints.add(lo)
            breakpoints.add(hi)
    points = _dedupe_points(breakpoints)
    atom_bounds = [
        (a, b) for a, b in zip(points, points[1:]) if b > a
    ]
    if len(atom_bounds) > atom_budget:
        raise BudgetExceededError(
            f"{len(atom_bounds)} atoms exceed atom budget {atom_budget}"
        )
    atoms = tuple(f"a{i}" for i in range(len(atom_bounds)))
    weights = np.array([b - a for a, b in atom_bounds], dtype=float)
    mids = [(a + b) / 2.0 for a, b in atom_bounds]
    responses: dict[str, dict] = {a: {} for a in atoms}
    for path in paths:
        cell_list = [c for c in cells[path] if c[1] > c[0]]
        los = [c[0] for c in cell_list]
        for atom, mid in zip(atoms, mids):
            idx = bisect_right(los, mid) - 1
            responses[atom][path] = cell_list[idx][2]
    space = FiniteSampleSpace(atoms, weights, intervals=tuple(atom_bounds))
    return DeterministicModel(space, "causal", ctx, responses)


def _single_side_context(families: tuple[OperationFamily, ...], max_len: int) -> Context:
    return Context(families, (), max_len, 0)


def product_local_model(
    rho1, rho2, ctx: Context, atom_budget: int = ATOM_BUDGET
) -> DeterministicModel:
    """Local causal model of a product state: independent per-side interval
    models on the product sample space.

    ``rho1``/``rho2`` are the one-side density matrices (plain arrays or
    DensityMatrix with trivial second factor).
    """
    d1, d2 = ctx.dims.d1, ctx.dims.d2
    side_models = []
    for rho_s, fams, cap, d in (
        (rho1, ctx.side1, ctx.max_len1, d1),
        (rho2, ctx.side2, ctx.max_len2, d2),
    ):
        mat = rho_s.matrix if isinstance(rho_s, DensityMatrix) else rho_s
        state = make_density(mat, (d, 1))
        sub = trivial_causal_model(
            state, _single_side_context(fams, cap), atom_budget
        )
        side_models.append(sub)
    m1, m2 = side_models
    atoms = []
    weights = []
    responses = {}
    if len(m1.space) * len(m2.space) > atom_budget:
        raise BudgetExceededError("product space exceeds atom budget")
    for a1, w1 in zip(m1.space.atoms, m1.space.weights):
        tree1 = {
            tuple(n for _, n in path): outs
            for path, outs in m1.responses[a1].items()
        }
        for a2, w2 in zip(m2.space.atoms, m2.space.weights):
            tree2 = {
                tuple(n for _, n in path): outs
                for path, outs in m2.responses[a2].items()
            }
            atom = f"{a1}*{a2}"
            atoms.append(atom)
            weights.append(float(w1) * float(w2))
            responses[atom] = {1: tree1, 2: tree2}
    space = FiniteSampleSpace(tuple(atoms), np.array(weights))
    return DeterministicModel(space, "local_causal", ctx, responses)


def _contexts_compatible(a: Context, b: Context) -> bool:
    if (a.max_len1, a.max_len2) != (b.max_len1, b.max_len2):
        return False
    for fa, fb in zip(a.side1 + a.side2, b.side1 + b.side2):
        if fa.name != fb.name or fa.labels != fb.labels:
            return False
        for ra, rb in zip(fa.operators, fb.operators):
            if ra.shape != rb.shape or float(np.max(np.abs(ra - rb))) > 1e-12:
                return False
    return len(a.side1) == len(b.side1) and len(a.side2) == len(b.side2)


def mix_models(models: list[DeterministicModel], mix_weights) -> DeterministicModel:
    """Convex combination of models sharing shape and context."""
    if not models:
        raise ValueError("empty mixture")
    w = np.asarray(mix_weights, dtype=float)
    if w.shape != (len(models),) or np.any(w < -1e-15):
        raise ValueError("mixture weights must be a nonnegative vector")
    if abs(float(np.sum(w)) - 1.0) > 1e-12:
        raise ValueError("mixture weights must sum to 1")
    shape = models[0].shape
    ctx = models[0].context
    for m in models[1:]:
        if m.shape != shape:
            raise ValueError("mixture components have mismatched shapes")
        if not _contexts_compatible(m.context, ctx):
            raise ValueError("mixture components have mismatched contexts")
    atoms = []
    weights = []
    responses = {}
    for i, (m, wi) in enumerate(zip(models, w)):
        for atom, wa in zip(m.space.atoms, m.space.weights):
            tagged = f"m{i}:{atom}"
            atoms.append(tagged)
            weights.append(float(wi) * float(wa))
            responses[tagged] = m.responses[atom]
    space = FiniteSampleSpace(tuple(atoms), np.array(weights))
    return DeterministicModel(space, shape, ctx, responses)


def _decrement_bound(ctx: Context, side: int) -> Context:
    if side == 1:
        if ctx.max_len1 < 1:
            raise ValueError("side-1 bound already exhausted")
        return Context(ctx.side1, ctx.side2, ctx.max_len1 - 1, ctx.max_len2)
    if ctx.max_len2 < 1:
        raise ValueError("side-2 bound already exhausted")
    return Context(ctx.side1, ctx.side2, ctx.max_len1, ctx.max_len2 - 1)


def collapse_model(
    m: DeterministicModel, first: tuple[StepKey, str]
) -> DeterministicModel:
    """Condition a deterministic model on the outcome of an allowed first step.

    Atoms answering differently are dropped, weights renormalize, and the
    follow-up responses (everything the retained atoms do after that first
    measurement) become the new model's responses.  The conditioned side's
    length cap drops by one.
    """
    (side, name), outcome = first
    ctx = m.context
    ctx.family(side, name)  # raises KeyError if absent
    new_ctx = _decrement_bound(ctx, side)
    kept = []
    for atom, w in zip(m.space.atoms, m.space.weights):
        if m.shape == "causal":
            realized = m.responses[atom][((side, name),)][0]
        else:
            realized = m.responses[atom][side][(name,)][0]
        if realized == outcome:
            kept.append((atom, float(w)))
    total = sum(w for _, w in kept)
    if total <= PROB_FLOOR:
        raise ZeroProbabilityBranch(
            f"outcome {outcome!r} of {name!r} has probability {total:.3e}"
        )
    atoms = tuple(a for a, _ in kept)
    weights = np.array([w / total for _, w in kept])
    responses = {}
    for atom in atoms:
        if m.shape == "causal":
            old = m.responses[atom]
            new_tree = {}
            for path, outs in old.items():
                if path and path[0] == (side, name):
                    new_tree[path[1:]] = outs[1:]
            new_tree.pop((), None)
            responses[atom] = new_tree
        else:
            old = m.responses[atom]
            shifted = {}
            for choices, outs in old[side].items():
                if choices and choices[0] == name:
                    if len(choices) > 1:
                        shifted[choices[1:]] = outs[1:]
            other = 2 if side == 1 else 1
            responses[atom] = {side: shifted, other: old[other]}
    space = FiniteSampleSpace(atoms, weights)
    return DeterministicModel(space, m.shape, new_ctx, responses)


def _rank1_projector_labels(fam: OperationFamily) -> dict[str, np.ndarray]:
    """Outcome label -> rank-1 projector for an ideal nondegenerate family."""
    out = {}
    for lab, op in zip(fam.labels, fam.operators):
        if float(np.max(np.abs(op @ op - op))) > 1e-10 or \
                float(np.max(np.abs(op - op.conj().T))) > 1e-10:
            raise ValueError(f"family {fam.name!r} is not projective")
        rank = int(round(float(np.real(np.trace(op)))))
        if rank != 1:
            raise ValueError(
                f"first observable {fam.name!r} is trivial or degenerate "
                f"(projector rank {rank})"
            )
        out[lab] = op
    return out


def _interval_family_models(
    fams: tuple[OperationFamily, ...],
    follow_len: int,
    projectors: dict[tuple[str, str], np.ndarray],
    atom_budget: int,
):
    """Single-system interval models for each pure collapsed state, refined to
    one shared sample space.

    Returns (atom weights, {(family, outcome) -> {atom index -> tree}}) where
    each tree maps follow-up choice tuples to outcome tuples.
    """
    d = fams[0].dim
    sub_ctx = _single_side_context(fams, follow_len)
    per_state = {}
    breakpoints = {0.0, 1.0}
    for key, proj in projectors.items():
        state = make_density(proj / float(np.real(np.trace(proj))), (d, 1))
        sub = trivial_causal_model(state, sub_ctx, atom_budget) if follow_len > 0 \
            else None
        per_state[key] = sub
        if sub is not None:
            for lo, hi in sub.space.intervals:
                breakpoints.add(lo)
                breakpoints.add(hi)
    points = _dedupe_points(breakpoints)
    bounds = [(a, b) for a, b in zip(points, points[1:]) if b > a]
    weights = [b - a for a, b in bounds]
    trees: dict[tuple[str, str], list[dict]] = {}
    for key, sub in per_state.items():
        per_atom = []
        for lo, hi in bounds:
            mid = (lo + hi) / 2.0
            if sub is None:
                per_atom.append({})
                continue
            los = [iv[0] for iv in sub.space.intervals]
            idx = bisect_right(los, mid) - 1
            atom = sub.space.atoms[idx]
            tree = {
                tuple(n for _, n in path): outs
                for path, outs in sub.responses[atom].items()
            }
            per_atom.append(tree)
        trees[key] = per_atom
    return weights, trees


def couple_lchv_d2(
    lhv1: DeterministicModel,
    ctx: Context,
    atom_budget: int = ATOM_BUDGET,
) -> DeterministicModel:
    """Extend a single-time local model on C^2 (x) C^2 to all sequences.

    The first measurement on each side is answered by ``lhv1``; because local
    dimension is 2 and first steps are ideal and nondegenerate, the state
    after both first measurements is the pure product of the selected
    eigenvectors, so every later measurement on a side is governed by that
    side's collapsed pure state alone.  Follow-up responses are therefore
    delegated to single-system interval models of those pure states, drawn
    independently of the first-step atom.
    """
    if lhv1.shape != "local_causal":
        raise ValueError("first-step model must be local_causal")
    if ctx.dims != DimPair(2, 2):
        raise ValueError("coupling construction requires local dimension 2")
    if lhv1.context.max_len1 < 1 or lhv1.context.max_len2 < 1:
        raise ValueError("first-step model must cover length-1 sequences")
    for name in ctx.names(1):
        lhv1.context.family(1, name)
    for name in ctx.names(2):
        lhv1.context.family(2, name)

    proj1: dict[tuple[str, str], np.ndarray] = {}
    proj2: dict[tuple[str, str], np.ndarray] = {}
    for fam in ctx.side1:
        for lab, p in _rank1_projector_labels(fam).items():
            proj1[(fam.name, lab)] = p
    for fam in ctx.side2:
        for lab, p in _rank1_projector_labels(fam).items():
            proj2[(fam.name, lab)] = p

    w1, trees1 = _interval_family_models(
        ctx.side1, ctx.max_len1 - 1, proj1, atom_budget
    )
    w2, trees2 = _interval_family_models(
        ctx.side2, ctx.max_len2 - 1, proj2, atom_budget
    )
    n_total = len(lhv1.space) * len(w1) * len(w2)
    if n_total > atom_budget:
        raise BudgetExceededError(f"{n_total} atoms exceed budget {atom_budget}")

    def side_tree(atom: str, side: int, trees, refined_idx: int) -> dict:
        names = ctx.names(side)
        cap = ctx.max_len1 if side == 1 else ctx.max_len2
        tree: dict[tuple[str, ...], tuple[str, ...]] = {}
        for first_name in names:
            first_out = lhv1.responses[atom][side][(first_name,)][0]
            follow = trees[(first_name, first_out)][refined_idx]
            tree[(first_name,)] = (first_out,)
            for n in range(1, cap):
                for rest in itertools.product(names, repeat=n):
                    tree[(first_name,) + rest] = (first_out,) + follow[rest]
        return tree

    atoms = []
    weights = []
    responses = {}
    for atom_w, ww in zip(lhv1.space.atoms, lhv1.space.weights):
        for i1, p1 in enumerate(w1):
            t1 = side_tree(atom_w, 1, trees1, i1)
            for i2, p2 in enumerate(w2):
                t2 = side_tree(atom_w, 2, trees2, i2)
                atom = f"{atom_w}|{i1}|{i2}"
                atoms.append(atom)
                weights.append(float(ww) * p1 * p2)
                responses[atom] = {1: t1, 2: t2}
    space = FiniteSampleSpace(tuple(atoms), np.array(weights))
    return DeterministicModel(space, "local_causal", ctx, responses)


def deterministic_to_stochastic(m: DeterministicModel) -> StochasticModel:
    """Degenerate (0/1-valued) kernels reproducing a local causal model."""
    if m.shape != "local_causal":
        raise ValueError(
            "only local_causal models translate to per-side kernels"
        )
    kernels = {}
    for atom in m.space.atoms:
        per_side = {1: {}, 2: {}}
        for side in (1, 2):
            for choices, outs in m.responses[atom][side].items():
                for k in range(1, len(choices) + 1):
                    node = (choices[:k], outs[: k - 1])
                    per_side[side][node] = {outs[k - 1]: 1.0}
        kernels[atom] = per_side
    return StochasticModel(m.space, m.context, kernels)


def _kernel_nodes(kernels_side: dict, names, max_len: int):
    """Choice-tree nodes in deterministic order: length-major, lexicographic."""
    for n in range(1, max_len + 1):
        for choices in itertools.product(names, repeat=n):
            yield choices


def _enumerate_realized_trees(
    kernels_side: dict, names, max_len: int, atom_budget: int
):
    """All positive-probability deterministic response trees of one side.

    Mutually exclusive branches are never instantiated together: a tree only
    assigns outcomes along its own realized pasts, and its weight is the
    product of the kernel probabilities actually consumed.  Summing the
    weights over all trees telescopes to 1.
    """
    partial: list[tuple[dict, float]] = [({}, 1.0)]
    for choices in _kernel_nodes(kernels_side, names, max_len):
        new = []
        for tree, weight in partial:
            past = tree[choices[:-1]] if len(choices) > 1 else ()
            dist = kernels_side[(choices, past)]
            for out, p in dist.items():
                if p <= 0.0:
                    continue
                t = dict(tree)
                t[choices] = past + (out,)
                new.append((t, weight * p))
        partial = new
        if len(partial) > atom_budget:
            raise BudgetExceededError(
                f"realized response trees exceed atom budget {atom_budget}"
            )
    return partial


def stochastic_to_deterministic(
    s: StochasticModel, atom_budget: int = ATOM_BUDGET
) -> DeterministicModel:
    """Deterministic local causal model equal in distribution to ``s``.

    For each atom of the stochastic space, an independent outcome variable is
    attached to every reachable (choice sequence, own past) node of each
    side, and an atom of the new space is a joint realization of those
    variables: a pair of realized response trees.  Degenerate kernels
    contribute a single tree, so a degenerate stochastic model round-trips to
    its deterministic original.
    """
    ctx = s.context
    atoms = []
    weights = []
    responses = {}
    for atom, w in zip(s.space.atoms, s.space.weights):
        if float(w) == 0.0:
            continue
        trees1 = _enumerate_realized_trees(
            s.kernels[atom][1], ctx.names(1), ctx.max_len1, atom_budget
        ) if ctx.max_len1 > 0 else [({}, 1.0)]
        trees2 = _enumerate_realized_trees(
            s.kernels[atom][2], ctx.names(2), ctx.max_len2, atom_budget
        ) if ctx.max_len2 > 0 else [({}, 1.0)]
        if len(atoms) + len(trees1) * len(trees2) > atom_budget:
            raise BudgetExceededError(
                f"product space exceeds atom budget {atom_budget}"
            )
        for i1, (t1, p1) in enumerate(trees1):
            for i2, (t2, p2) in enumerate(trees2):
                tagged = f"{atom}|t{i1}|t{i2}"
                atoms.append(tagged)
                weights.append(float(w) * p1 * p2)
                responses[tagged] = {1: t1, 2: t2}
    space = FiniteSampleSpace(tuple(atoms), np.array(weights))
    return DeterministicModel(space, "local_causal", ctx, responses)


def extend_commuting_povm(
    lhv1: DeterministicModel,
    povm1: measurement.Povm,
    povm2: measurement.Povm,
    names: tuple[str, str] = ("M1", "M2"),
) -> StochasticModel:
    """Stochastic single-time model of two commuting POVMs.

    Each POVM is jointly diagonalized; its effects then read
    ``effect(alpha) = sum_j table[alpha, j] P_j`` over rank-1 projectors.
    The input model must answer the basis observables (the families whose
    operations are exactly those projectors), and the kernel at each atom is
    the table row selected by the model's basis response.
    """
    if lhv1.shape != "local_causal":
        raise ValueError("base model must be local_causal")
    decs = []
    for povm in (povm1, povm2):
        dec = measurement.commuting_decompose(povm)
        if isinstance(dec, measurement.NotCommuting):
            raise NotCommutingError(dec)
        decs.append(dec)

    def match_basis(side: int, dec: measurement.CommutingDecomposition):
        """Find the context family realizing the basis projectors; map
        projector index j to that family's outcome label."""
        for fam in lhv1.context.families(side):
            mapping = {}
            ok = True
            for j, p in enumerate(dec.projectors):
                hit = None
                for lab, op in zip(fam.labels, fam.operators):
                    if float(np.max(np.abs(op.conj().T @ op - p))) < 1e-8:
                        hit = lab
                        break
                if hit is None:
                    ok = False
                    break
                mapping[j] = hit
            if ok and len(set(mapping.values())) == len(mapping):
                return fam, mapping
        raise MissingBasisObservable(
            f"no side-{side} family matches the joint eigenbasis"
        )

    fam1, map1 = match_basis(1, decs[0])
    fam2, map2 = match_basis(2, decs[1])
    new_ctx = Context(
        (OperationFamily.from_povm(povm1, names[0]),),
        (OperationFamily.from_povm(povm2, names[1]),),
        1,
        1,
    )
    kernels = {}
    for atom in lhv1.space.atoms:
        per_side = {}
        for side, fam, mapping, dec, name in (
            (1, fam1, map1, decs[0], names[0]),
            (2, fam2, map2, decs[1], names[1]),
        ):
            basis_out = lhv1.responses[atom][side][(fam.name,)][0]
            j = next(k for k, lab in mapping.items() if lab == basis_out)
            row = dec.table[:, j]
            total = float(np.sum(row))
            if total <= 0:
                raise ValueError("joint-eigenbasis coefficients sum to zero")
            dist = {
                lab: float(v) / total for lab, v in zip(dec.labels, row)
            }
            per_side[side] = {((name,), ()): dist}
        kernels[atom] = per_side
    return StochasticModel(lhv1.space, new_ctx, kernels)


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of checking a model against quantum sequence distributions."""

    passed: bool
    max_deviation: float
    worst_sequence: str
    n_sequences: int
    tol: float
    structural: dict

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max deviation {self.max_deviation:.3e} over "
            f"{self.n_sequences} sequences (tol {self.tol:.0e}); "
            f"worst at {self.worst_sequence}"
        )


def _quantum_table(rho: DensityMatrix, ctx: Context, path: tuple[StepKey, ...]):
    seq = local_sequence(rho.dims, [(s, ctx.step_family((s, n))) for s, n in path])
    return measurement.sequence_distribution(rho, seq)


def verify_model(
    m, rho: DensityMatrix, tol: float = DEFAULT_VERIFY_TOL
) -> VerificationReport:
    """Compare a model's sequence distributions with the quantum ones.

    Causal-shape models are checked on every time-ordered step sequence in
    the context; local and stochastic models on every collected (side-1 then
    side-2) sequence, which exhausts their content since their per-side
    responses are interleaving-invariant and the two sides' operators
    commute.
    """
    ctx = m.context
    if ctx.dims != rho.dims:
        raise ValueError("model context dims do not match the state")
    worst = 0.0
    worst_seq = "(none)"
    count = 0
    if m.shape == "causal":
        jobs = (
            (path, m.distribution_interleaved(path))
            for path in ctx.interleaved_sequences()
        )
    else:
        jobs = (
            (
                tuple((1, n) for n in c1) + tuple((2, n) for n in c2),
                m.distribution_collected(c1, c2),
            )
            for c1, c2 in ctx.collected_sequences()
        )
    for path, model_table in jobs:
        qtable = _quantum_table(rho, ctx, path)
        count += 1
        for outs, q in qtable.items():
            dev = abs(model_table.get(outs, 0.0) - q)
            if dev > worst:
                worst = dev
                worst_seq = "/".join(
                    f"{s}:{n}={o}" for (s, n), o in zip(path, outs)
                )
    structural: dict = {
        "shape": m.shape,
        "weight_sum_deviation": abs(float(np.sum(m.space.weights)) - 1.0),
        "min_weight": float(np.min(m.space.weights)) if len(m.space) else 0.0,
        "responses_read_only_past": True,
        "per_side_responses": m.shape in ("local_causal", "stochastic"),
    }
    if isinstance(m, StochasticModel):
        kdev = 0.0
        for atom in m.space.atoms:
            for side in (1, 2):
                for dist in m.kernels[atom][side].values():
                    kdev = max(kdev, abs(sum(dist.values()) - 1.0))
        structural["kernel_normalization_deviation"] = kdev
    passed = worst <= tol and structural["weight_sum_deviation"] <= 1e-9
    return VerificationReport(passed, worst, worst_seq, count, tol, structural)


# --- JSON encodings ---------------------------------------------------------

def context_to_json(ctx: Context) -> dict:
    return {
        "side1": [measurement.family_to_json(f) for f in ctx.side1],
        "side2": [measurement.family_to_json(f) for f in ctx.side2],
        "max_len1": ctx.max_len1,
        "max_len2": ctx.max_len2,
    }


def context_from_json(obj: dict) -> Context:
    return Context(
        tuple(measurement.family_from_json(f) for f in obj["side1"]),
        tuple(measurement.family_from_json(f) for f in obj["side2"]),
        int(obj["max_len1"]),
        int(obj["max_len2"]),
    )


def _causal_tree_to_json(tree: dict) -> dict:
    out = {}
    for path, outs in tree.items():
        segs = []
        for (side, name), o in zip(path, outs):
            segs.append(f"{side}:{name}")
            segs.append(o)
        out["/".join(segs[:-1])] = outs[-1]
    return out


def _causal_tree_from_json(obj: dict) -> dict:
    flat = {}
    for key, last in obj.items():
        segs = key.split("/")
        path = tuple(
            (int(s.split(":", 1)[0]), s.split(":", 1)[1]) for s in segs[0::2]
        )
        outs = tuple(segs[1::2]) + (last,)
        flat[path] = outs
    return flat


def _side_tree_to_json(tree: dict) -> dict:
    out = {}
    for choices, outs in tree.items():
        segs = []
        for name, o in zip(choices, outs):
            segs.append(name)
            segs.append(o)
        out["/".join(segs[:-1])] = outs[-1]
    return out


def _side_tree_from_json(obj: dict) -> dict:
    flat = {}
    for key, last in obj.items():
        segs = key.split("/")
        choices = tuple(segs[0::2])
        outs = tuple(segs[1::2]) + (last,)
        flat[choices] = outs
    return flat


def model_to_json(m) -> dict:
    base = {
        "atoms": list(m.space.atoms),
        "weights": [float(w) for w in m.space.weights],
        "shape": m.shape,
        "context": context_to_json(m.context),
    }
    if m.shape == "causal":
        base["responses"] = {
            atom: _causal_tree_to_json(tree) for atom, tree in m.responses.items()
        }
    elif m.shape == "local_causal":
        base["responses"] = {
            atom: {
                "side1": _side_tree_to_json(trees[1]),
                "side2": _side_tree_to_json(trees[2]),
            }
            for atom, trees in m.responses.items()
        }
    else:
        base["kernels"] = {
            atom: {
                f"side{side}": {
                    "/".join(
                        seg
                        for c, o in itertools.zip_longest(choices, past)
                        for seg in ((c,) if o is None else (c, o))
                    ): dict(dist)
                    for (choices, past), dist in m.kernels[atom][side].items()
                }
                for side in (1, 2)
            }
            for atom in m.space.atoms
        }
    return base


def model_from_json(obj: dict):
    ctx = context_from_json(obj["context"])
    space = FiniteSampleSpace(
        tuple(obj["atoms"]), np.asarray(obj["weights"], dtype=float)
    )
    shape = obj["shape"]
    if shape == "causal":
        responses = {
            atom: _causal_tree_from_json(tree)
            for atom, tree in obj["responses"].items()
        }
        return DeterministicModel(space, "causal", ctx, responses)
    if shape == "local_causal":
        responses = {
            atom: {
                1: _side_tree_from_json(trees["side1"]),
                2: _side_tree_from_json(trees["side2"]),
            }
            for atom, trees in obj["responses"].items()
        }
        return DeterministicModel(space, "local_causal", ctx, responses)
    if shape == "stochastic":
        kernels = {}
        for atom, sides in obj["kernels"].items():
            per_side = {}
            for side in (1, 2):
                entries = {}
                for key, dist in sides[f"side{side}"].items():
                    segs = key.split("/")
                    choices = tuple(segs[0::2])
                    past = tuple(segs[1::2])
                    entries[(choices, past)] = {
                        k: float(v) for k, v in dist.items()
                    }
                per_side[side] = entries
            kernels[atom] = per_side
        return StochasticModel(space, ctx, kernels)
    raise ValueError(f"unknown model shape {shape!r}")
