"""Elitist non-dominated-sorting genetic algorithm over box-bounded genomes.

The evolutionary core is objective-agnostic: a problem supplies per-dimension
bounds and a batched evaluate() returning objective values (all minimized;
maximized quantities enter negated) plus a total constraint violation per
individual. Constraint handling is feasibility-first domination: feasible
beats infeasible, less-violating beats more-violating, and objectives only
decide between feasible individuals.

For the machine-design problem the genome is a latent code; evaluation decodes
it, accumulates normalized out-of-bounds distances of the decoded parameters
as the violation, and reads objectives from the KPI predictor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .designspace import KPI_NAMES, DesignSample, TopologyRegistry
from .errors import AmbiguousTopologyError, ConfigError
from .vae import VaeModel


@dataclass
class Nsga2Config:
    population: int = 200
    generations: int = 100
    crossover_prob: float = 0.9
    eta_crossover: float = 15.0
    mutation_prob: float | None = None  # default 1/n_genes
    eta_mutation: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ConfigError("population must be even and >= 4")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        for name in ("crossover_prob",):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ConfigError("mutation_prob must be in [0, 1]")


@dataclass
class MooProblem:
    """Bounds plus a batched evaluator mapping genomes to (objectives, violations)."""

    lower: np.ndarray
    upper: np.ndarray
    evaluate_batch: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    objective_names: tuple[str, ...]

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ConfigError("bounds must be two equal-length vectors")
        if not np.all(self.lower < self.upper):
            raise ConfigError("every lower bound must be strictly below its upper bound")
        if len(self.objective_names) < 2:
            raise ConfigError("need at least two objectives")

    @property
    def n_genes(self) -> int:
        return self.lower.size


def dominates(
    f_a: np.ndarray, f_b: np.ndarray, violation_a: float = 0.0, violation_b: float = 0.0
) -> bool:
    """Constrained domination: feasibility first, then component-wise objectives."""
    if len(f_a) != len(f_b):
        raise ConfigError("objective vectors differ in length")
    feas_a = violation_a == 0.0
    feas_b = violation_b == 0.0
    if feas_a and not feas_b:
        return True
    if not feas_a and feas_b:
        return False
    if not feas_a:
        return violation_a < violation_b
    return bool(np.all(f_a <= f_b) and np.any(f_a < f_b))


def _domination_matrix(f: np.ndarray, v: np.ndarray) -> np.ndarray:
    """D[i, j] = individual i dominates individual j (vectorized)."""
    le = np.all(f[:, None, :] <= f[None, :, :], axis=-1)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=-1)
    obj_dom = le & lt
    feas = v == 0.0
    fa = feas[:, None]
    fb = feas[None, :]
    return np.where(
        fa & fb, obj_dom, np.where(fa & ~fb, True, np.where(~fa & fb, False, v[:, None] < v[None, :]))
    )


def fast_nondominated_sort(f: np.ndarray, v: np.ndarray | None = None) -> list[list[int]]:
    """Partition indices into fronts; front 0 is the non-dominated set."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ConfigError("sort needs a non-empty 2-d objective matrix")
    n = f.shape[0]
    v = np.zeros(n) if v is None else np.asarray(v, dtype=np.float64)
    dom = _domination_matrix(f, v)
    counts = dom.sum(axis=0).astype(np.int64)  # how many dominate each j
    assigned = np.zeros(n, dtype=bool)
    fronts: list[list[int]] = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        assigned[current] = True
        fronts.append(current.tolist())
        counts = counts - dom[current, :].sum(axis=0)
        current = np.flatnonzero((counts == 0) & ~assigned)
    return fronts


def crowding_distance(f_front: np.ndarray) -> np.ndarray:
    """Crowding distances for one front; extremes get +inf.

    A zero-range objective contributes nothing to interior points. Ties keep
    stable sorted order.
    """
    f_front = np.asarray(f_front, dtype=np.float64)
    if f_front.ndim != 2 or f_front.shape[0] == 0:
        raise ConfigError("crowding needs a non-empty 2-d objective matrix")
    n, k = f_front.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(k):
        order = np.argsort(f_front[:, j], kind="stable")
        vals = f_front[order, j]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span <= 0.0:
            continue
        gaps = (vals[2:] - vals[:-2]) / span
        interior = order[1:-1]
        finite = np.isfinite(dist[interior])
        dist[interior[finite]] += gaps[finite]
    return dist


def sbx_crossover(
    parent1: np.ndarray,
    parent2: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    eta: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover, applied per dimension with probability 0.5.

    Children are symmetric around the parent midpoint (their mean equals the
    parents' mean unless bound clipping intervenes) and each dimension's pair
    of values is assigned to the two children in random order; without that
    swap a child just shadows one parent and no genes ever recombine. Children
    are clipped to bounds.
    """
    c1 = parent1.copy()
    c2 = parent2.copy()
    apply = rng.random(parent1.size) <= 0.5
    u = rng.random(parent1.size)
    exponent = 1.0 / (eta + 1.0)
    beta = np.where(u <= 0.5, (2.0 * u) ** exponent, (1.0 / (2.0 * (1.0 - u))) ** exponent)
    mid = 0.5 * (parent1 + parent2)
    half_spread = 0.5 * beta * (parent2 - parent1)
    swap = rng.random(parent1.size) <= 0.5
    low = np.where(swap, mid + half_spread, mid - half_spread)
    high = np.where(swap, mid - half_spread, mid + half_spread)
    c1[apply] = low[apply]
    c2[apply] = high[apply]
    np.clip(c1, lower, upper, out=c1)
    np.clip(c2, lower, upper, out=c2)
    return c1, c2


def polynomial_mutation(
    genome: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    eta: float,
    prob: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bounded polynomial mutation; the result always stays within bounds."""
    out = genome.copy()
    apply = rng.random(genome.size) < prob
    u = rng.random(genome.size)
    span = upper - lower
    d1 = (genome - lower) / span
    d2 = (upper - genome) / span
    mut_pow = 1.0 / (eta + 1.0)
    with np.errstate(invalid="ignore"):
        low_branch = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** mut_pow - 1.0
        high_branch = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** mut_pow
    delta = np.where(u < 0.5, low_branch, high_branch)
    out[apply] = (genome + delta * span)[apply]
    np.clip(out, lower, upper, out=out)
    return out


def _crowded_ranks(f: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fronts = fast_nondominated_sort(f, v)
    rank = np.zeros(f.shape[0], dtype=np.int64)
    crowd = np.zeros(f.shape[0])
    for r, front in enumerate(fronts):
        rank[front] = r
        crowd[front] = crowding_distance(f[front])
    return rank, crowd


def _tournament(rank: np.ndarray, crowd: np.ndarray, a: int, b: int) -> int:
    if rank[a] != rank[b]:
        return a if rank[a] < rank[b] else b
    if crowd[a] != crowd[b]:
        return a if crowd[a] > crowd[b] else b
    return a


@dataclass
class EvolveResult:
    z: np.ndarray
    f: np.ndarray
    v: np.ndarray
    archive_z: np.ndarray
    archive_f: np.ndarray
    archive_v: np.ndarray
    history: list[dict] = field(default_factory=list)


def evolve(problem: MooProblem, cfg: Nsga2Config) -> EvolveResult:
    """Run mu+lambda NSGA-II; returns the final population and its feasible,
    deduplicated first front.

    RNG streams are keyed by (seed, generation) so results do not depend on
    how evaluation work is scheduled.
    """
    n_genes = problem.n_genes
    pm = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / n_genes
    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17, 0]))
    z = problem.lower + init_rng.random((cfg.population, n_genes)) * (problem.upper - problem.lower)
    f, v = problem.evaluate_batch(z)
    f = np.asarray(f, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    history: list[dict] = []

    for gen in range(1, cfg.generations + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17, gen]))
        rank, crowd = _crowded_ranks(f, v)
        # binary tournaments pick one parent per slot, mated pairwise
        draws = rng.integers(0, cfg.population, size=(cfg.population, 2))
        parents = np.array([_tournament(rank, crowd, a, b) for a, b in draws])
        offspring = np.empty_like(z)
        for i in range(0, cfg.population, 2):
            p1 = z[parents[i]]
            p2 = z[parents[i + 1]]
            if rng.random() <= cfg.crossover_prob:
                c1, c2 = sbx_crossover(p1, p2, problem.lower, problem.upper, cfg.eta_crossover, rng)
            else:
                c1, c2 = p1.copy(), p2.copy()
            offspring[i] = polynomial_mutation(c1, problem.lower, problem.upper, cfg.eta_mutation, pm, rng)
            offspring[i + 1] = polynomial_mutation(c2, problem.lower, problem.upper, cfg.eta_mutation, pm, rng)
        f_off, v_off = problem.evaluate_batch(offspring)
        z_all = np.vstack([z, offspring])
        f_all = np.vstack([f, np.asarray(f_off, dtype=np.float64)])
        v_all = np.concatenate([v, np.asarray(v_off, dtype=np.float64)])

        fronts = fast_nondominated_sort(f_all, v_all)
        chosen: list[int] = []
        for front in fronts:
            if len(chosen) + len(front) <= cfg.population:
                chosen.extend(front)
            else:
                dist = crowding_distance(f_all[front])
                order = np.argsort(-dist, kind="stable")
                need = cfg.population - len(chosen)
                chosen.extend(np.asarray(front)[order[:need]].tolist())
            if len(chosen) >= cfg.population:
                break
        idx = np.asarray(chosen)
        z, f, v = z_all[idx], f_all[idx], v_all[idx]

        feasible = v == 0.0
        history.append(
            {
                "generation": gen,
                "n_feasible": int(feasible.sum()),
                "best_objectives": (
                    f[feasible].min(axis=0).tolist() if feasible.any() else [float("inf")] * f.shape[1]
                ),
            }
        )

    front0 = fast_nondominated_sort(f, v)[0]
    keep = [i for i in front0 if v[i] == 0.0]
    seen: set[bytes] = set()
    unique: list[int] = []
    for i in keep:
        key = z[i].tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(i)
    return EvolveResult(
        z=z,
        f=f,
        v=v,
        archive_z=z[unique],
        archive_f=f[unique],
        archive_v=v[unique],
        history=history,
    )


# -- machine-design problem -----------------------------------------------------


def latent_bounds_from_training(model: VaeModel, p_train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension [min, max] envelope of the training latent means."""
    if p_train.ndim != 2 or p_train.shape[0] == 0:
        raise ConfigError("latent bounds need a non-empty training matrix")
    from .training import batched_apply

    means = batched_apply(model.encode_mean, p_train)
    lo = means.min(axis=0)
    hi = means.max(axis=0)
    degenerate = hi - lo <= 0.0
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} latent dimension(s) degenerate; widening by 1e-6",
            stacklevel=2,
        )
        lo = lo.copy()
        hi = hi.copy()
        lo[degenerate] -= 5e-7
        hi[degenerate] += 5e-7
    return lo, hi


def parse_objectives(text: str) -> list[tuple[str, str]]:
    """Parse 'max:y2,min:y4' into [(kpi, direction), ...]."""
    out = []
    for part in text.split(","):
        direction, _, kpi = part.strip().partition(":")
        if direction not in ("min", "max") or kpi not in KPI_NAMES:
            raise ConfigError(
                f"bad objective {part!r}; expected min:<kpi> or max:<kpi> with kpi in {KPI_NAMES}"
            )
        out.append((kpi, direction))
    if len(out) < 2:
        raise ConfigError("need at least two objectives")
    return out


def _indicator_violation(registry: TopologyRegistry, indicator: float) -> float | None:
    """None when the indicator resolves cleanly, else 1 + distance to nearest id."""
    try:
        registry.resolve_topology(indicator)
        return None
    except AmbiguousTopologyError:
        k_est = indicator * registry.n_topologies
        return 1.0 + min(abs(k_est - k) for k in registry.ids)


def decoded_violation(registry: TopologyRegistry, vector: np.ndarray) -> float:
    """Sum of normalized out-of-bounds distances of a decoded unified vector."""
    ind = _indicator_violation(registry, float(vector[0]))
    if ind is not None:
        return ind
    k, _ = registry.resolve_topology(float(vector[0]))
    spec = registry.spec(k)
    raw = vector[registry.block_slice(k)]
    total = 0.0
    for p, u in zip(spec.params, raw):
        value = p.denormalize(float(u))
        if value < p.minimum:
            total += (p.minimum - value) / p.span
        elif value > p.maximum:
            total += (value - p.maximum) / p.span
    return total


def build_machine_problem(
    model: VaeModel,
    registry: TopologyRegistry,
    objectives: list[tuple[str, str]],
    lower: np.ndarray,
    upper: np.ndarray,
) -> MooProblem:
    """Latent-space problem: objectives from the KPI head, feasibility from the decoder."""
    idx_sign = [
        (KPI_NAMES.index(kpi), -1.0 if direction == "max" else 1.0) for kpi, direction in objectives
    ]
    names = tuple(f"{direction}:{kpi}" for kpi, direction in objectives)

    def evaluate_batch(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p_hat = model.decode(z)
        y_hat = model.predict_kpis(z)
        n = z.shape[0]
        f = np.empty((n, len(idx_sign)))
        for j, (kpi_idx, sign) in enumerate(idx_sign):
            f[:, j] = sign * y_hat[:, kpi_idx]
        v = np.empty(n)
        for i in range(n):
            if not (np.all(np.isfinite(p_hat[i])) and np.all(np.isfinite(y_hat[i]))):
                v[i] = np.inf
                f[i] = np.inf
            else:
                v[i] = decoded_violation(registry, p_hat[i])
        return f, v

    return MooProblem(lower=lower, upper=upper, evaluate_batch=evaluate_batch, objective_names=names)


def decode_archive(
    model: VaeModel, registry: TopologyRegistry, z: np.ndarray
) -> list[DesignSample]:
    """Decoded designs for archive genomes (feasible rows resolve cleanly)."""
    vectors = model.decode(z)
    return [registry.extract(row, snap=False)[0] for row in vectors]


def select_representatives(f_archive: np.ndarray) -> list[tuple[str, int]]:
    """Extreme point per objective plus the knee (closest to the ideal point).

    Objectives are min-max normalized over the archive before measuring the
    knee's Euclidean distance to the per-objective minima.
    """
    f_archive = np.asarray(f_archive, dtype=np.float64)
    if f_archive.ndim != 2 or f_archive.shape[0] == 0:
        raise ConfigError("representative selection needs a non-empty archive")
    picks = [(f"extreme_{j}", int(np.argmin(f_archive[:, j]))) for j in range(f_archive.shape[1])]
    lo = f_archive.min(axis=0)
    span = f_archive.max(axis=0) - lo
    span[span <= 0.0] = 1.0
    normalized = (f_archive - lo) / span
    picks.append(("knee", int(np.argmin(np.linalg.norm(normalized, axis=1)))))
    return picks
