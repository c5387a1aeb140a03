"""Step 1: global multi-objective search over launch date, flyby sequence
and leg times.

Outer loop: an elitist non-dominated-sorting genetic algorithm over a
variable-length decision vector (null genes encode "no flyby here").
Inner loop: each interplanetary leg is a small NLP on the spiral model —
thrust arc, ballistic coast, and (for rendezvous legs) a second thrust
arc, with position/time/velocity matching constraints and the
out-of-plane acceleration of the first spiral pinned to zero at its
start, middle and end.

Fitness is the pair (total transfer time, total thrust impulse); runs are
reproducible from the seed alone regardless of worker count.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .bodies import BodySpec, body_state, get_body
from .solver import NlpOptions, NlpProblem, NlpStatus, solve
from .spirals import propellant_fraction
from .units import (TU_DAYS, VU_KMS, YEAR_DAYS, days_to_tu, format_epoch,
                    kms_to_vu, tu_to_days, vu_to_kms)

NULL_GENE = -1

LEG_TOL = 1e-6
PENALTY_DV_CANONICAL = 100.0 / VU_KMS     # "100 km/s" base penalty


# ---------------------------------------------------------------------------
# configuration and chromosome
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MissionConfig:
    """User inputs of the global search (launch window and leg times in
    days past J2000 / days; launch excess speed in km/s)."""
    mission_type: str                    # "rendezvous" | "flyby"
    departure: BodySpec
    arrival: BodySpec
    t0_min: float
    t0_max: float
    leg_time_min: float
    leg_time_max: float
    n_fb_min: int
    n_fb_max: int
    flyby_bodies: tuple[BodySpec, ...]
    vinf_min: float
    vinf_max: float
    isp: float = 3000.0

    def __post_init__(self):
        if self.mission_type not in ("rendezvous", "flyby"):
            raise ValueError("mission_type must be 'rendezvous' or 'flyby'")
        if self.t0_max < self.t0_min or self.leg_time_max < self.leg_time_min:
            raise ValueError("empty launch window or leg-time interval")
        if self.n_fb_min > self.n_fb_max:
            raise ValueError("n_fb_min > n_fb_max")
        if self.n_fb_max > 0 and not self.flyby_bodies:
            raise ValueError("flyby bodies required when n_fb_max > 0")


@dataclass(frozen=True)
class GaOptions:
    population: int = 100
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float | None = None        # default 1/len(genes)
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class Chromosome:
    """Outer-loop decision vector with null genes.

    ``slots`` holds (body index into the candidate list or NULL_GENE,
    leg-time gene in days) for each potential flyby; ``t_final`` is the
    last leg's time gene.
    """
    t0: float
    slots: tuple[tuple[int, float], ...]
    t_final: float

    def key(self):
        return (self.t0, self.slots, self.t_final)

    def gene_count(self) -> int:
        return 2 + 2 * len(self.slots)


@dataclass(frozen=True)
class LegSpec:
    dep: BodySpec
    arr: BodySpec
    event1: str                    # "launch" | "flyby"
    event2: str                    # "flyby" | "rendezvous"
    t_gene: float                  # leg-time guess, days
    t0_gene: float | None = None   # launch-epoch guess, days (launch legs)


def decode_chromosome(chromo: Chromosome,
                      config: MissionConfig) -> Optional[list[LegSpec]]:
    """Expand the gene vector into ordered leg specs, skipping null genes.

    Returns None when the decoded flyby count is outside the configured
    range (the caller penalizes such individuals).
    """
    hops: list[tuple[BodySpec, float]] = []
    for body_idx, t_gene in chromo.slots:
        if body_idx == NULL_GENE:
            continue
        hops.append((config.flyby_bodies[body_idx], t_gene))
    if not (config.n_fb_min <= len(hops) <= config.n_fb_max):
        return None
    legs = []
    chain = [config.departure] + [b for b, _ in hops] + [config.arrival]
    times = [t for _, t in hops] + [chromo.t_final]
    final_event = "rendezvous" if config.mission_type == "rendezvous" else "flyby"
    for i in range(len(chain) - 1):
        legs.append(LegSpec(
            dep=chain[i], arr=chain[i + 1],
            event1="launch" if i == 0 else "flyby",
            event2=final_event if i == len(chain) - 2 else "flyby",
            t_gene=times[i],
            t0_gene=chromo.t0 if i == 0 else None))
    return legs


def launch_vinf_vector(vinf: float, psi_l: float, eta: float,
                       dep_state) -> np.ndarray:
    """Launch excess-velocity vector (canonical units).

    ``psi_l`` is the in-plane angle from the body's velocity direction,
    ``eta`` the angle out of the body's orbital plane.
    """
    v = np.asarray(dep_state.v, dtype=float)
    r = np.asarray(dep_state.r, dtype=float)
    t_hat = v / np.linalg.norm(v)
    h = np.cross(r, v)
    h_hat = h / np.linalg.norm(h)
    b_hat = np.cross(h_hat, t_hat)
    return vinf * (math.cos(eta) * math.cos(psi_l) * t_hat
                   + math.cos(eta) * math.sin(psi_l) * b_hat
                   + math.sin(eta) * h_hat)


# ---------------------------------------------------------------------------
# inner-loop variables
# ---------------------------------------------------------------------------
@dataclass
class LegVariables:
    """Inner-loop variable set for one leg (only the fields that apply to
    the leg's event pair are meaningful)."""
    t0: float | None = None        # days past J2000 (launch legs)
    vinf: float | None = None      # km/s (launch legs)
    psi_l: float | None = None
    eta: float | None = None
    T: float = 0.0                 # days
    delta: float | None = None     # rad (flyby-start legs)
    zeta: float | None = None
    xi1: float = 0.4
    xi2: float | None = None       # rendezvous legs
    f_a: float = 0.01
    f_b: float | None = None
    c2a: float = 0.0
    c3a: float = 0.0
    c4a: float = 0.0
    c2b: float | None = None
    c3b: float | None = None
    c4b: float | None = None

    @staticmethod
    def from_vector(z: np.ndarray, launch: bool, rendezvous: bool) -> "LegVariables":
        v = LegVariables()
        if launch:
            v.t0 = tu_to_days(z[0])
            v.vinf = vu_to_kms(z[1])
            v.psi_l = float(z[2])
            v.eta = float(z[3])
            v.T = tu_to_days(z[4])
            base = 5
        else:
            v.T = tu_to_days(z[0])
            v.delta = float(z[1])
            v.zeta = float(z[2])
            base = 3
        v.xi1 = float(z[base])
        if rendezvous:
            v.xi2 = float(z[base + 1])
            v.f_a = float(z[base + 2])
            v.f_b = float(z[base + 3])
            v.c2a, v.c3a, v.c4a = (float(z[base + 4]), float(z[base + 5]),
                                   float(z[base + 6]))
            v.c2b, v.c3b, v.c4b = (float(z[base + 7]), float(z[base + 8]),
                                   float(z[base + 9]))
        else:
            v.f_a = float(z[base + 1])
            v.c2a, v.c3a, v.c4a = (float(z[base + 2]), float(z[base + 3]),
                                   float(z[base + 4]))
        return v

    def to_vector(self, launch: bool, rendezvous: bool) -> np.ndarray:
        head: list[float] = []
        if launch:
            head = [days_to_tu(self.t0), kms_to_vu(self.vinf),
                    self.psi_l, self.eta, days_to_tu(self.T)]
        else:
            head = [days_to_tu(self.T), self.delta, self.zeta]
        tail = [self.xi1]
        if rendezvous:
            tail += [self.xi2, self.f_a, self.f_b,
                     self.c2a, self.c3a, self.c4a,
                     self.c2b, self.c3b, self.c4b]
        else:
            tail += [self.f_a, self.c2a, self.c3a, self.c4a]
        return np.array(head + tail, dtype=float)


@dataclass
class LegSolution:
    feasible: bool
    dv: float                      # canonical
    t0_days: float
    T_days: float
    terminal_r: np.ndarray
    terminal_v: np.ndarray
    max_violation: float
    variables: LegVariables
    dv1: float = 0.0
    dv2: float = 0.0
    theta_total: float = 0.0
    vinf_dep_kms: float = 0.0      # hyperbolic excess at leg start (flyby legs)
    nlp_status: str = ""
    nlp_iterations: int = 0

    @property
    def dv_kms(self) -> float:
        return vu_to_kms(self.dv)


# ---------------------------------------------------------------------------
# leg evaluation / solution
# ---------------------------------------------------------------------------
def _sweep_reference(spec: LegSpec, t0_days: float,
                     v_minus: np.ndarray | None) -> tuple[float, float]:
    """(reference sweep angle, time scale TU) for the leg.

    The reference is the polar angle a ballistic arc sweeps from the leg's
    entry state over the full transfer-time guess; it de-normalizes the
    fractional switch angles and is a pure function of the leg spec and
    chain state, so re-evaluations see the same geometry as the solve.
    """
    t_tu = days_to_tu(spec.t_gene)
    s_dep = body_state(spec.dep, t0_days)
    if v_minus is not None:
        v0 = np.asarray(v_minus, dtype=float)
    else:
        vinf = kms_to_vu(spec_vinf_probe(spec))
        v0 = s_dep.v + vinf * s_dep.v / np.linalg.norm(s_dep.v)
    state = np.concatenate([s_dep.r, v0])
    out = np.empty(6)
    status, swept = _kernels.coast_time_tracksweep(state, t_tu, 1.0, out)
    if status == _kernels.OK and swept > 0.05:
        return float(swept), t_tu
    # fall back to a circular-rate estimate when the probe escapes or fails
    s_arr = body_state(spec.arr, t0_days + spec.t_gene)
    phi0 = math.atan2(s_dep.r[1], s_dep.r[0])
    phit = math.atan2(s_arr.r[1], s_arr.r[0])
    dphi = (phit - phi0) % (2.0 * math.pi)
    r0 = float(np.linalg.norm(s_dep.r))
    r1 = float(np.linalg.norm(s_arr.r))
    n_est = 0.5 * (r0 ** -1.5 + r1 ** -1.5)
    k = max(0.0, round((n_est * t_tu - dphi) / (2.0 * math.pi)))
    theta_ref = dphi + 2.0 * math.pi * k
    if theta_ref < 0.05:
        theta_ref += 2.0 * math.pi
    return theta_ref, t_tu


def spec_vinf_probe(spec: LegSpec) -> float:
    """Launch excess speed used by the sweep-reference probe (km/s)."""
    return 0.0


def _build_spec_pack(spec: LegSpec, t0_days: float,
                     v_minus: np.ndarray | None) -> np.ndarray:
    pack = np.zeros(_kernels.LEG_SPEC_SIZE)
    pack[0] = 1.0 if spec.event1 == "launch" else 0.0
    pack[1] = 1.0 if spec.event2 == "rendezvous" else 0.0
    pack[2] = days_to_tu(t0_days)
    if v_minus is not None:
        pack[3:6] = v_minus
    theta_ref, t_scale = _sweep_reference(spec, t0_days, v_minus)
    pack[6] = theta_ref
    pack[7] = t_scale
    if spec.event1 == "flyby":
        pack[8] = spec.dep.mu_canonical
        pack[9] = spec.dep.rp_min_au
    pack[10:22] = spec.dep.elements.pack()
    pack[22:34] = spec.arr.elements.pack()
    return pack


def _leg_layout(spec: LegSpec, reduced: bool = False) -> tuple[int, int, slice]:
    launch = spec.event1 == "launch"
    rendezvous = spec.event2 == "rendezvous"
    if reduced:
        n = (5 if launch else 3) + (5 if rendezvous else 2)
        n_eq = (_kernels.N_EQ_RENDEZVOUS_RED if rendezvous
                else _kernels.N_EQ_FLYBY_RED)
    else:
        n = (5 if launch else 3) + (10 if rendezvous else 5)
        n_eq = _kernels.N_EQ_RENDEZVOUS if rendezvous else _kernels.N_EQ_FLYBY
    if launch:
        iq = slice(2, 3) if rendezvous else slice(0, 0)
    else:
        iq = slice(0, 3) if rendezvous else slice(0, 2)
    return n, n_eq, iq


def evaluate_leg(spec: LegSpec, variables: LegVariables, t0_days: float,
                 v_minus: np.ndarray | None = None) -> LegSolution:
    """Evaluate the leg residuals/impulse at a given (full) variable set."""
    launch = spec.event1 == "launch"
    rendezvous = spec.event2 == "rendezvous"
    z = variables.to_vector(launch, rendezvous)
    pack = _build_spec_pack(spec, t0_days, v_minus)
    eq = np.empty(9)
    iq = np.empty(3)
    ex = np.empty(20)
    _kernels.eval_leg(z, pack, eq, iq, ex, 0)
    _, n_eq, iq_sl = _leg_layout(spec)
    ok = ex[0] == 0.0
    viol = float(np.abs(eq[:n_eq]).max()) if ok else math.inf
    viol = max(viol, float(np.maximum(iq[iq_sl], 0.0).max(initial=0.0)))
    return LegSolution(
        feasible=ok and viol <= LEG_TOL,
        dv=float(ex[1]), t0_days=tu_to_days(ex[2]), T_days=tu_to_days(ex[3]),
        terminal_r=ex[4:7].copy(), terminal_v=ex[7:10].copy(),
        max_violation=viol, variables=variables,
        dv1=float(ex[10]), dv2=float(ex[11]), theta_total=float(ex[12]),
        vinf_dep_kms=vu_to_kms(float(ex[13])))


def leg_residuals(spec: LegSpec, variables: LegVariables, t0_days: float,
                  v_minus: np.ndarray | None = None) -> np.ndarray:
    """Full constraint-residual vector of a leg at a variable set."""
    launch = spec.event1 == "launch"
    rendezvous = spec.event2 == "rendezvous"
    z = variables.to_vector(launch, rendezvous)
    pack = _build_spec_pack(spec, t0_days, v_minus)
    eq = np.empty(9)
    iq = np.empty(3)
    ex = np.empty(20)
    _kernels.eval_leg(z, pack, eq, iq, ex, 0)
    _, n_eq, _ = _leg_layout(spec)
    return eq[:n_eq].copy()


def _leg_bounds_and_guess(spec: LegSpec, t0_days: float, config: MissionConfig,
                          psi_seed: float,
                          arc_seed: tuple[float, float] = (0.01, 0.99),
                          reduced: bool = False):
    launch = spec.event1 == "launch"
    rendezvous = spec.event2 == "rendezvous"
    t_tu = days_to_tu(spec.t_gene)
    f_a0, f_b0 = arc_seed
    bounds: list[tuple[float, float]] = []
    guess: list[float] = []
    if launch:
        t0_tu = days_to_tu(t0_days)
        lo = max(days_to_tu(config.t0_min), t0_tu - 0.1 * t_tu)
        hi = min(days_to_tu(config.t0_max), t0_tu + 0.1 * t_tu)
        bounds += [(lo, hi),
                   (kms_to_vu(config.vinf_min), kms_to_vu(config.vinf_max)),
                   (-math.pi, math.pi), (-math.pi / 2, math.pi / 2),
                   (0.9 * t_tu, 1.1 * t_tu)]
        guess += [min(max(t0_tu, lo), hi), kms_to_vu(config.vinf_max),
                  psi_seed, 0.0, t_tu]
    else:
        bounds += [(0.9 * t_tu, 1.1 * t_tu), (-math.pi, math.pi),
                   (-math.pi / 2, math.pi / 2)]
        guess += [t_tu, 0.0, 0.0]
    bounds.append((0.0, 1.0))
    guess.append(0.4)
    if rendezvous:
        bounds += [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]
        guess += [0.4, f_a0, f_b0]
        if reduced:
            bounds += [(-10.0, 10.0)]        # c4 of the second spiral
            guess += [0.0]
        else:
            bounds += [(-10.0, 10.0)] * 6
            guess += [0.0] * 6
    else:
        bounds += [(0.0, 1.0)]
        guess += [f_a0]
        if not reduced:
            bounds += [(-10.0, 10.0)] * 3
            guess += [0.0] * 3
    return np.array(bounds), np.array(guess)


_LEG_NLP_OPTS = NlpOptions(tol_feas=LEG_TOL, tol_opt=1e-4, max_iter=32,
                           hessian="fd", hessian_refresh=2,
                           give_up_violation=2.5, f_stall_exit=4)


def solve_leg(spec: LegSpec, t0_days: float, config: MissionConfig,
              v_minus: np.ndarray | None = None,
              opts: NlpOptions = _LEG_NLP_OPTS) -> LegSolution:
    """Optimize one leg's variables; launch legs multi-start over the three
    in-plane launch-angle seeds.

    The NLP runs in the reduced formulation: the shaping coefficients tied
    down by the zero out-of-plane-acceleration conditions and the terminal
    out-of-plane match are solved inside the evaluator, which leaves a
    small, well-conditioned problem.  The returned variables carry the
    full coefficient set for re-evaluation through the one-to-one path.
    """
    launch = spec.event1 == "launch"
    rendezvous = spec.event2 == "rendezvous"
    n, n_eq, iq_sl = _leg_layout(spec, reduced=True)
    pack = _build_spec_pack(spec, t0_days, v_minus)

    def fused(z):
        eq = np.empty(9)
        iq = np.empty(3)
        ex = np.empty(20)
        f = _kernels.eval_leg(z, pack, eq, iq, ex, 1)
        return f, eq[:n_eq].copy(), iq[iq_sl].copy()

    def fused_batch(Z):
        F = np.empty(Z.shape[0])
        EQ = np.empty((Z.shape[0], 9))
        IN = np.empty((Z.shape[0], 3))
        ST = np.empty(Z.shape[0])
        _kernels.eval_leg_batch(np.ascontiguousarray(Z), pack, 9, 3,
                                F, EQ, IN, ST, 1)
        return F, EQ[:, :n_eq], IN[:, iq_sl]

    seeds = (-math.pi / 2, 0.0, math.pi / 2) if launch else (0.0,)
    # the near-ballistic Table-type guess plus opened-arc alternatives:
    # rendezvous legs have several basins and either can be the cheap one
    arc_seeds = (((0.01, 0.99), (0.01, 0.60), (0.15, 0.70)) if rendezvous
                 else ((0.01, 0.99),))
    best: LegSolution | None = None
    for psi_seed in seeds:
        for arc_seed in arc_seeds:
            bounds, guess = _leg_bounds_and_guess(spec, t0_days, config,
                                                  psi_seed, arc_seed,
                                                  reduced=True)
            problem = NlpProblem(n=n, bounds=bounds, fused=fused,
                                 fused_batch=fused_batch)
            try:
                res = solve(problem, guess, opts)
            except ArithmeticError:
                continue
            eq = np.empty(9)
            iq = np.empty(3)
            ex = np.empty(20)
            _kernels.eval_leg(res.x, pack, eq, iq, ex, 1)
            variables = _variables_from_reduced(res.x, ex, launch, rendezvous)
            sol = evaluate_leg(spec, variables, t0_days, v_minus)
            sol.nlp_status = res.status.value
            sol.nlp_iterations = res.iterations
            if best is None:
                best = sol
            elif sol.feasible and (not best.feasible or sol.dv < best.dv):
                best = sol
            elif not best.feasible and sol.max_violation < best.max_violation:
                best = sol
    if best is None:
        dummy = LegVariables(T=spec.t_gene)
        best = LegSolution(feasible=False, dv=PENALTY_DV_CANONICAL,
                           t0_days=t0_days, T_days=spec.t_gene,
                           terminal_r=np.zeros(3), terminal_v=np.zeros(3),
                           max_violation=math.inf, variables=dummy,
                           nlp_status="error")
    return best


def _variables_from_reduced(z: np.ndarray, extras: np.ndarray,
                            launch: bool, rendezvous: bool) -> LegVariables:
    v = LegVariables()
    if launch:
        v.t0 = tu_to_days(z[0])
        v.vinf = vu_to_kms(z[1])
        v.psi_l = float(z[2])
        v.eta = float(z[3])
        v.T = tu_to_days(z[4])
        base = 5
    else:
        v.T = tu_to_days(z[0])
        v.delta = float(z[1])
        v.zeta = float(z[2])
        base = 3
    v.xi1 = float(z[base])
    if rendezvous:
        v.xi2 = float(z[base + 1])
        v.f_a = float(z[base + 2])
        v.f_b = float(z[base + 3])
        v.c2b, v.c3b, v.c4b = (float(extras[17]), float(extras[18]),
                               float(extras[19]))
    else:
        v.f_a = float(z[base + 1])
    v.c2a, v.c3a, v.c4a = (float(extras[14]), float(extras[15]),
                           float(extras[16]))
    return v


# ---------------------------------------------------------------------------
# individuals
# ---------------------------------------------------------------------------
@dataclass
class IndividualResult:
    fitness: tuple[float, float]       # (total time TU, total impulse canonical)
    feasible: bool
    legs: list[LegSolution] = field(default_factory=list)
    sequence: tuple[str, ...] = ()
    max_violation: float = 0.0

    @property
    def tof_days(self) -> float:
        return tu_to_days(self.fitness[0]) if self.feasible else math.inf

    @property
    def dv_kms(self) -> float:
        return vu_to_kms(self.fitness[1]) if self.feasible else math.inf


def _penalty_fitness(config: MissionConfig, violation: float) -> tuple[float, float]:
    t_pen = 10.0 * days_to_tu(config.leg_time_max) * (config.n_fb_max + 1)
    v = min(violation, 1e6) if math.isfinite(violation) else 1e6
    return (t_pen, PENALTY_DV_CANONICAL + 1e3 * v)


# per-process memo of solved leg chains: a chromosome prefix fully
# determines the chain state entering the next leg, so identical prefixes
# (ubiquitous once the population starts converging) are solved once
_PREFIX_CACHE: dict = {}
_PREFIX_CACHE_CAP = 200_000


def evaluate_individual(chromo: Chromosome,
                        config: MissionConfig) -> IndividualResult:
    """Decode and chain-solve all legs; failures map to penalty fitness."""
    legs = decode_chromosome(chromo, config)
    if legs is None:
        return IndividualResult(fitness=_penalty_fitness(config, 1.0),
                                feasible=False)
    sequence = (legs[0].dep.name,) + tuple(l.arr.name for l in legs)
    if len(_PREFIX_CACHE) > _PREFIX_CACHE_CAP:
        _PREFIX_CACHE.clear()

    t0 = chromo.t0
    v_minus: np.ndarray | None = None
    solutions: list[LegSolution] = []
    key = (config.mission_type, chromo.t0)
    for leg in legs:
        key = key + (leg.arr.name, leg.t_gene, leg.event2)
        hit = _PREFIX_CACHE.get(key)
        if hit is not None:
            sol = hit
        else:
            sol = solve_leg(leg, t0, config, v_minus)
            _PREFIX_CACHE[key] = sol
        solutions.append(sol)
        if not sol.feasible:
            return IndividualResult(
                fitness=_penalty_fitness(config, sol.max_violation),
                feasible=False, legs=solutions, sequence=sequence,
                max_violation=sol.max_violation)
        t0 = sol.t0_days + sol.T_days
        v_minus = sol.terminal_v
    total_t = sum(days_to_tu(s.T_days) for s in solutions)
    total_dv = sum(s.dv for s in solutions)
    return IndividualResult(fitness=(total_t, total_dv), feasible=True,
                            legs=solutions, sequence=sequence)


# ---------------------------------------------------------------------------
# non-dominated sorting
# ---------------------------------------------------------------------------
def nondominated_sort(fitnesses: Sequence[tuple[float, float]]):
    """NSGA-II fronts and crowding distances (minimization).

    Returns (ranks, crowding, fronts): rank 0 is the non-dominated front.
    """
    n = len(fitnesses)
    f = np.asarray(fitnesses, dtype=float).reshape(n, 2) if n else np.zeros((0, 2))
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    dom_count = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            le_ij = f[i, 0] <= f[j, 0] and f[i, 1] <= f[j, 1]
            lt_ij = f[i, 0] < f[j, 0] or f[i, 1] < f[j, 1]
            le_ji = f[j, 0] <= f[i, 0] and f[j, 1] <= f[i, 1]
            lt_ji = f[j, 0] < f[i, 0] or f[j, 1] < f[i, 1]
            if le_ij and lt_ij:
                dominated_by[i].append(j)
                dom_count[j] += 1
            elif le_ji and lt_ji:
                dominated_by[j].append(i)
                dom_count[i] += 1
    ranks = np.full(n, -1, dtype=int)
    fronts: list[list[int]] = []
    current = [i for i in range(n) if dom_count[i] == 0]
    rank = 0
    while current:
        fronts.append(current)
        for i in current:
            ranks[i] = rank
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                dom_count[j] -= 1
                if dom_count[j] == 0:
                    nxt.append(j)
        current = nxt
        rank += 1

    crowding = np.zeros(n)
    for front in fronts:
        if len(front) <= 2:
            for i in front:
                crowding[i] = math.inf
            continue
        idx = np.asarray(front)
        for m in range(2):
            order = idx[np.argsort(f[idx, m], kind="stable")]
            span = f[order[-1], m] - f[order[0], m]
            crowding[order[0]] = math.inf
            crowding[order[-1]] = math.inf
            if span <= 0.0:
                continue
            for a in range(1, len(order) - 1):
                crowding[order[a]] += (f[order[a + 1], m]
                                       - f[order[a - 1], m]) / span
    return ranks, crowding, fronts


# ---------------------------------------------------------------------------
# Pareto output
# ---------------------------------------------------------------------------
@dataclass
class ParetoSolution:
    solution_id: int
    sequence: tuple[str, ...]
    tof_days: float
    dv_kms: float
    fuel_fraction: float
    event_dates: tuple[float, ...]       # days past J2000: launch..arrival
    legs: list[LegSolution]
    chromosome: Chromosome


@dataclass
class ParetoSet:
    solutions: list[ParetoSolution]
    seed: int
    config: MissionConfig

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)


def _chromosome_from_genes(genes, config) -> Chromosome:
    return genes


class _Evaluator:
    """Picklable chromosome evaluator for worker pools."""

    def __init__(self, config: MissionConfig):
        self.config = config

    def __call__(self, chromo: Chromosome):
        res = evaluate_individual(chromo, self.config)
        return res


def _random_chromosome(rng: np.random.Generator,
                       config: MissionConfig) -> Chromosome:
    t0 = float(rng.uniform(config.t0_min, config.t0_max))
    slots = []
    n_bodies = len(config.flyby_bodies)
    for _ in range(config.n_fb_max):
        body = int(rng.integers(-1, n_bodies))
        slots.append((body if body >= 0 else NULL_GENE,
                      float(rng.uniform(config.leg_time_min,
                                        config.leg_time_max))))
    t_final = float(rng.uniform(config.leg_time_min, config.leg_time_max))
    return Chromosome(t0=t0, slots=tuple(slots), t_final=t_final)


def _crossover(a: Chromosome, b: Chromosome,
               rng: np.random.Generator) -> Chromosome:
    """Uniform crossover: each gene drawn from either parent."""
    pick = lambda x, y: x if rng.random() < 0.5 else y
    slots = tuple(
        (pick(sa[0], sb[0]), pick(sa[1], sb[1]))
        for sa, sb in zip(a.slots, b.slots))
    return Chromosome(t0=pick(a.t0, b.t0), slots=slots,
                      t_final=pick(a.t_final, b.t_final))


def _mutate(c: Chromosome, rate: float, rng: np.random.Generator,
            config: MissionConfig) -> Chromosome:
    n_bodies = len(config.flyby_bodies)
    t0 = c.t0
    if rng.random() < rate:
        t0 = float(rng.uniform(config.t0_min, config.t0_max))
    slots = []
    for body, tg in c.slots:
        if rng.random() < rate:
            body = int(rng.integers(-1, n_bodies))
            body = body if body >= 0 else NULL_GENE
        if rng.random() < rate:
            tg = float(rng.uniform(config.leg_time_min, config.leg_time_max))
        slots.append((body, tg))
    t_final = c.t_final
    if rng.random() < rate:
        t_final = float(rng.uniform(config.leg_time_min, config.leg_time_max))
    return Chromosome(t0=t0, slots=tuple(slots), t_final=t_final)


def _tournament(rng, ranks, crowding, k=2) -> int:
    n = len(ranks)
    best = int(rng.integers(0, n))
    for _ in range(k - 1):
        challenger = int(rng.integers(0, n))
        if (ranks[challenger] < ranks[best]
                or (ranks[challenger] == ranks[best]
                    and crowding[challenger] > crowding[best])):
            best = challenger
    return best


def run_global_search(config: MissionConfig, options: GaOptions,
                      progress=None) -> ParetoSet:
    """Elitist NSGA-II over chromosomes; deterministic given the seed.

    Population evaluation may fan out over worker processes; results are
    independent of the worker count because every fitness is a pure
    function of (chromosome, config) and all randomness stays in the
    master's seeded generator.
    """
    evaluator = _Evaluator(config)
    cache: dict = {}
    pool = None
    if options.threads > 1:
        pool = multiprocessing.get_context("fork").Pool(options.threads)

    def evaluate_all(chromos: list[Chromosome]):
        missing = []
        seen = set()
        for ch in chromos:
            k = ch.key()
            if k not in cache and k not in seen:
                seen.add(k)
                missing.append(ch)
        if missing:
            if pool is not None:
                results = pool.map(evaluator, missing,
                                   chunksize=max(1, len(missing) // (4 * options.threads)))
            else:
                results = [evaluator(ch) for ch in missing]
            for ch, res in zip(missing, results):
                cache[ch.key()] = res
        return [cache[ch.key()] for ch in chromos]

    try:
        rng = np.random.default_rng([options.seed, 0x5347])
        pop = [_random_chromosome(rng, config) for _ in range(options.population)]
        results = evaluate_all(pop)
        fits = [r.fitness for r in results]
        ranks, crowding, _ = nondominated_sort(fits)
        rate = options.mutation_rate
        if rate is None:
            rate = 1.0 / pop[0].gene_count()

        for gen in range(1, options.generations + 1):
            rng_gen = np.random.default_rng([options.seed, gen])
            offspring = []
            for _ in range(options.population):
                p1 = pop[_tournament(rng_gen, ranks, crowding)]
                p2 = pop[_tournament(rng_gen, ranks, crowding)]
                child = (_crossover(p1, p2, rng_gen)
                         if rng_gen.random() < options.crossover_rate else p1)
                child = _mutate(child, rate, rng_gen, config)
                offspring.append(child)
            off_results = evaluate_all(offspring)

            combined = pop + offspring
            comb_results = results + off_results
            comb_fits = [r.fitness for r in comb_results]
            c_ranks, c_crowd, fronts = nondominated_sort(comb_fits)
            new_idx: list[int] = []
            for front in fronts:
                if len(new_idx) + len(front) <= options.population:
                    new_idx.extend(front)
                else:
                    rest = sorted(front, key=lambda i: -c_crowd[i])
                    new_idx.extend(rest[:options.population - len(new_idx)])
                    break
            pop = [combined[i] for i in new_idx]
            results = [comb_results[i] for i in new_idx]
            fits = [r.fitness for r in results]
            ranks, crowding, _ = nondominated_sort(fits)
            if progress is not None:
                n_feas = sum(1 for r in results if r.feasible)
                best_dv = min((r.dv_kms for r in results if r.feasible),
                              default=math.nan)
                progress(gen, n_feas, best_dv)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    # final non-dominated, feasible-only front
    feas_idx = [i for i, r in enumerate(results) if r.feasible]
    feas_fits = [results[i].fitness for i in feas_idx]
    solutions: list[ParetoSolution] = []
    if feas_idx:
        f_ranks, _, _ = nondominated_sort(feas_fits)
        chosen = [feas_idx[i] for i in range(len(feas_idx)) if f_ranks[i] == 0]
        # drop exact-duplicate fitness pairs
        uniq: dict = {}
        for i in chosen:
            uniq.setdefault(results[i].fitness, i)
        order = sorted(uniq.values(), key=lambda i: results[i].fitness[0])
        for sid, i in enumerate(order):
            r = results[i]
            dates = [r.legs[0].t0_days]
            for leg in r.legs:
                dates.append(leg.t0_days + leg.T_days)
            solutions.append(ParetoSolution(
                solution_id=sid, sequence=r.sequence,
                tof_days=r.tof_days, dv_kms=r.dv_kms,
                fuel_fraction=propellant_fraction(r.dv_kms, config.isp),
                event_dates=tuple(dates), legs=r.legs, chromosome=pop[i]))
    return ParetoSet(solutions=solutions, seed=options.seed, config=config)


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------
def pareto_to_csv(pareto: ParetoSet, path) -> None:
    lines = ["tof_days,dv_kms,fuel_fraction,sequence,dates"]
    for sol in pareto.solutions:
        seq = "-".join(sol.sequence)
        dates = "|".join(format_epoch(d) for d in sol.event_dates)
        lines.append(f"{sol.tof_days:.6f},{sol.dv_kms:.6f},"
                     f"{sol.fuel_fraction:.6f},{seq},{dates}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _leg_to_dict(leg: LegSolution, spec_like: dict) -> dict:
    d = {
        "t0_days": leg.t0_days,
        "T_days": leg.T_days,
        "dv_kms": leg.dv_kms,
        "dv1": vu_to_kms(leg.dv1),
        "dv2": vu_to_kms(leg.dv2),
        "theta_total": leg.theta_total,
        "max_violation": leg.max_violation,
        "vinf_dep_kms": leg.vinf_dep_kms,
        "terminal_r": list(map(float, leg.terminal_r)),
        "terminal_v": list(map(float, leg.terminal_v)),
        "variables": asdict(leg.variables),
    }
    d.update(spec_like)
    return d


def pareto_to_json(pareto: ParetoSet, path) -> None:
    config = pareto.config
    payload = {
        "schema": "spiralmga/pareto-v1",
        "seed": pareto.seed,
        "mission": {
            "type": config.mission_type,
            "departure": config.departure.name,
            "arrival": config.arrival.name,
            "isp": config.isp,
            "vinf_max_kms": config.vinf_max,
        },
        "solutions": [],
    }
    for sol in pareto.solutions:
        legs = decode_chromosome(sol.chromosome, config)
        leg_dicts = []
        for spec, leg in zip(legs, sol.legs):
            leg_dicts.append(_leg_to_dict(leg, {
                "dep": spec.dep.name, "arr": spec.arr.name,
                "event1": spec.event1, "event2": spec.event2,
            }))
        payload["solutions"].append({
            "id": sol.solution_id,
            "sequence": list(sol.sequence),
            "tof_days": sol.tof_days,
            "dv_kms": sol.dv_kms,
            "fuel_fraction": sol.fuel_fraction,
            "event_dates_days": list(sol.event_dates),
            "event_dates": [format_epoch(d) for d in sol.event_dates],
            "legs": leg_dicts,
        })
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_pareto_json(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema") != "spiralmga/pareto-v1":
        raise ValueError("not a step-1 solution file")
    return payload
