"""Low-energy state search for QUBO/Ising models.

Two solvers share the :class:`SampleSet` result type: a seeded simulated
annealer (the workhorse) and an exhaustive enumerator that serves as the
exact oracle at small sizes.

Reproducibility contract: the random stream is numpy's PCG64. Restart r
draws from ``PCG64(seed).jumped(r)``, so the first r restarts are
identical no matter how many run in total, and parallel or serial
execution merges to the same SampleSet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError
from .model import (
    IsingModel,
    LinearConstraint,
    QuboModel,
    ising_to_qubo,
    quadratic_symmetric,
    qubo_energies,
)

EXHAUSTIVE_CAP = 24
_ENUM_CHUNK = 1 << 18


@dataclass(frozen=True)
class AnnealSchedule:
    """Cooling schedule for :func:`simulated_anneal`.

    ``t_initial=None`` resolves per model to (max coefficient magnitude * n),
    floored at 10x ``t_final`` so the schedule stays valid for near-zero
    models. One sweep is one Metropolis flip attempt per variable, in index
    order.
    """

    t_initial: float | None = None
    t_final: float = 1e-3
    sweeps: int = 1000
    restarts: int = 32
    interpolation: str = "geometric"

    def __post_init__(self):
        if self.t_initial is not None and not self.t_initial > 0:
            raise InputError(f"t_initial must be positive, got {self.t_initial}")
        if not self.t_final > 0:
            raise InputError(f"t_final must be positive, got {self.t_final}")
        if self.t_initial is not None and self.t_final >= self.t_initial:
            raise InputError("t_final must be below t_initial")
        if self.sweeps < 1 or self.restarts < 1:
            raise InputError("sweeps and restarts must be at least 1")
        if self.interpolation not in ("geometric", "linear"):
            raise InputError(f"unknown interpolation {self.interpolation!r}")

    def resolve_t_initial(self, model: QuboModel | IsingModel) -> float:
        if self.t_initial is not None:
            return self.t_initial
        return max(model.max_coefficient() * model.n, 10.0 * self.t_final)

    def temperatures(self, t0: float) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([t0])
        frac = np.arange(self.sweeps) / (self.sweeps - 1)
        if self.interpolation == "geometric":
            return t0 * (self.t_final / t0) ** frac
        return t0 + (self.t_final - t0) * frac

    def to_dict(self) -> dict:
        return {
            "t_initial": self.t_initial,
            "t_final": self.t_final,
            "sweeps": self.sweeps,
            "restarts": self.restarts,
            "interpolation": self.interpolation,
        }


class SampleRecord(NamedTuple):
    state: str
    energy: float
    count: int


@dataclass(frozen=True)
class SampleSet:
    """Candidate solutions sorted by (energy, state); ties break lexicographically."""

    records: tuple[SampleRecord, ...]
    seed: int | None
    model_n: int

    def best(self) -> SampleRecord:
        return self.records[0]

    @property
    def best_energy(self) -> float:
        return self.records[0].energy

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.model_n,
            "samples": [
                {"state": r.state, "energy": r.energy, "count": r.count} for r in self.records
            ],
        }


def state_to_array(state: str) -> np.ndarray:
    return np.array([1.0 if ch == "1" else 0.0 for ch in state])


def _array_to_state(x: np.ndarray) -> str:
    return "".join("1" if v > 0.5 else "0" for v in x)


def _make_sampleset(states, energies, seed, n) -> SampleSet:
    merged: dict[str, tuple[float, int]] = {}
    for s, e in zip(states, energies):
        if s in merged:
            merged[s] = (merged[s][0], merged[s][1] + 1)
        else:
            merged[s] = (float(e), 1)
    records = tuple(
        SampleRecord(s, e, c)
        for s, (e, c) in sorted(merged.items(), key=lambda kv: (kv[1][0], kv[0]))
    )
    return SampleSet(records, seed, n)


def exhaustive_solve(m: QuboModel, top_k: int | None = None) -> SampleSet:
    """Enumerate all 2^n states; exact but capped at n <= 24 variables.

    ``top_k`` keeps only the k lowest-energy states (k >= 1); the minimum
    record is always the true global optimum. Without top_k the SampleSet
    holds every state, which gets heavy past n ~ 20; prefer a truncation
    there.
    """
    if m.n > EXHAUSTIVE_CAP:
        raise InputError(f"exhaustive solve capped at n={EXHAUSTIVE_CAP}, got n={m.n}")
    if top_k is not None and top_k < 1:
        raise InputError("top_k must be at least 1")
    size = 1 << m.n
    bit_cols = np.arange(m.n, dtype=np.uint32)

    best_states: list[np.ndarray] = []
    best_energies: list[np.ndarray] = []
    for lo in range(0, size, _ENUM_CHUNK):
        hi = min(lo + _ENUM_CHUNK, size)
        codes = np.arange(lo, hi, dtype=np.uint32)
        X = ((codes[:, None] >> bit_cols) & 1).astype(float)
        E = qubo_energies(m, X)
        if top_k is not None and hi - lo > top_k:
            idx = np.argpartition(E, top_k - 1)[:top_k]
            best_states.append(X[idx])
            best_energies.append(E[idx])
        else:
            best_states.append(X)
            best_energies.append(E)
    X = np.concatenate(best_states)
    E = np.concatenate(best_energies)
    if top_k is not None and len(E) > top_k:
        idx = np.argpartition(E, top_k - 1)[:top_k]
        X, E = X[idx], E[idx]
    states = [_array_to_state(row) for row in X]
    merged: dict[str, float] = dict(zip(states, (float(e) for e in E)))
    records = tuple(
        SampleRecord(s, e, 1) for s, e in sorted(merged.items(), key=lambda kv: (kv[1], kv[0]))
    )
    return SampleSet(records, None, m.n)


def _restart_bests(
    qm: QuboModel, schedule: AnnealSchedule, seed: int
) -> tuple[list[str], np.ndarray]:
    """Best state per restart, in restart order.

    All restarts run in lockstep (vectorized), each on its own PCG64
    stream; the best-so-far is refreshed at every sweep boundary and
    energies are re-evaluated exactly at the end.
    """
    n, R, S = qm.n, schedule.restarts, schedule.sweeps
    t0 = schedule.resolve_t_initial(qm)
    temps = schedule.temperatures(t0)
    a = qm.linear
    Bsym = quadratic_symmetric(qm)

    X = np.empty((R, n))
    logu = np.empty((R, S * n))
    base = np.random.PCG64(seed)
    for r in range(R):
        gen = np.random.Generator(base.jumped(r))
        X[r] = (gen.random(n) < 0.5).astype(float)
        u = gen.random(S * n)
        with np.errstate(divide="ignore"):
            logu[r] = -np.log(u)

    G = a + X @ Bsym
    E = qubo_energies(qm, X)
    bestX = X.copy()
    bestE = E.copy()

    step = 0
    for s_idx in range(S):
        T = temps[s_idx]
        for i in range(n):
            xi = X[:, i]
            delta = (1.0 - 2.0 * xi) * G[:, i]
            accept = delta < T * logu[:, step]
            step += 1
            if accept.any():
                sgn = np.where(accept, 1.0 - 2.0 * xi, 0.0)
                X[:, i] = xi + sgn
                E += delta * accept
                G += sgn[:, None] * Bsym[i]
        improved = E < bestE
        if improved.any():
            bestE[improved] = E[improved]
            bestX[improved] = X[improved]

    final_E = qubo_energies(qm, bestX)
    return [_array_to_state(row) for row in bestX], final_E


def simulated_anneal(
    m: QuboModel | IsingModel,
    schedule: AnnealSchedule | None = None,
    seed: int = 0,
) -> SampleSet:
    """Seeded single-flip Metropolis annealing.

    Each restart starts from a uniform random state and performs
    ``schedule.sweeps`` sweeps while the temperature interpolates from
    t_initial down to t_final; a move with energy change d is accepted when
    d <= 0, otherwise with probability exp(-d / T). Ising inputs are
    converted to the exact QUBO twin first, so reported energies match the
    source model; states are bitstrings with s = 2x - 1.

    Deterministic: fixed (model, schedule, seed) reproduces the SampleSet
    bit for bit.
    """
    if schedule is None:
        schedule = AnnealSchedule()
    qm = ising_to_qubo(m) if isinstance(m, IsingModel) else m
    if qm.n < 1:
        raise InputError("model must have at least one variable")
    states, energies = _restart_bests(qm, schedule, seed)
    return _make_sampleset(states, energies, seed, qm.n)


def best_feasible(
    s: SampleSet,
    constraints: Sequence[LinearConstraint],
    tolerance: float = 1e-9,
) -> str | None:
    """Lowest-energy record satisfying every constraint, or None.

    Absence of a feasible record is a value, not an error.
    """
    for c in constraints:
        if len(c.coeffs) != s.model_n:
            raise InputError("constraint length does not match sample variable count")
    for rec in s.records:
        x = state_to_array(rec.state)
        if all(c.satisfied_by(x, tolerance) for c in constraints):
            return rec.state
    return None
