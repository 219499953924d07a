from collections import Counter
from collections.abc import Callable, Iterable
from dataclasses import dataclass, replace

import numpy as np

from src.problem.catalog import (
    REPEATABLE_SLOTS,
    REQUIRED_SLOTS,
    CatalogEntry,
    CatalogError,
    CatalogKind,
    NodalFunction,
    Slot,
    TerminalFunctional,
    build_diffusion,
    build_initial_state,
    build_mixed_constraint,
    build_nonlinearity,
    build_running_cost,
    build_terminal,
)


@dataclass(frozen=True, slots=True)
class ProblemSpec:
    """The continuous time-optimal control problem as immutable data."""

    spatial_dim: int
    domain_extent: tuple[float, ...]
    entries: tuple[CatalogEntry, ...]
    bounds: tuple[float, float]
    horizon: tuple[float, float]
    y0: Callable[[np.ndarray], np.ndarray]
    psi: NodalFunction
    running_cost: NodalFunction
    mixed_constraint: NodalFunction
    terminal_cost: TerminalFunctional
    terminal_constraints: tuple[TerminalFunctional, ...]
    diffusion: tuple[tuple[float, ...], ...]

    @property
    def a(self) -> float:
        return self.bounds[0]

    @property
    def b(self) -> float:
        return self.bounds[1]

    @property
    def T_lo(self) -> float:
        return self.horizon[0]

    @property
    def T_hi(self) -> float:
        return self.horizon[1]

    @property
    def horizon_fixed(self) -> bool:
        return self.horizon[0] == self.horizon[1]

    @property
    def m(self) -> int:
        return len(self.terminal_constraints)

    @property
    def g_is_identity(self) -> bool:
        return self.entry_for(Slot.MIXED_CONSTRAINT).kind is CatalogKind.G_IDENTITY

    def entry_for(self, slot: Slot) -> CatalogEntry | None:
        for entry in self.entries:
            if entry.slot is slot:
                return entry
        return None

    def with_bounds(self, a: float, b: float) -> "ProblemSpec":
        return build_problem(
            self.entries, spatial_dim=self.spatial_dim, domain_extent=self.domain_extent, bounds=(a, b), horizon=self.horizon
        )

    def with_horizon(self, lo: float, hi: float) -> "ProblemSpec":
        _validate_horizon((lo, hi))
        return replace(self, horizon=(float(lo), float(hi)))


def _validate_horizon(horizon: tuple[float, float]) -> None:
    lo, hi = horizon
    if not lo > 0.0:
        raise CatalogError(f"horizon lower end must be > 0, got {lo}")
    if lo > hi:
        raise CatalogError(f"horizon bracket is empty: lo={lo} > hi={hi}")


def build_problem(
    entries: Iterable[CatalogEntry],
    *,
    spatial_dim: int = 1,
    domain_extent: tuple[float, ...] | None = None,
    bounds: tuple[float, float] = (-1.0, 1.0),
    horizon: tuple[float, float] = (0.1, 2.0),
) -> ProblemSpec:
    entries = tuple(entries)
    if spatial_dim not in (1, 2):
        raise CatalogError(f"spatial_dim must be 1 or 2, got {spatial_dim}")
    extent = tuple(float(v) for v in (domain_extent or (1.0,) * spatial_dim))
    if len(extent) != spatial_dim or any(v <= 0.0 for v in extent):
        raise CatalogError(f"domain_extent must hold {spatial_dim} positive lengths, got {extent}")
    a, b = float(bounds[0]), float(bounds[1])
    if not a < b:
        raise CatalogError(f"bounds require a < b, got a={a}, b={b}")
    horizon = (float(horizon[0]), float(horizon[1]))
    _validate_horizon(horizon)

    counts = Counter(entry.slot for entry in entries)
    missing = sorted(slot.value for slot in REQUIRED_SLOTS if counts[slot] == 0)
    if missing:
        raise CatalogError(f"missing required slot(s): {', '.join(missing)}")
    duplicated = sorted(slot.value for slot, n in counts.items() if n > 1 and slot not in REPEATABLE_SLOTS)
    if duplicated:
        raise CatalogError(f"slot(s) given more than once: {', '.join(duplicated)}")

    by_slot = {entry.slot: entry for entry in entries if entry.slot not in REPEATABLE_SLOTS}
    terminal_cost_entry = by_slot.get(Slot.TERMINAL_COST) or CatalogEntry.create(CatalogKind.TERMINAL_ZERO)

    return ProblemSpec(
        spatial_dim=spatial_dim,
        domain_extent=extent,
        entries=entries,
        bounds=(a, b),
        horizon=horizon,
        y0=build_initial_state(by_slot.get(Slot.INITIAL_STATE), extent),
        psi=build_nonlinearity(by_slot[Slot.NONLINEARITY]),
        running_cost=build_running_cost(by_slot[Slot.RUNNING_COST], extent),
        mixed_constraint=build_mixed_constraint(by_slot[Slot.MIXED_CONSTRAINT]),
        terminal_cost=build_terminal(terminal_cost_entry),
        terminal_constraints=tuple(build_terminal(e) for e in entries if e.slot is Slot.TERMINAL_CONSTRAINT),
        diffusion=build_diffusion(by_slot.get(Slot.DIFFUSION), spatial_dim),
    )
