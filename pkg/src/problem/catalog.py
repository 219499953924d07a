"""Named, parameterized ingredients from which problem specs are assembled."""

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np


class CatalogError(ValueError):
    """Raised for unknown kinds, bad parameters, or slot misuse."""


class Slot(str, Enum):
    NONLINEARITY = "nonlinearity"
    RUNNING_COST = "running_cost"
    MIXED_CONSTRAINT = "mixed_constraint"
    TERMINAL_COST = "terminal_cost"
    TERMINAL_CONSTRAINT = "terminal_constraint"
    INITIAL_STATE = "initial_state"
    DIFFUSION = "diffusion"


REQUIRED_SLOTS = frozenset({Slot.NONLINEARITY, Slot.RUNNING_COST, Slot.MIXED_CONSTRAINT})
REPEATABLE_SLOTS = frozenset({Slot.TERMINAL_CONSTRAINT})


class CatalogKind(str, Enum):
    PSI_ZERO = "psi-zero"
    PSI_LINEAR = "psi-linear"
    PSI_CUBIC = "psi-cubic"
    PSI_TIME_LINEAR = "psi-time-linear"
    COST_TRACKING_QUADRATIC = "cost-tracking-quadratic"
    COST_TIME = "cost-time"
    COST_CONTROL_SADDLE = "cost-control-saddle"
    G_IDENTITY = "g-identity"
    G_EXAMPLE31 = "g-example31"
    TERMINAL_ZERO = "terminal-zero"
    TERMINAL_TIME_ENERGY = "terminal-time-energy"
    TERMINAL_NORM_BALL = "terminal-norm-ball"
    TERMINAL_EXAMPLE31 = "terminal-example31"
    INIT_ZERO = "init-zero"
    INIT_SINE = "init-sine"
    DIFFUSION_ISOTROPIC = "diffusion-isotropic"
    DIFFUSION_ANISOTROPIC = "diffusion-anisotropic"


KIND_SLOTS: dict[CatalogKind, Slot] = {
    CatalogKind.PSI_ZERO: Slot.NONLINEARITY,
    CatalogKind.PSI_LINEAR: Slot.NONLINEARITY,
    CatalogKind.PSI_CUBIC: Slot.NONLINEARITY,
    CatalogKind.PSI_TIME_LINEAR: Slot.NONLINEARITY,
    CatalogKind.COST_TRACKING_QUADRATIC: Slot.RUNNING_COST,
    CatalogKind.COST_TIME: Slot.RUNNING_COST,
    CatalogKind.COST_CONTROL_SADDLE: Slot.RUNNING_COST,
    CatalogKind.G_IDENTITY: Slot.MIXED_CONSTRAINT,
    CatalogKind.G_EXAMPLE31: Slot.MIXED_CONSTRAINT,
    CatalogKind.TERMINAL_ZERO: Slot.TERMINAL_COST,
    CatalogKind.TERMINAL_TIME_ENERGY: Slot.TERMINAL_COST,
    CatalogKind.TERMINAL_NORM_BALL: Slot.TERMINAL_CONSTRAINT,
    CatalogKind.TERMINAL_EXAMPLE31: Slot.TERMINAL_CONSTRAINT,
    CatalogKind.INIT_ZERO: Slot.INITIAL_STATE,
    CatalogKind.INIT_SINE: Slot.INITIAL_STATE,
    CatalogKind.DIFFUSION_ISOTROPIC: Slot.DIFFUSION,
    CatalogKind.DIFFUSION_ANISOTROPIC: Slot.DIFFUSION,
}


@dataclass(frozen=True, slots=True)
class ParameterRule:
    default: float
    minimum: float = -math.inf
    maximum: float = math.inf
    integer: bool = False
    strict_minimum: bool = False


KIND_PARAMETERS: dict[CatalogKind, dict[str, ParameterRule]] = {
    CatalogKind.PSI_ZERO: {},
    CatalogKind.PSI_LINEAR: {"coef": ParameterRule(1.0)},
    CatalogKind.PSI_CUBIC: {"coef": ParameterRule(1.0, minimum=0.0)},
    CatalogKind.PSI_TIME_LINEAR: {"rate": ParameterRule(1.0, minimum=0.0)},
    CatalogKind.COST_TRACKING_QUADRATIC: {
        "alpha": ParameterRule(1.0, minimum=0.0),
        "beta": ParameterRule(0.1, minimum=0.0),
        "gamma": ParameterRule(0.0),
        "target_amplitude": ParameterRule(0.0),
        "target_decay": ParameterRule(0.0),
        "control_target": ParameterRule(0.0),
    },
    CatalogKind.COST_TIME: {"gamma": ParameterRule(1.0), "drift": ParameterRule(0.0)},
    CatalogKind.COST_CONTROL_SADDLE: {
        "alpha": ParameterRule(1.0, minimum=0.0),
        "beta": ParameterRule(1.0, minimum=0.0, strict_minimum=True),
    },
    CatalogKind.G_IDENTITY: {},
    CatalogKind.G_EXAMPLE31: {},
    CatalogKind.TERMINAL_ZERO: {},
    CatalogKind.TERMINAL_TIME_ENERGY: {
        "time_weight": ParameterRule(1.0),
        "state_weight": ParameterRule(1.0, minimum=0.0),
        "offset": ParameterRule(0.0),
    },
    CatalogKind.TERMINAL_NORM_BALL: {"radius": ParameterRule(0.01, minimum=0.0, strict_minimum=True)},
    CatalogKind.TERMINAL_EXAMPLE31: {"index": ParameterRule(1.0, minimum=1.0, integer=True)},
    CatalogKind.INIT_ZERO: {},
    CatalogKind.INIT_SINE: {"amplitude": ParameterRule(1.0)},
    CatalogKind.DIFFUSION_ISOTROPIC: {"coef": ParameterRule(1.0, minimum=0.0, strict_minimum=True)},
    CatalogKind.DIFFUSION_ANISOTROPIC: {
        "a11": ParameterRule(1.0),
        "a22": ParameterRule(1.0),
        "a12": ParameterRule(0.0),
    },
}


@dataclass(frozen=True, slots=True)
class CatalogEntry:
    """One catalog selection; parameters are stored sorted for deterministic comparison."""

    kind: CatalogKind
    parameters: tuple[tuple[str, float], ...] = ()

    @classmethod
    def create(cls, kind: CatalogKind | str, **params: Any) -> "CatalogEntry":
        try:
            kind = CatalogKind(kind)
        except ValueError as exc:
            raise CatalogError(f"Unknown catalog kind: {kind}") from exc

        rules = KIND_PARAMETERS[kind]
        unknown = sorted(set(params) - set(rules))
        if unknown:
            raise CatalogError(f"{kind.value}: unknown parameter(s) {', '.join(unknown)}")

        stored: list[tuple[str, float]] = []
        for name, rule in rules.items():
            raw = params.get(name, rule.default)
            value = _validate_parameter(kind, name, raw, rule)
            stored.append((name, value))
        return cls(kind=kind, parameters=tuple(sorted(stored)))

    @property
    def slot(self) -> Slot:
        return KIND_SLOTS[self.kind]

    def param(self, name: str) -> float:
        for key, value in self.parameters:
            if key == name:
                return value
        raise CatalogError(f"{self.kind.value} has no parameter {name}")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(self.parameters)}


def _validate_parameter(kind: CatalogKind, name: str, raw: Any, rule: ParameterRule) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError) as exc:
        raise CatalogError(f"{kind.value}.{name} must be numeric, got {raw!r}") from exc
    if not math.isfinite(value):
        raise CatalogError(f"{kind.value}.{name} must be finite")
    if rule.integer and not value.is_integer():
        raise CatalogError(f"{kind.value}.{name} must be an integer, got {value}")
    if value < rule.minimum or (rule.strict_minimum and value <= rule.minimum):
        bound = ">" if rule.strict_minimum else ">="
        raise CatalogError(f"{kind.value}.{name} must be {bound} {rule.minimum}, got {value}")
    if value > rule.maximum:
        raise CatalogError(f"{kind.value}.{name} must be <= {rule.maximum}, got {value}")
    return value


RUNNING_PARTIALS = ("value", "t", "y", "u", "tt", "ty", "tu", "yy", "yu", "uu")
TERMINAL_PARTIALS = ("value", "T", "z", "TT", "Tz", "zz")
_ORDER = {"t": 0, "y": 1, "u": 2}


def canonical_partial(partial: str) -> str:
    if partial == "value":
        return partial
    if any(char not in _ORDER for char in partial) or not 1 <= len(partial) <= 2:
        raise CatalogError(f"Unknown partial derivative: {partial}")
    return "".join(sorted(partial, key=_ORDER.__getitem__))


NodalTerm = Callable[[np.ndarray, Any, Any, Any], Any]


@dataclass(frozen=True, slots=True)
class NodalFunction:
    """Pointwise function of (x, t, y, u) with analytic partials; missing partials vanish."""

    name: str
    terms: Mapping[str, NodalTerm]

    def __call__(self, partial: str, x: np.ndarray, t: Any, y: Any, u: Any = 0.0) -> np.ndarray:
        key = canonical_partial(partial)
        shape = np.broadcast_shapes(np.shape(t), np.shape(y), np.shape(u))
        term = self.terms.get(key)
        if term is None:
            return np.zeros(shape)
        result = np.asarray(term(x, t, y, u), dtype=float)
        return np.array(np.broadcast_to(result, np.broadcast_shapes(result.shape, shape)))

    def has(self, partial: str) -> bool:
        return canonical_partial(partial) in self.terms


@dataclass(frozen=True, slots=True)
class TerminalFunctional:
    """c(T) + ∫ f(T, ζ(x)) dx evaluated with the interior quadrature weight."""

    name: str
    time_terms: Mapping[str, Callable[[float], float]]
    integrand: Mapping[str, Callable[[float, np.ndarray], Any]]

    def time_part(self, partial: str, T: float) -> float:
        term = self.time_terms.get(partial)
        return 0.0 if term is None else float(term(T))

    def density(self, partial: str, T: float, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        term = self.integrand.get(partial)
        if term is None:
            return np.zeros_like(z)
        return np.array(np.broadcast_to(np.asarray(term(T, z), dtype=float), z.shape))

    def value(self, T: float, z: np.ndarray, weight: float) -> float:
        return self.time_part("value", T) + weight * float(np.sum(self.density("value", T, z)))

    def d_T(self, T: float, z: np.ndarray, weight: float) -> float:
        return self.time_part("T", T) + weight * float(np.sum(self.density("T", T, z)))

    def d_TT(self, T: float, z: np.ndarray, weight: float) -> float:
        return self.time_part("TT", T) + weight * float(np.sum(self.density("TT", T, z)))

    def d_zeta(self, T: float, z: np.ndarray) -> np.ndarray:
        return self.density("z", T, z)

    def d_Tzeta(self, T: float, z: np.ndarray) -> np.ndarray:
        return self.density("Tz", T, z)

    def d_zetazeta(self, T: float, z: np.ndarray) -> np.ndarray:
        return self.density("zz", T, z)


def sine_profile(x: np.ndarray, extent: tuple[float, ...]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.prod(np.sin(np.pi * x / np.asarray(extent, dtype=float)), axis=-1)


def build_nonlinearity(entry: CatalogEntry) -> NodalFunction:
    if entry.kind is CatalogKind.PSI_ZERO:
        return NodalFunction(entry.kind.value, {})
    if entry.kind is CatalogKind.PSI_LINEAR:
        c = entry.param("coef")
        return NodalFunction(entry.kind.value, {"value": lambda x, t, y, u: c * y, "y": lambda x, t, y, u: c})
    if entry.kind is CatalogKind.PSI_CUBIC:
        c = entry.param("coef")
        return NodalFunction(
            entry.kind.value,
            {
                "value": lambda x, t, y, u: c * y**3,
                "y": lambda x, t, y, u: 3.0 * c * y**2,
                "yy": lambda x, t, y, u: 6.0 * c * y,
            },
        )
    if entry.kind is CatalogKind.PSI_TIME_LINEAR:
        k = entry.param("rate")
        return NodalFunction(
            entry.kind.value,
            {
                "value": lambda x, t, y, u: k * t * y,
                "t": lambda x, t, y, u: k * y,
                "y": lambda x, t, y, u: k * t,
                "ty": lambda x, t, y, u: k,
            },
        )
    raise CatalogError(f"{entry.kind.value} is not a nonlinearity")


def build_running_cost(entry: CatalogEntry, extent: tuple[float, ...]) -> NodalFunction:
    if entry.kind is CatalogKind.COST_TRACKING_QUADRATIC:
        alpha, beta, gamma = entry.param("alpha"), entry.param("beta"), entry.param("gamma")
        amp, rate, u_d = entry.param("target_amplitude"), entry.param("target_decay"), entry.param("control_target")

        def target(x: np.ndarray, t: Any) -> Any:
            return amp * sine_profile(x, extent) * np.exp(-rate * np.asarray(t, dtype=float))

        return NodalFunction(
            entry.kind.value,
            {
                "value": lambda x, t, y, u: 0.5 * alpha * (y - target(x, t)) ** 2 + 0.5 * beta * (u - u_d) ** 2 + gamma,
                "t": lambda x, t, y, u: alpha * rate * (y - target(x, t)) * target(x, t),
                "y": lambda x, t, y, u: alpha * (y - target(x, t)),
                "u": lambda x, t, y, u: beta * (u - u_d),
                "tt": lambda x, t, y, u: alpha * rate**2 * target(x, t) * (2.0 * target(x, t) - y),
                "ty": lambda x, t, y, u: alpha * rate * target(x, t),
                "yy": lambda x, t, y, u: alpha,
                "uu": lambda x, t, y, u: beta,
            },
        )
    if entry.kind is CatalogKind.COST_TIME:
        gamma, drift = entry.param("gamma"), entry.param("drift")
        return NodalFunction(
            entry.kind.value,
            {"value": lambda x, t, y, u: gamma + drift * t, "t": lambda x, t, y, u: drift},
        )
    if entry.kind is CatalogKind.COST_CONTROL_SADDLE:
        alpha, beta = entry.param("alpha"), entry.param("beta")
        return NodalFunction(
            entry.kind.value,
            {
                "value": lambda x, t, y, u: 0.5 * alpha * y**2 - 0.5 * beta * u**2,
                "y": lambda x, t, y, u: alpha * y,
                "u": lambda x, t, y, u: -beta * u,
                "yy": lambda x, t, y, u: alpha,
                "uu": lambda x, t, y, u: -beta,
            },
        )
    raise CatalogError(f"{entry.kind.value} is not a running cost")


def build_mixed_constraint(entry: CatalogEntry) -> NodalFunction:
    if entry.kind is CatalogKind.G_IDENTITY:
        return NodalFunction(entry.kind.value, {"value": lambda x, t, y, u: u, "u": lambda x, t, y, u: 1.0})
    if entry.kind is CatalogKind.G_EXAMPLE31:
        return NodalFunction(
            entry.kind.value,
            {
                "value": lambda x, t, y, u: -(u**3) - u * (y**2 + 1.0),
                "y": lambda x, t, y, u: -2.0 * u * y,
                "u": lambda x, t, y, u: -3.0 * u**2 - y**2 - 1.0,
                "yy": lambda x, t, y, u: -2.0 * u,
                "yu": lambda x, t, y, u: -2.0 * y,
                "uu": lambda x, t, y, u: -6.0 * u,
            },
        )
    raise CatalogError(f"{entry.kind.value} is not a mixed constraint")


def build_terminal(entry: CatalogEntry) -> TerminalFunctional:
    if entry.kind is CatalogKind.TERMINAL_ZERO:
        return TerminalFunctional(entry.kind.value, {}, {})
    if entry.kind is CatalogKind.TERMINAL_TIME_ENERGY:
        c_t, sigma, offset = entry.param("time_weight"), entry.param("state_weight"), entry.param("offset")
        return TerminalFunctional(
            entry.kind.value,
            {"value": lambda T: c_t * T + offset, "T": lambda T: c_t},
            {"value": lambda T, z: 0.5 * sigma * z**2, "z": lambda T, z: sigma * z, "zz": lambda T, z: sigma},
        )
    if entry.kind is CatalogKind.TERMINAL_NORM_BALL:
        eps = entry.param("radius")
        return TerminalFunctional(
            entry.kind.value,
            {"value": lambda T: -eps},
            {"value": lambda T, z: 0.5 * z**2, "z": lambda T, z: z, "zz": lambda T, z: 1.0},
        )
    if entry.kind is CatalogKind.TERMINAL_EXAMPLE31:
        p = 2 * int(entry.param("index")) + 1
        return TerminalFunctional(
            f"{entry.kind.value}[{int(entry.param('index'))}]",
            {},
            {
                "value": lambda T, z: -(T**2) * (z**p + 1.0),
                "T": lambda T, z: -2.0 * T * (z**p + 1.0),
                "z": lambda T, z: -(T**2) * p * z ** (p - 1),
                "TT": lambda T, z: -2.0 * (z**p + 1.0),
                "Tz": lambda T, z: -2.0 * T * p * z ** (p - 1),
                "zz": lambda T, z: -(T**2) * p * (p - 1) * z ** (p - 2),
            },
        )
    raise CatalogError(f"{entry.kind.value} is not a terminal functional")


def build_initial_state(entry: CatalogEntry | None, extent: tuple[float, ...]) -> Callable[[np.ndarray], np.ndarray]:
    if entry is None or entry.kind is CatalogKind.INIT_ZERO:
        return lambda x: np.zeros(np.shape(x)[0])
    if entry.kind is CatalogKind.INIT_SINE:
        amplitude = entry.param("amplitude")
        return lambda x: amplitude * sine_profile(x, extent)
    raise CatalogError(f"{entry.kind.value} is not an initial state")


def build_diffusion(entry: CatalogEntry | None, spatial_dim: int) -> tuple[tuple[float, ...], ...]:
    if entry is None:
        return tuple(tuple(1.0 if i == j else 0.0 for j in range(spatial_dim)) for i in range(spatial_dim))
    if entry.kind is CatalogKind.DIFFUSION_ISOTROPIC:
        c = entry.param("coef")
        return tuple(tuple(c if i == j else 0.0 for j in range(spatial_dim)) for i in range(spatial_dim))
    if entry.kind is CatalogKind.DIFFUSION_ANISOTROPIC:
        if spatial_dim != 2:
            raise CatalogError("diffusion-anisotropic requires spatial_dim = 2")
        a12 = entry.param("a12")
        return ((entry.param("a11"), a12), (a12, entry.param("a22")))
    raise CatalogError(f"{entry.kind.value} is not a diffusion law")
