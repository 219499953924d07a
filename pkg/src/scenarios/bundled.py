from enum import Enum
from typing import Any

from src.config.settings import get_settings
from src.problem.catalog import CatalogKind
from src.schemas.scenario import (
    BoundsModel,
    BruteForceModel,
    CatalogEntryModel,
    DiscretizationModel,
    HorizonModel,
    MPInstanceFile,
    ScenarioFile,
    SOCConfig,
    SolverConfig,
)


class ScenarioKind(str, Enum):
    LQ_FIXED_T = "lq_fixed_T"
    LQ_FREE_T = "lq_free_T"
    LQ_BETA_ZERO = "lq_beta_zero"
    NORM_REDUCTION = "norm_reduction"
    EXAMPLE31 = "example31"
    ADVERSARIAL_SADDLE = "adversarial_saddle"
    TIME_VARYING = "time_varying"
    CUBIC_2D = "cubic_2d"


def _entry(kind: CatalogKind, **params: float) -> CatalogEntryModel:
    return CatalogEntryModel(kind=kind, params=params)


class ScenarioGenerator:
    """Builds the bundled scenario files; the seed only feeds the sampling sections."""

    def __init__(self, seed: int | None = None):
        self.seed = get_settings().default_seed if seed is None else seed

    def _soc(self) -> SOCConfig:
        return SOCConfig(seed=self.seed)

    def _lq(self, name: str, beta: float, horizon: HorizonModel, gamma: float = 0.0) -> ScenarioFile:
        return ScenarioFile(
            name=name,
            spatial_dim=1,
            domain_extent=[1.0],
            catalog=[
                _entry(CatalogKind.PSI_ZERO),
                _entry(CatalogKind.COST_TRACKING_QUADRATIC, alpha=1.0, beta=beta, gamma=gamma, target_amplitude=2.0),
                _entry(CatalogKind.G_IDENTITY),
                _entry(CatalogKind.INIT_SINE, amplitude=1.0),
            ],
            bounds=BoundsModel(a=-1.0, b=1.0),
            horizon=horizon,
            discretization=DiscretizationModel(nodes=[7], time_steps=8, theta=0.5),
            solver=SolverConfig(grad_tol=1e-10, feas_tol=1e-10, max_iters=5000),
            soc=self._soc(),
        )

    def generate_lq_fixed_T(self) -> ScenarioFile:
        return self._lq(ScenarioKind.LQ_FIXED_T.value, beta=0.1, horizon=HorizonModel(fixed=1.0))

    def generate_lq_free_T(self) -> ScenarioFile:
        return self._lq(ScenarioKind.LQ_FREE_T.value, beta=0.1, horizon=HorizonModel(lo=0.5, hi=2.0), gamma=0.5)

    def generate_lq_beta_zero(self) -> ScenarioFile:
        scenario = self._lq(ScenarioKind.LQ_BETA_ZERO.value, beta=0.0, horizon=HorizonModel(fixed=1.0))
        scenario.solver = SolverConfig(grad_tol=1e-8, feas_tol=1e-8, max_iters=5000)
        return scenario

    def generate_norm_reduction(self, bound: float = 1.0) -> ScenarioFile:
        """Reach ½∫y(T)² ≤ ε as fast as possible under |u| ≤ bound."""
        return ScenarioFile(
            name=f"{ScenarioKind.NORM_REDUCTION.value}_b{bound:g}",
            spatial_dim=1,
            domain_extent=[1.0],
            catalog=[
                _entry(CatalogKind.PSI_ZERO),
                _entry(CatalogKind.COST_TIME, gamma=1.0),
                _entry(CatalogKind.G_IDENTITY),
                _entry(CatalogKind.INIT_SINE, amplitude=1.0),
                _entry(CatalogKind.TERMINAL_NORM_BALL, radius=0.01),
            ],
            bounds=BoundsModel(a=-bound, b=bound),
            horizon=HorizonModel(lo=0.05, hi=1.0),
            discretization=DiscretizationModel(nodes=[9], time_steps=16, theta=0.5),
            solver=SolverConfig(grad_tol=1e-7, feas_tol=1e-7, max_iters=20000, max_outer=40),
            soc=self._soc(),
        )

    def norm_reduction_sweep(self, bounds: tuple[float, ...] = (1.0, 2.0, 4.0)) -> list[ScenarioFile]:
        return [self.generate_norm_reduction(b) for b in bounds]

    def generate_example31(self) -> ScenarioFile:
        return ScenarioFile(
            name=ScenarioKind.EXAMPLE31.value,
            spatial_dim=1,
            domain_extent=[1.0],
            catalog=[
                _entry(CatalogKind.PSI_CUBIC, coef=1.0),
                _entry(CatalogKind.COST_TRACKING_QUADRATIC, alpha=1.0, beta=0.1, gamma=0.1, target_amplitude=0.5),
                _entry(CatalogKind.G_EXAMPLE31),
                _entry(CatalogKind.INIT_SINE, amplitude=1.0),
                _entry(CatalogKind.TERMINAL_EXAMPLE31, index=1),
                _entry(CatalogKind.TERMINAL_EXAMPLE31, index=2),
            ],
            bounds=BoundsModel(a=-2.0, b=0.0),
            horizon=HorizonModel(lo=0.5, hi=1.5),
            discretization=DiscretizationModel(nodes=[9], time_steps=16, theta=0.5),
            solver=SolverConfig(grad_tol=1e-6, feas_tol=1e-6, max_iters=10000),
            soc=self._soc(),
        )

    def generate_adversarial_saddle(self) -> ScenarioFile:
        """Stationary at u = 0 but concave in the control: a first-order point that is not a minimizer."""
        return ScenarioFile(
            name=ScenarioKind.ADVERSARIAL_SADDLE.value,
            spatial_dim=1,
            domain_extent=[1.0],
            catalog=[
                _entry(CatalogKind.PSI_ZERO),
                _entry(CatalogKind.COST_CONTROL_SADDLE, alpha=0.01, beta=1.0),
                _entry(CatalogKind.G_IDENTITY),
                _entry(CatalogKind.INIT_ZERO),
            ],
            bounds=BoundsModel(a=-1.0, b=1.0),
            horizon=HorizonModel(fixed=1.0),
            discretization=DiscretizationModel(nodes=[7], time_steps=8, theta=0.5),
            solver=SolverConfig(grad_tol=1e-10, feas_tol=1e-10),
            soc=self._soc(),
        )

    def generate_time_varying(self) -> ScenarioFile:
        return ScenarioFile(
            name=ScenarioKind.TIME_VARYING.value,
            spatial_dim=1,
            domain_extent=[1.0],
            catalog=[
                _entry(CatalogKind.PSI_TIME_LINEAR, rate=0.5),
                _entry(
                    CatalogKind.COST_TRACKING_QUADRATIC,
                    alpha=1.0,
                    beta=0.1,
                    gamma=0.2,
                    target_amplitude=1.0,
                    target_decay=1.0,
                ),
                _entry(CatalogKind.G_IDENTITY),
                _entry(CatalogKind.INIT_SINE, amplitude=1.0),
                _entry(CatalogKind.TERMINAL_TIME_ENERGY, time_weight=0.1, state_weight=1.0),
            ],
            bounds=BoundsModel(a=-1.0, b=1.0),
            horizon=HorizonModel(lo=0.25, hi=2.0),
            discretization=DiscretizationModel(nodes=[9], time_steps=16, theta=0.5),
            solver=SolverConfig(grad_tol=1e-8, feas_tol=1e-8),
            soc=self._soc(),
        )

    def generate_cubic_2d(self) -> ScenarioFile:
        return ScenarioFile(
            name=ScenarioKind.CUBIC_2D.value,
            spatial_dim=2,
            domain_extent=[1.0, 1.0],
            catalog=[
                _entry(CatalogKind.PSI_CUBIC, coef=1.0),
                _entry(CatalogKind.COST_TRACKING_QUADRATIC, alpha=1.0, beta=0.05, target_amplitude=1.0),
                _entry(CatalogKind.G_IDENTITY),
                _entry(CatalogKind.INIT_SINE, amplitude=0.5),
                _entry(CatalogKind.DIFFUSION_ANISOTROPIC, a11=1.0, a22=0.5, a12=0.2),
            ],
            bounds=BoundsModel(a=-2.0, b=2.0),
            horizon=HorizonModel(fixed=0.5),
            discretization=DiscretizationModel(nodes=[7, 7], time_steps=8, theta=0.5),
            solver=SolverConfig(grad_tol=1e-8, feas_tol=1e-8),
            soc=self._soc(),
        )

    def generate(self, kind: ScenarioKind | str) -> ScenarioFile:
        kind = ScenarioKind(kind)
        builders = {
            ScenarioKind.LQ_FIXED_T: self.generate_lq_fixed_T,
            ScenarioKind.LQ_FREE_T: self.generate_lq_free_T,
            ScenarioKind.LQ_BETA_ZERO: self.generate_lq_beta_zero,
            ScenarioKind.NORM_REDUCTION: self.generate_norm_reduction,
            ScenarioKind.EXAMPLE31: self.generate_example31,
            ScenarioKind.ADVERSARIAL_SADDLE: self.generate_adversarial_saddle,
            ScenarioKind.TIME_VARYING: self.generate_time_varying,
            ScenarioKind.CUBIC_2D: self.generate_cubic_2d,
        }
        scenario = builders[kind]()
        scenario.name = kind.value
        return scenario

    def generate_all_scenarios(self) -> list[ScenarioFile]:
        return [self.generate(kind) for kind in ScenarioKind]

    def generate_mp_instances(self) -> list[MPInstanceFile]:
        return [
            MPInstanceFile(
                instance="sphere-line",
                brute_force=BruteForceModel(box=[(-2.0, 2.0), (-2.0, 2.0)]),
                seed=self.seed,
            ),
            MPInstanceFile(instance="linear-halfline", brute_force=BruteForceModel(box=[(0.0, 2.0)]), seed=self.seed),
            MPInstanceFile(instance="concave-interval", brute_force=BruteForceModel(box=[(-1.0, 1.0)]), seed=self.seed),
        ]


def scenario_payload(scenario: ScenarioFile | MPInstanceFile) -> dict[str, Any]:
    return scenario.model_dump(mode="json", exclude_none=True)
