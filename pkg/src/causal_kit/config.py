"""Dataclass configurations for penalty selection, resampling and the bundled experiments."""

from dataclasses import asdict, dataclass, field, replace


@dataclass(frozen=True)
class PenaltyConfig:
    """How the Lasso penalty is chosen.

    ``c`` and ``rounds`` drive the plug-in rule (sigma re-estimated
    ``rounds`` times); ``folds``, ``n_grid`` and ``one_se`` drive
    cross-validation.
    """

    rule: str = "plugin"
    c: float = 1.1
    rounds: int = 2
    folds: int = 10
    n_grid: int = 100
    one_se: bool = False

    def __post_init__(self):
        if self.c <= 0 or self.rounds < 0 or self.folds < 2 or self.n_grid < 2:
            raise ValueError(f"invalid penalty config {self}")

    def selector_kwargs(self) -> dict:
        d = asdict(self)
        d.pop("rule")
        return d


@dataclass(frozen=True)
class BootstrapConfig:
    b: int = 1000
    seed: int = 0
    level: float = 0.95
    jobs: int = 1
    max_failure_rate: float = 0.10


@dataclass(frozen=True)
class GrowthStudy:
    reps: int = 500
    n: int = 90
    p: int = 60
    s: int = 5
    alpha: float = -0.045
    seed: int = 0
    level: float = 0.95
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)


@dataclass(frozen=True)
class OrthogonalityStudy:
    n: int = 5000
    reps: int = 50
    seed: int = 900
    direction_seed: int = 7
    t_grid: tuple = (0.1, 0.2, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class SelectionBiasStudy:
    n: int = 100_000
    rho: float = -0.5
    eta1: float = 0.0
    seed: int = 4
    rct_reps: int = 1000
    rct_n: int = 500
    rct_eta1: float = 0.3


@dataclass(frozen=True)
class HeartStudy:
    n: int = 100_000
    q: float = 0.6
    seed: int = 2
    bootstrap: BootstrapConfig = field(default_factory=lambda: BootstrapConfig(b=500))


def override(cfg, **changes):
    """Copy of ``cfg`` with the non-None entries of ``changes`` applied."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
