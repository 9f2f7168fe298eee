from .nets import (
    Adam,
    ComposedPolicy,
    PolicyNet,
    compose,
    init_residual,
    load_policy,
    save_policy,
)
from .obs import ObservationBuilder, ObservationSpec, build_observation

__all__ = [
    "Adam",
    "ComposedPolicy",
    "PolicyNet",
    "compose",
    "init_residual",
    "load_policy",
    "save_policy",
    "ObservationBuilder",
    "ObservationSpec",
    "build_observation",
]
