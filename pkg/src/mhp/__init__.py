"""Multi-hop upstream pressure metrics and a mesoscopic signal-control lab."""

__version__ = "0.1.0"

from .network import (  # noqa: F401
    ExtendedGraph,
    Link,
    LinkGraph,
    Movement,
    QueueSnapshot,
    TransitionMatrix,
    build_graph,
    extend_with_supersink,
    transition_matrix,
)
from .pressure import (  # noqa: F401
    Phase,
    PotentialVector,
    PressureVector,
    link_importance,
    link_pressure,
    phase_pressure,
    potential_sum,
    pressure_vector,
    pressure_vector_unrolled,
    upstream_potential,
)
