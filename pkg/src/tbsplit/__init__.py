"""Token-bucket split simulator and latency verification workbench."""

from ._backend import BACKEND
from .analytic import (
    latency_curve,
    latency_integral,
    system_curves,
    token_bucket_delays,
    unfinished_work_at_arrivals,
    waiting_count_curve,
)
from .model import (
    ArrivalTrace,
    BucketParams,
    JobOutcome,
    PiecewiseLinearCurve,
    SplitSpec,
    StepCurve,
    validate_split,
)
from .routing import RoutingPolicy, assign_offline, online_decide
from .simcore import (
    ServiceOrder,
    departure_envelope_check,
    simulate_bucket,
    simulate_split_system,
)
from .workload import GeneratorSpec, generate, read_trace, write_trace

__version__ = "0.1.0"
