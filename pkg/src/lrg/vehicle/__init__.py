"""Tank truck with trammel-pendulum liquid slosh and an LTR rollover output."""

from .dynamics import ModelSingularityError
from .model import (
    REST_THETA,
    SpeedSchedule,
    TruckPlant,
    VehicleState,
    ltr,
    mass_matrix,
    pendulum_coupling_block,
    pendulum_energy,
    pendulum_free_derivatives,
    rest_state,
    simulate_free_pendulum,
    slosh_force,
    tire_force,
    tire_sideslip,
    unused_equation_residual,
    vehicle_derivatives,
)
from .params import (
    G,
    ParameterError,
    PendulumParams,
    TireParams,
    VehicleParams,
    derive,
    dump_vehicle_params,
    ellipse_fill_fraction,
    load_vehicle_params,
    pendulum_params,
)
