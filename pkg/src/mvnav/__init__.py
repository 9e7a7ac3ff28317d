"""Multi-vehicle navigation: bicycle kinematics, MPC labelling, a message-passing
policy network and hard-scenario mining."""
from ._backend import BACKEND
from .costs import CostWeights, Margins, Obstacle, Scenario, VehicleTask
from .kinematics import Control, KinematicParams, VehicleState, rollout, step, wrap_angle
from .optimizer import MPCController, SolverConfig, WarmStart, optimize
from .simulation import SimConfig, generate_scenario, run_closed_loop

__version__ = "0.1.0"
