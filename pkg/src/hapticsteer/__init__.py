"""Haptic shared steering: plant, agents, gain-modulation OCP, tracking solver.

A driver and an automation motor act on the same steering column through
back-drivable impedances; the controller modulates the automation's stiffness
and damping in real time to trade control authority with the driver.  See the
submodules: ``plant`` (dynamics), ``agents`` (intents, modes, weights),
``ocp`` (discretized problem), ``cgmres`` (matrix-free tracking solver),
``harness`` (scenarios, traces, metrics), ``config``/``cli`` (front end).
"""

from . import agents, cgmres, config, harness, ocp, plant
from .agents import (CostWeights, IntentProfile, InteractionMode,
                     automation_intent, human_gamma_hold, intent, select_mode,
                     weights_for)
from .cgmres import (GmresResult, SolverSettings, SolverState, continuation_rhs,
                     dense_newton, fd_directional, fdgmres)
from .harness import (RunMetrics, ScenarioConfig, ScheduleSegment, SimulationTrace,
                      combined_sequence, compare, error_stats, run_scenario)
from .ocp import ImpedanceOcp, OcpSettings, StageDecision, extract_control
from .plant import (ControlInput, ExogenousInput, Measurement, MechanicalParams,
                    PlantState, equilibrium_angle, equilibrium_state, measure,
                    state_derivative)

__version__ = "0.1.0"
