"""Optimal control of open radical-pair spin dynamics in Liouville space."""

from .errors import (AlignmentError, ConfigError, EmbedDimensionError, ExpmDivergenceError,
                     InvalidMultiplicityError, InvalidRateError, NumericError, RegisterShapeError,
                     RPControlError, ShapeError, SingularDriftError, StiffCostateError)
from .model import FieldSpec, HyperfineCoupling, SpinSystem, build_hamiltonian, fadh_z, masuzawa7
from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .problem import ControlProblem, contrast_problem, yield_problem
from .propagation import ControlSchedule, expm_action, forward_trajectory
from .spin import SpinRegister, singlet_projector, triplet_projector
from .superop import ChannelSpec, NoiseModel, NoiseSpec, control_channels, drift_liouvillian

__version__ = "0.1.0"
