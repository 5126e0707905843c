"""Quantum hydrodynamics with an internal U(1) gauge potential."""
from holoqhd.config import KINDS, Scenario, parse_config, serialize
from holoqhd.errors import (ComponentCountError, ConfigError, DimensionalityError, DomainExitError,
                            GeometryError, HoloQHDError, NumericalAbort, ParameterError,
                            ProximityError, SnapshotFormatError, TopologyError)
from holoqhd.fields import Grid, Loop, line_integral
from holoqhd.filament import CoupledSystem, FilamentCurve, hausdorff, step_coupled
from holoqhd.gauge import GaugeField, biot_savart_lambda, helmholtz_decompose, stokes_holonomy
from holoqhd.kernels import BACKEND
from holoqhd.propagator import PropagatorParams
from holoqhd.scenarios import run_scenario

__version__ = "0.1.0"
