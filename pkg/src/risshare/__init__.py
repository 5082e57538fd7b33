"""RIS-aided spectrum sharing: beamforming, reflect-vector design and phase quantisation."""

from .beamform import BeamformResult, solve_p3
from .driver import AoConfig, TrialResult, ao_solve, emit_csv, run_sweep, run_trial
from .gld import GldConfig, gld_solve
from .metrics import link_report, pn_interference, rate, su_sir
from .npsp import NpspConfig, PhaseCodebook, exhaustive_quantize, npsp_solve
from .scenario import ChannelSet, ProblemData, ReflectVector, Scenario, assemble_problem, generate_channels
from .socp import Cone, SocpProblem, SocpSolution, solve

__version__ = "0.1.0"
