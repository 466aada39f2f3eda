"""Branch and bound for mixed integer programs with learned node selection and pruning."""

from .engine import BranchAndBound, Limits, MipModel, SolveResult, solve
from .lp import LpProblem, LpSolution, solve_lp
from .policy import MLPolicy, PolicyConfig, run_policy
from .selectors import make_selector

__all__ = [
    "BranchAndBound", "Limits", "LpProblem", "LpSolution", "MLPolicy", "MipModel", "PolicyConfig",
    "SolveResult", "make_selector", "run_policy", "solve", "solve_lp",
]
__version__ = "0.1.0"
