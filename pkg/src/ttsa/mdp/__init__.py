"""Finite MDPs, exact dynamic-programming oracles and Q-learning instantiations."""

from .learners import (
    SspConfig,
    default_ssp_config,
    make_polyak_problem,
    make_ssp_problem,
    polyak_oracle,
    rho_grid,
    slow_contraction_estimate,
    ssp_oracle,
)
from .model import MdpModel, load_mdp, random_mdp, save_mdp
from .oracles import (
    AvgCostSolution,
    DiscountedSolution,
    SspWeights,
    avgcost_oracle,
    discounted_bellman,
    discounted_oracle,
    h_map,
    h_secants,
    lp_average_cost,
    ssp_bellman_residual,
    ssp_q_of_rho,
    ssp_weights,
    truncated_kernel,
)
