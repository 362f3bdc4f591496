"""Learned VCG redistribution mechanisms for unit-demand auctions.

Linear and one-hidden-layer rebate functions are trained with a penalty
method to return as much of the VCG surplus as possible, either on average
(OE) or in the worst case (OW), for identical or distinct objects.
"""
from .auction import AuctionOutcome, brute_force_assignment, clarke_payments, efficient_assignment, max_welfare
from .batch import MechanismBatch, prepare_batch, prepare_values
from .errors import (
    ConfigurationError,
    SizeError,
    SolverError,
    TrainingError,
    UndefinedIndexError,
    UsageError,
)
from .evaluation import EvalReport, dsic_spot_check, empirical_e_oe, empirical_e_ow, emit_table, evaluate
from .oracle import LinearProgram, build_oe_lp, build_ow_lp, simplex_solve
from .profiles import (
    HETEROGENEOUS,
    HOMOGENEOUS,
    BatchSpec,
    CanonicalProfile,
    ValuationProfile,
    canonical_order,
    sample_batch,
)
from .rebate_net import LinearRebateNet, NonlinearRebateNet, build_net, load_checkpoint, save_checkpoint
from .training import OE, OW, TrainConfig, adam_step, oe_loss, ow_loss, train

__version__ = "0.1.0"
