"""Sampled profiles preprocessed into arrays the rebate networks consume."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .auction import clarke_payments
from .profiles import (
    HOMOGENEOUS,
    UTILITY_KEYS,
    BatchSpec,
    check_sizes,
    others_view,
    order_rows,
    sample_values,
)

# independent seed streams derived from one run seed
TRAIN_STREAM = 0
INIT_STREAM = 1
TEST_STREAM = 2
DSIC_STREAM = 3


def stream_seed(seed, stream):
    """A 64-bit seed for one named stream of a run."""
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1, np.uint64)[0])


@dataclass
class MechanismBatch:
    """Arrays for ``S`` profiles.

    inputs:  (S, n, d) network input of each agent, agents in canonical rank order
    totals:  (S,) VCG surplus ``t``
    perm:    (S, n) original agent index at each rank
    values:  (S, n, width) raw valuations
    """

    values: np.ndarray
    inputs: np.ndarray
    totals: np.ndarray
    perm: np.ndarray
    n: int
    p: int
    setting: str
    scheme: str = UTILITY_KEYS

    def __len__(self):
        return self.totals.shape[0]

    def subset(self, index):
        return MechanismBatch(
            values=self.values[index],
            inputs=self.inputs[index],
            totals=self.totals[index],
            perm=self.perm[index],
            n=self.n,
            p=self.p,
            setting=self.setting,
            scheme=self.scheme,
        )


def _homogeneous_arrays(values, p):
    col = values[:, :, 0]
    S, n = col.shape
    perm = np.argsort(-col, axis=1, kind="stable")
    ordered = np.take_along_axis(col, perm, axis=1)
    drop = np.array([[j for j in range(n) if j != i] for i in range(n)], dtype=np.intp)
    inputs = ordered[:, drop]
    totals = p * ordered[:, p]
    return inputs, totals, perm


def prepare_values(values, p, setting, scheme=UTILITY_KEYS, with_totals=True):
    """Order, price and build network inputs for an ``(S, n, width)`` array.

    With ``with_totals=False`` the heterogeneous auctions are not priced and
    ``totals`` is left as NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    S, n, _ = values.shape
    check_sizes(n, p, setting)
    if setting == HOMOGENEOUS:
        inputs, totals, perm = _homogeneous_arrays(values, p)
    else:
        rows_in, totals, perms = [], np.empty(S), []
        for s in range(S):
            v = values[s]
            order, _ = order_rows(v)
            perms.append(order)
            totals[s] = clarke_payments(v).total if with_totals else np.nan
            rows_in.append([others_view(v, int(a), setting, scheme) for a in order])
        inputs = np.array(rows_in, dtype=np.float64)
        perm = np.array(perms, dtype=np.intp)
    return MechanismBatch(
        values=values, inputs=inputs, totals=totals, perm=perm,
        n=n, p=p, setting=setting, scheme=scheme,
    )


def prepare_batch(spec: BatchSpec, scheme=UTILITY_KEYS):
    return prepare_values(sample_values(spec), spec.p, spec.setting, scheme)
