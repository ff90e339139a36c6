"""Turn trained filters into minimized DNF rules."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .data import BinarizerMap
from .errors import FanInError
from .logic import MAX_K, DnfFormula, TruthTable, minimize_qm, patch_codes
from .net import TTnetModel, filter_preactivation
from .rules import Rule, RuleSet

logger = logging.getLogger(__name__)


def row_patterns(k: int) -> np.ndarray:
    """(2**k, k) matrix whose row r holds the bits of r, least significant first."""
    r = np.arange(1 << k)
    return ((r[:, None] >> np.arange(k)[None, :]) & 1).astype(np.uint8)


def enumerate_truth_table(model: TTnetModel, filter_id: int) -> TruthTable:
    k = model.k
    if k > MAX_K:
        raise FanInError(f"fan-in {k} is too large to enumerate")
    f = model.filter(filter_id)
    P = row_patterns(k).astype(np.float64)[:, None, :]
    z2 = filter_preactivation(P, f.W1[None], f.b1[None], f.w2[None], np.array([f.b2]))[1]
    outputs = (z2[:, 0] >= 0.0).astype(np.uint8)
    return TruthTable(k, f.config.input_indices, outputs, np.zeros(1 << k, dtype=bool),
                      origin=int(model.filter_ids[filter_id]))


def enumerate_all(model: TTnetModel) -> np.ndarray:
    """(F, 2**k) truth tables of every filter in one vectorized pass."""
    rows = row_patterns(model.k).astype(np.float64)
    out = np.empty((model.n_filters, 1 << model.k), dtype=np.uint8)
    step = 2048
    for s in range(0, model.n_filters, step):
        sl = slice(s, s + step)
        P = np.broadcast_to(rows[:, None, :], (len(rows), len(model.W1[sl]), model.k))
        z2 = filter_preactivation(P, model.W1[sl], model.b1[sl], model.w2[sl], model.b2[sl])[1]
        out[sl] = (z2 >= 0.0).T
    return out


def patch_support(bits, indices) -> np.ndarray:
    """Boolean mask over the 2**k rows marking patches observed in ``bits``."""
    seen = np.zeros(1 << len(indices), dtype=bool)
    seen[np.unique(patch_codes(bits, indices))] = True
    return seen


def encoding_violations(indices, map: BinarizerMap) -> np.ndarray:
    """Rows that no binarized input can produce (monotonicity or one-hot)."""
    k = len(indices)
    rows = row_patterns(k)
    bad = np.zeros(1 << k, dtype=bool)
    groups = {}
    for j, bit in enumerate(indices):
        f, ordinal = map.bit_owner(int(bit))
        groups.setdefault(f, []).append((ordinal, j))
    for f, members in groups.items():
        fb = map.features[f]
        if fb.kind == "continuous" and len(members) > 1:
            members.sort()
            for (_, lo), (_, hi) in zip(members, members[1:]):
                # a higher threshold cannot hold while a lower one fails
                bad |= (rows[:, hi] == 1) & (rows[:, lo] == 0)
        elif fb.kind == "categorical":
            cols = [j for _, j in members]
            hot = rows[:, cols].sum(axis=1)
            bad |= hot > 1
            if len(cols) == fb.width:
                bad |= hot == 0
    return bad


def inject_dont_cares(table: TruthTable, map: BinarizerMap | None = None, support=None,
                      unseen: bool = False) -> TruthTable:
    """Mark impossible rows (and, with ``unseen``, rows absent from ``support``) as don't-care.

    ``support`` is either a bit matrix of training rows or a precomputed
    boolean mask from :func:`patch_support`.
    """
    dc = table.dont_care.copy()
    if map is not None:
        dc |= encoding_violations(table.input_indices, map)
    if unseen and support is not None:
        support = np.asarray(support)
        if support.dtype == bool and support.shape == (1 << table.k,):
            seen = support
        else:
            seen = patch_support(support, table.input_indices)
        dc |= ~seen
    return replace(table, dont_care=dc)


def _extract_one(args):
    table, map, support_mask, unseen = args
    table = inject_dont_cares(table, map, support_mask, unseen)
    return minimize_qm(table)


def extract_rules(model: TTnetModel, map: BinarizerMap | None = None, support=None, *,
                  unseen_dontcare: bool = False, encoding_dontcare: bool = True,
                  jobs: int = 1) -> RuleSet:
    """One rule per filter with a nonzero head weight, in filter order."""
    W = model.head.weights
    alive = np.flatnonzero(np.any(W != 0, axis=0))
    tables = enumerate_all(model)
    tasks = []
    for i in alive:
        table = TruthTable(model.k, tuple(int(j) for j in model.indices[i]), tables[i],
                           np.zeros(1 << model.k, dtype=bool), int(model.filter_ids[i]))
        mask = patch_support(support, table.input_indices) if (unseen_dontcare and support is not None) else None
        tasks.append((table, map if encoding_dontcare else None, mask, unseen_dontcare))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            formulas = list(pool.map(_extract_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        formulas = [_extract_one(t) for t in tasks]
    rules = [Rule(f"r{int(model.filter_ids[i])}", formula, tuple(float(w) for w in W[:, i]))
             for i, formula in zip(alive, formulas)]
    logger.info("extracted %d rules from %d filters", len(rules), model.n_filters)
    return RuleSet(rules, tuple(float(b) for b in model.head.bias), model.task, map,
                   (model.target_mean, model.target_std), model.head.mode)


def dnf_for_filter(model: TTnetModel, filter_id: int) -> DnfFormula:
    return minimize_qm(enumerate_truth_table(model, filter_id))
