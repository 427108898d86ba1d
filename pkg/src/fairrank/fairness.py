"""Group exposure and the per-query fairness vector.

The fairness vector f carries one signed weight per item.  Its inner
product with the item exposures, f' P v, is a belief-weighted exposure
difference between the two groups, so driving it toward zero equalizes
group exposure.  Within each group items are weighted proportionally to
the adversary's current relevance belief, which concentrates the exposure
adjustment on items predicted to matter and so preserves utility better
than uniform weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AdversaryBelief, DoublyStochasticMatrix, PositionBias, exposure_per_item
from .errors import InvalidInputError


def exposure(p: DoublyStochasticMatrix, bias: PositionBias, group) -> float:
    """Average exposure of the items in a group under ranking P."""
    idx = np.asarray(list(group), dtype=int)
    if idx.size == 0:
        raise InvalidInputError("exposure of an empty group is undefined")
    return float(exposure_per_item(p.entries, bias)[idx].mean())


@dataclass(frozen=True)
class FairnessVector:
    """Signed item weights f with f' P v = weighted exposure disparity.

    group_weights holds the per-item a_j values (summing to |G_s| within
    each group); target_tau is the query-independent mean position bias.
    active is False for degenerate queries where fairness exerts no force.
    """

    f: np.ndarray
    target_tau: float
    group_weights: np.ndarray
    active: bool = True


def build_fairness_vector(q: AdversaryBelief, groups,
                          bias: PositionBias | None = None) -> FairnessVector:
    """Construct the signed fairness vector from the current belief q.

    Within group G_s, a_j = |G_s| * q_j / sum(q over G_s) (uniform a_j = 1
    when the group's belief mass is zero).  Entries are +a_j/|G_s| for the
    group with the lower mean belief (predicted disadvantaged) and
    -a_j/|G_s| for the other; mean ties go to the smaller group label.
    Queries with fewer than two groups get a zero vector flagged inactive.
    """
    g = np.asarray(groups)
    qv = q.q
    if g.shape != qv.shape:
        raise InvalidInputError("groups and belief lengths differ")
    m = qv.size
    bias = bias or PositionBias.for_items(m)
    tau = bias.mean
    labels = np.unique(g)
    if labels.size < 2:
        return FairnessVector(np.zeros(m), tau, np.zeros(m), active=False)
    if labels.size > 2:
        raise InvalidInputError("fairness vector requires exactly two groups")

    a = np.zeros(m)
    means = []
    for label in labels:
        mask = g == label
        mass = qv[mask].sum()
        if mass > 0:
            a[mask] = mask.sum() * qv[mask] / mass
        else:
            a[mask] = 1.0
        means.append(qv[mask].mean())

    # + sign to the group predicted disadvantaged (lower mean belief).
    plus_label = labels[0] if means[0] <= means[1] else labels[1]
    f = np.where(g == plus_label, 1.0, -1.0) * a
    for label in labels:
        mask = g == label
        f[mask] /= mask.sum()
    return FairnessVector(f, tau, a, active=True)
