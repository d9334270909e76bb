"""Inter-rater agreement: Fleiss' kappa and (weighted) Cohen's kappa."""
from __future__ import annotations

from typing import Hashable, Literal, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyInput, LengthMismatch


def fleiss_counts(ratings: Sequence[Sequence[Hashable]], categories: Sequence[Hashable] | None = None) -> np.ndarray:
    """Items x categories matrix of how many raters chose each category."""
    if not ratings:
        raise EmptyInput("no items to rate")
    n_raters = len(ratings[0])
    if n_raters < 2:
        raise DegenerateInput("Fleiss' kappa needs at least two raters")
    for row in ratings:
        if len(row) != n_raters:
            raise LengthMismatch("every item must be rated by the same number of raters")
        if any(v is None for v in row):
            raise DegenerateInput("missing rating")
    cats = list(categories) if categories is not None else sorted({v for row in ratings for v in row}, key=repr)
    index = {c: i for i, c in enumerate(cats)}
    counts = np.zeros((len(ratings), len(cats)), dtype=np.int64)
    for i, row in enumerate(ratings):
        for v in row:
            if v not in index:
                raise ValueError(f"rating {v!r} not in the category set")
            counts[i, index[v]] += 1
    return counts


def fleiss_kappa_from_counts(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] == 0:
        raise EmptyInput("count table must be a non-empty items x categories matrix")
    per_item = counts.sum(axis=1)
    n = int(per_item[0])
    if n < 2 or np.any(per_item != n):
        raise LengthMismatch("every item needs the same number (>= 2) of ratings")
    n_items = counts.shape[0]
    p_i = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (n_items * n)
    p_e = float((p_j * p_j).sum())
    if p_e == 1.0:
        raise DegenerateInput("all ratings fall in one category; chance agreement is 1")
    return (p_bar - p_e) / (1 - p_e)


def fleiss_kappa(ratings: Sequence[Sequence[Hashable]], categories: Sequence[Hashable] | None = None) -> float:
    """Fleiss' kappa over an items x raters matrix of category labels."""
    return fleiss_kappa_from_counts(fleiss_counts(ratings, categories))


def confusion_matrix(a: Sequence[int], b: Sequence[int], labels: Sequence[int]) -> np.ndarray:
    if len(a) != len(b):
        raise LengthMismatch(f"rater sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInput("no ratings")
    index = {v: i for i, v in enumerate(labels)}
    m = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for x, y in zip(a, b):
        if x not in index or y not in index:
            raise ValueError(f"rating outside the scale {list(labels)}: {x!r}, {y!r}")
        m[index[x], index[y]] += 1
    return m


def cohen_kappa_weighted(
    a: Sequence[int],
    b: Sequence[int],
    weighting: Literal["quadratic", "linear", "none"] = "quadratic",
    labels: Sequence[int] = (1, 2, 3, 4, 5),
) -> float:
    """Cohen's kappa with agreement weights ``w_ij = 1 - d_ij``.

    Quadratic: ``d_ij = (i - j)^2 / (k - 1)^2``. Computed as
    ``1 - sum(d * observed) / sum(d * expected)`` on integer counts, so perfect
    agreement yields exactly 1.0.
    """
    m = confusion_matrix(a, b, labels)
    k = len(labels)
    i, j = np.indices((k, k))
    if weighting == "quadratic":
        d = (i - j) ** 2
    elif weighting == "linear":
        d = np.abs(i - j)
    elif weighting == "none":
        d = (i != j).astype(np.int64)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    n = int(m.sum())
    rows, cols = m.sum(axis=1), m.sum(axis=0)
    observed = int((d * m).sum()) * n
    expected = int((d * np.outer(rows, cols)).sum())
    if expected == 0:
        raise DegenerateInput("chance disagreement is zero (both raters use a single identical category)")
    return 1 - observed / expected
