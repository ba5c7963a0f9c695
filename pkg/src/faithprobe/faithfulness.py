"""Executable probes for whether attribution scores describe the classifier.

A score vector is qualitatively faithful at x when, inside a small
neighborhood, raising a positively scored feature raises C_label and
lowering it lowers C_label, with the mirrored requirement for negative
scores. The strong variant additionally demands that zero-scored features
leave the prediction unchanged. The quantitative probes measure the
first-order remainder e(h) = C_label(x + h) - C_label(x) - h . s and test
whether it vanishes faster than ||h||, which characterizes the gradient.

Comparisons that the definitions state strictly are applied with a 1e-12
slack so rounding noise cannot manufacture violations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import (
    AttributionScores,
    FeatureDomain,
    Instance,
    ProbabilisticClassifier,
    UNBOUNDED,
)

__all__ = [
    "CONSISTENT",
    "VIOLATED",
    "ZERO_SCORE_UNTESTED",
    "QualitativeVerdict",
    "StrongVerdict",
    "ErrorDecayRecord",
    "ErrorDominanceRecord",
    "SignAgreement",
    "qualitative_probe",
    "strong_probe",
    "quantitative_error",
    "error_decay",
    "error_dominance",
    "sign_agreement",
    "adaptive_epsilon_probe",
    "write_probe_report",
    "REPORT_COLUMNS",
]

CONSISTENT = "CONSISTENT"
VIOLATED = "VIOLATED"
ZERO_SCORE_UNTESTED = "ZERO_SCORE_UNTESTED"

STRICT_SLACK = 1e-12
DEFAULT_STEP_FRACTIONS = (1.0, 0.5, 0.1)

REPORT_COLUMNS = ("dataset", "method", "instance_id", "feature", "verdict", "epsilon", "ratio_sequence")


@dataclass(frozen=True)
class QualitativeVerdict:
    """Per-feature probe outcome at a fixed epsilon."""

    statuses: tuple[str, ...]
    epsilon_used: float
    probe_steps: tuple[float, ...]

    @property
    def consistent(self) -> bool:
        return all(s != VIOLATED for s in self.statuses)

    @property
    def violated_features(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.statuses) if s == VIOLATED)


@dataclass(frozen=True)
class StrongVerdict:
    """Like QualitativeVerdict but zero scores are tested for flatness."""

    statuses: tuple[str, ...]
    epsilon_used: float
    tolerance: float

    @property
    def consistent(self) -> bool:
        return all(s == CONSISTENT for s in self.statuses)


@dataclass(frozen=True)
class ErrorDecayRecord:
    """First-order remainder measured over geometrically shrinking steps."""

    step_sizes: tuple[float, ...]
    errors: tuple[float, ...]
    ratios: tuple[float, ...]  # e(h) / ||h||
    direction: tuple[float, ...]
    passed: bool


@dataclass(frozen=True)
class ErrorDominanceRecord:
    """Remainder-ratio comparison of two score vectors along one direction."""

    step_sizes: tuple[float, ...]
    ratios: tuple[float, ...]  # e_reference(h) / e_other(h)
    passed: bool


@dataclass(frozen=True)
class SignAgreement:
    per_feature: tuple[bool, ...]
    fraction: float


def _domains_for(x: Instance, domains) -> tuple[FeatureDomain, ...]:
    if domains is None:
        return tuple(UNBOUNDED for _ in range(x.num_features))
    domains = tuple(domains)
    if len(domains) != x.num_features:
        raise ValueError("one domain per feature required")
    return domains


def _check_in_domain(value: float, domain: FeatureDomain, feature: int) -> None:
    if not domain.contains(value):
        raise ValueError(f"probe point leaves the domain of feature {feature}")


def qualitative_probe(classifier: ProbabilisticClassifier, scores: AttributionScores,
                      epsilon: float, step_fractions=DEFAULT_STEP_FRACTIONS,
                      domains=None) -> QualitativeVerdict:
    """Check the sign of each score against actual prediction movement.

    Every feature with a nonzero score is probed at x_i +/- f * epsilon
    for each fraction f. A positive score demands a strictly higher
    probability above x_i and strictly lower below; a negative score the
    reverse. Zero scores are reported as ZERO_SCORE_UNTESTED because the
    plain definition places no requirement on them.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    fractions = tuple(float(f) for f in step_fractions)
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise ValueError("step fractions must lie in (0, 1]")
    x = scores.input
    label = scores.label
    doms = _domains_for(x, domains)

    probe_points = []
    probe_index = {}  # (feature, step, sign) -> row
    for i in range(x.num_features):
        if scores.scores[i] == 0.0:
            continue
        for f in fractions:
            delta = f * epsilon
            for sign in (+1.0, -1.0):
                value = x.values[i] + sign * delta
                _check_in_domain(value, doms[i], i)
                row = x.values.copy()
                row[i] = value
                probe_index[(i, f, sign)] = len(probe_points)
                probe_points.append(row)

    base = classifier.probability(x.values, label)
    if probe_points:
        probed = classifier.probabilities(np.array(probe_points), label)
    else:
        probed = np.empty(0)

    statuses = []
    for i in range(x.num_features):
        s = float(scores.scores[i])
        if s == 0.0:
            statuses.append(ZERO_SCORE_UNTESTED)
            continue
        ok = True
        for f in fractions:
            up = probed[probe_index[(i, f, +1.0)]]
            down = probed[probe_index[(i, f, -1.0)]]
            if s > 0:
                ok = up > base - STRICT_SLACK and down < base + STRICT_SLACK
            else:
                ok = up < base + STRICT_SLACK and down > base - STRICT_SLACK
            if not ok:
                break
        statuses.append(CONSISTENT if ok else VIOLATED)
    return QualitativeVerdict(tuple(statuses), float(epsilon), fractions)


def strong_probe(classifier: ProbabilisticClassifier, scores: AttributionScores,
                 epsilon: float, tolerance: float = 1e-9,
                 step_fractions=DEFAULT_STEP_FRACTIONS, domains=None) -> StrongVerdict:
    """Qualitative probe plus a flatness requirement for zero scores.

    A zero-scored feature is CONSISTENT only when every probe moves the
    probability by at most tolerance in absolute value.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    qual = qualitative_probe(classifier, scores, epsilon, step_fractions, domains)
    x = scores.input
    label = scores.label
    doms = _domains_for(x, domains)
    base = classifier.probability(x.values, label)
    statuses = list(qual.statuses)
    for i, status in enumerate(statuses):
        if status != ZERO_SCORE_UNTESTED:
            continue
        rows = []
        for f in qual.probe_steps:
            for sign in (+1.0, -1.0):
                value = x.values[i] + sign * f * epsilon
                _check_in_domain(value, doms[i], i)
                row = x.values.copy()
                row[i] = value
                rows.append(row)
        moved = classifier.probabilities(np.array(rows), label)
        worst = float(np.max(np.abs(moved - base)))
        statuses[i] = CONSISTENT if worst <= tolerance else VIOLATED
    return StrongVerdict(tuple(statuses), float(epsilon), float(tolerance))


def quantitative_error(classifier: ProbabilisticClassifier, scores: AttributionScores,
                       h: np.ndarray, domains=None) -> float:
    """First-order remainder e(h) = C_l(x + h) - C_l(x) - h . s."""
    x = scores.input
    h = np.asarray(h, dtype=np.float64)
    if h.shape != x.values.shape:
        raise ValueError("step vector must match the instance dimension")
    doms = _domains_for(x, domains)
    shifted = x.values + h
    for i, dom in enumerate(doms):
        _check_in_domain(shifted[i], dom, i)
    base = classifier.probability(x.values, scores.label)
    moved = classifier.probability(shifted, scores.label)
    return float(moved - base - float(np.dot(h, scores.scores)))


ASYMPTOTIC_RATIO = 0.1
DECAY_FACTOR = 1.5
ZERO_RATIO_FLOOR = 1e-14


def _decay_passed(ratios) -> bool:
    """Decide the decay verdict for a sequence of e(h)/||h|| ratios.

    The sequence must end inside the asymptotic regime (|ratio| < 0.1)
    and, once two consecutive entries are both inside it, each must fall
    by at least the decay factor (ratios at the rounding floor always
    count as fallen). A sequence that never reaches the regime fails.
    """
    mags = [abs(r) for r in ratios]
    in_regime = [m < ASYMPTOTIC_RATIO for m in mags]
    if not in_regime[-1]:
        return False
    for prev, nxt, ok_prev, ok_next in zip(mags, mags[1:], in_regime, in_regime[1:]):
        if ok_prev and ok_next:
            if nxt > ZERO_RATIO_FLOOR and nxt * DECAY_FACTOR > prev:
                return False
    return True


def error_decay(classifier: ProbabilisticClassifier, scores: AttributionScores,
                direction: np.ndarray, initial_step: float, levels: int = 8,
                domains=None) -> ErrorDecayRecord:
    """Track the remainder along one direction over halving step sizes.

    Steps are h_m = initial_step / 2^m for m = 0 .. levels - 1 applied to
    the unit-normalized direction. Gradient scores drive the ratio
    e(h) / h to zero geometrically; any other score vector leaves a
    nonvanishing component. Choose initial_step small enough that the
    first ratio already sits in the asymptotic regime; at larger steps
    higher-order terms make the early ratios wobble and the wobble is
    reported as a failure.
    """
    if levels < 3:
        raise ValueError("at least 3 levels are required")
    if not initial_step > 0:
        raise ValueError("initial_step must be positive")
    u = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(u))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("direction must be a nonzero finite vector")
    u = u / norm

    steps, errors, ratios = [], [], []
    for m in range(levels):
        h = initial_step / (2.0**m)
        e = quantitative_error(classifier, scores, h * u, domains)
        steps.append(h)
        errors.append(e)
        ratios.append(e / h)
    return ErrorDecayRecord(tuple(steps), tuple(errors), tuple(ratios),
                            tuple(u), _decay_passed(ratios))


def error_dominance(classifier: ProbabilisticClassifier, reference: AttributionScores,
                    other: AttributionScores, direction: np.ndarray, initial_step: float,
                    levels: int = 8, domains=None) -> ErrorDominanceRecord:
    """Compare remainders of two score vectors along one direction.

    Computes e_ref(h) / e_other(h) over halving steps. When the reference
    is the gradient and the other vector differs along the direction, the
    ratio must shrink toward zero. The probe refuses directions on which
    the two score vectors agree to within 1e-9, because the comparison
    is then vacuous.
    """
    if levels < 3:
        raise ValueError("at least 3 levels are required")
    u = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(u))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("direction must be a nonzero finite vector")
    u = u / norm
    separation = float(np.dot(other.scores - reference.scores, u))
    if abs(separation) <= 1e-9:
        raise ValueError("score vectors agree along this direction; comparison is vacuous")

    steps, ratios = [], []
    for m in range(levels):
        h = initial_step / (2.0**m)
        e_ref = quantitative_error(classifier, reference, h * u, domains)
        e_other = quantitative_error(classifier, other, h * u, domains)
        steps.append(h)
        ratios.append(e_ref / e_other if e_other != 0.0 else np.inf)
    passed = (np.isfinite(ratios[-1]) and abs(ratios[-1]) < abs(ratios[0])
              and abs(ratios[-1]) < ASYMPTOTIC_RATIO)
    return ErrorDominanceRecord(tuple(steps), tuple(ratios), bool(passed))


def sign_agreement(scores_a, scores_b) -> SignAgreement:
    """Directional agreement of two score vectors.

    Feature i agrees when a positive a_i meets a non-negative b_i and a
    negative a_i meets a non-positive b_i; a zero a_i places no
    constraint.
    """
    a = scores_a.scores if isinstance(scores_a, AttributionScores) else np.asarray(scores_a, dtype=np.float64)
    b = scores_b.scores if isinstance(scores_b, AttributionScores) else np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("score vectors must have equal length")
    per = []
    for ai, bi in zip(a, b):
        if ai > 0:
            per.append(bool(bi >= 0))
        elif ai < 0:
            per.append(bool(bi <= 0))
        else:
            per.append(True)
    return SignAgreement(tuple(per), float(np.mean(per)) if per else 1.0)


def adaptive_epsilon_probe(classifier: ProbabilisticClassifier, scores: AttributionScores,
                           start_epsilon: float = 0.1, floor: float = 1e-7,
                           score_floor: float = 0.0, step_fractions=DEFAULT_STEP_FRACTIONS,
                           domains=None):
    """Shrink epsilon until the qualitative probe passes.

    Halves epsilon from start_epsilon and stops at the first value whose
    probe has no violation among features with |score| > score_floor.
    Returns (epsilon, verdict) on success and (None, last verdict) when
    the floor is reached first, which reports the search as exhausted
    rather than claiming a violation.
    """
    if not 0 < floor <= start_epsilon:
        raise ValueError("need 0 < floor <= start_epsilon")
    tested = [i for i in range(scores.num_features) if abs(scores.scores[i]) > score_floor]
    eps = start_epsilon
    verdict = None
    while eps >= floor:
        verdict = qualitative_probe(classifier, scores, eps, step_fractions, domains)
        if all(verdict.statuses[i] != VIOLATED for i in tested):
            return eps, verdict
        eps *= 0.5
    return None, verdict


def write_probe_report(out, rows) -> None:
    """Serialize probe outcomes as CSV.

    Each row is a mapping with the REPORT_COLUMNS keys; ratio_sequence
    may be an iterable of floats and is joined with semicolons.
    """
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        seq = row.get("ratio_sequence", "")
        if not isinstance(seq, str):
            seq = ";".join(format(float(r), ".9g") for r in seq)
        writer.writerow([
            row["dataset"], row["method"], row["instance_id"], row["feature"],
            row["verdict"], format(float(row["epsilon"]), ".9g"), seq,
        ])
