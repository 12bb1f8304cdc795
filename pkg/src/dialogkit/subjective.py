"""Subjective-evaluation analytics: rating-clip preparation, win/tie/lose
rates, and Elo ratings with bootstrap confidence intervals from pairwise
human judgments.

Ratings are Bradley-Terry maximum-likelihood strengths presented on the Elo
scale (400 * log10 odds), anchored to a mean of 1000. Ties count as half a
win for each side. A small L2 penalty on log-strengths keeps one-sided sweeps
finite.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .script import Fragment

DIMENSIONS = ("acc", "sim", "rhythm", "overall")
OUTCOMES = ("a_wins", "b_wins", "tie")
MAX_CLIP_S = 90.0
ELO_SCALE = 400.0
ELO_ANCHOR = 1000.0
L2_PENALTY = 0.01
DEFAULT_BOOTSTRAP = 1000


class SubjectiveError(ValueError):
    pass


class NoJudgments(SubjectiveError):
    pass


class FragmentTooLong(UserWarning):
    pass


class DegenerateGraph(UserWarning):
    """Comparison graph is disconnected; ratings anchored per component."""


@dataclass(frozen=True)
class PairwiseJudgment:
    item_id: str
    system_a: str
    system_b: str
    dimension: str
    outcome: str

    def __post_init__(self):
        if self.system_a == self.system_b:
            raise SubjectiveError(f"{self.item_id}: a system cannot face itself")
        if self.dimension not in DIMENSIONS:
            raise SubjectiveError(f"unknown dimension {self.dimension!r}")
        if self.outcome not in OUTCOMES:
            raise SubjectiveError(f"unknown outcome {self.outcome!r}")


@dataclass
class RatingClip:
    """A contiguous run of whole fragments packed for annotator review."""

    start_s: float
    end_s: float
    fragment_indices: list[int]
    oversized: bool = False

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class EloResult:
    ratings: dict[str, float]
    ci_low: dict[str, float]
    ci_high: dict[str, float]
    n_bootstrap: int
    dimension: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "dimension": self.dimension,
                "n_bootstrap": self.n_bootstrap,
                "ratings": self.ratings,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
            },
            sort_keys=True,
            indent=2,
        )

    def to_table(self, width: int = 40) -> str:
        """Rank-ordered table with textual confidence-interval bars."""
        systems = sorted(self.ratings, key=self.ratings.get, reverse=True)
        lo = min(self.ci_low.values())
        hi = max(self.ci_high.values())
        span = max(hi - lo, 1e-9)

        def bar(system: str) -> str:
            cells = [" "] * width
            a = int((self.ci_low[system] - lo) / span * (width - 1))
            b = int((self.ci_high[system] - lo) / span * (width - 1))
            for i in range(a, b + 1):
                cells[i] = "-"
            mid = int((self.ratings[system] - lo) / span * (width - 1))
            cells[mid] = "*"
            return "".join(cells)

        lines = [
            f"dimension: {self.dimension}",
            f"{'rank':<5}{'system':<20}{'rating':>9}  {'95% CI':<20}",
        ]
        for rank, system in enumerate(systems, start=1):
            ci = f"[{self.ci_low[system]:7.1f}, {self.ci_high[system]:7.1f}]"
            lines.append(
                f"{rank:<5}{system:<20}{self.ratings[system]:>9.1f}  {ci:<20}"
                f" |{bar(system)}|"
            )
        return "\n".join(lines)


def segment_for_rating(
    fragments: list[Fragment],
    max_clip_s: float = MAX_CLIP_S,
    alignments=None,
    language: str = "en",
) -> list[RatingClip]:
    """Pack whole time-stamped fragments into clips of at most ``max_clip_s``.

    Cuts happen only at fragment boundaries. A single fragment longer than the
    budget is kept as its own clip and flagged. When ``alignments`` is given,
    fragments are time-stamped first.
    """
    if alignments is not None:
        from .objective import fragment_spans

        fragments, _ = fragment_spans(fragments, alignments, language)
    fragments = [f for f in fragments if f.start_s is not None and f.end_s is not None]
    clips: list[RatingClip] = []
    current: list[int] = []
    current_start = 0.0
    for idx, frag in enumerate(fragments):
        if frag.duration_s > max_clip_s:
            if current:
                clips.append(
                    RatingClip(current_start, fragments[current[-1]].end_s, current)
                )
                current = []
            warnings.warn(
                f"fragment {idx} runs {frag.duration_s:.1f}s, over the "
                f"{max_clip_s:.0f}s budget",
                FragmentTooLong,
                stacklevel=2,
            )
            clips.append(
                RatingClip(frag.start_s, frag.end_s, [idx], oversized=True)
            )
            continue
        if not current:
            current = [idx]
            current_start = frag.start_s
        elif frag.end_s - current_start <= max_clip_s:
            current.append(idx)
        else:
            clips.append(
                RatingClip(current_start, fragments[current[-1]].end_s, current)
            )
            current = [idx]
            current_start = frag.start_s
    if current:
        clips.append(RatingClip(current_start, fragments[current[-1]].end_s, current))
    return clips


def segment_pair_for_rating(
    fragments_a: list[Fragment],
    fragments_b: list[Fragment],
    max_clip_s: float = MAX_CLIP_S,
) -> tuple[list[RatingClip], list[RatingClip]]:
    """Pack two systems' renditions of the same script with shared cuts.

    Both fragment lists must cover the same fragment sequence (same length);
    cuts are chosen at shared fragment indices so every rated pair covers the
    same text, with neither side's clip exceeding the budget. Oversized
    fragments are flagged on whichever side overruns.
    """
    if len(fragments_a) != len(fragments_b):
        raise SubjectiveError("paired systems must cover the same fragments")

    def duration(frags, lo, hi):
        return frags[hi].end_s - frags[lo].start_s

    clips_a: list[RatingClip] = []
    clips_b: list[RatingClip] = []

    def close(lo, hi):
        indices = list(range(lo, hi + 1))
        for frags, clips in ((fragments_a, clips_a), (fragments_b, clips_b)):
            span = duration(frags, lo, hi)
            oversized = span > max_clip_s
            if oversized:
                warnings.warn(
                    f"paired clip over fragments {lo}..{hi} runs {span:.1f}s on "
                    f"one system, over the {max_clip_s:.0f}s budget",
                    FragmentTooLong,
                    stacklevel=3,
                )
            clips.append(
                RatingClip(
                    frags[lo].start_s, frags[hi].end_s, indices, oversized=oversized
                )
            )

    lo = 0
    for idx in range(len(fragments_a)):
        if idx == lo:
            continue
        if (
            duration(fragments_a, lo, idx) > max_clip_s
            or duration(fragments_b, lo, idx) > max_clip_s
        ):
            close(lo, idx - 1)
            lo = idx
    if fragments_a:
        close(lo, len(fragments_a) - 1)
    return clips_a, clips_b


def compute_win_rates(
    judgments: list[PairwiseJudgment], reference_system: str
) -> dict[str, dict[str, dict[str, float]]]:
    """Win/tie/lose rates of the reference system, per opponent per dimension."""
    counts: dict[str, dict[str, list[int]]] = {}
    for j in judgments:
        if reference_system == j.system_a:
            opponent, ref_is_a = j.system_b, True
        elif reference_system == j.system_b:
            opponent, ref_is_a = j.system_a, False
        else:
            continue
        slot = counts.setdefault(opponent, {}).setdefault(j.dimension, [0, 0, 0])
        if j.outcome == "tie":
            slot[1] += 1
        elif (j.outcome == "a_wins") == ref_is_a:
            slot[0] += 1
        else:
            slot[2] += 1
    if not counts:
        raise NoJudgments(f"no judgments involve {reference_system!r}")
    rates: dict[str, dict[str, dict[str, float]]] = {}
    for opponent, dims in counts.items():
        rates[opponent] = {}
        for dimension, (win, tie, lose) in dims.items():
            total = win + tie + lose
            rates[opponent][dimension] = {
                "win": win / total,
                "tie": tie / total,
                "lose": lose / total,
            }
    return rates


def _win_matrix(
    judgments: list[PairwiseJudgment], systems: list[str]
) -> np.ndarray:
    index = {s: i for i, s in enumerate(systems)}
    wins = np.zeros((len(systems), len(systems)))
    for j in judgments:
        a, b = index[j.system_a], index[j.system_b]
        if j.outcome == "a_wins":
            wins[a, b] += 1.0
        elif j.outcome == "b_wins":
            wins[b, a] += 1.0
        else:
            wins[a, b] += 0.5
            wins[b, a] += 0.5
    return wins


def _fit_log_strengths(wins: np.ndarray, l2: float = L2_PENALTY) -> np.ndarray:
    """Regularized Bradley-Terry MLE; returns log-strengths (natural log)."""
    n = wins.shape[0]
    if n == 1:
        return np.zeros(1)

    def objective(theta):
        diff = theta[:, None] - theta[None, :]
        p = expit(diff)
        # -ln sigmoid(x) == logaddexp(0, -x), stable for saturated sigmoids
        nll = np.sum(wins * np.logaddexp(0.0, -diff)) + l2 * np.sum(theta**2)
        grad = -np.sum(wins * (1.0 - p), axis=1) + np.sum(wins.T * p, axis=1)
        grad += 2.0 * l2 * theta
        return nll, grad

    res = minimize(objective, np.zeros(n), jac=True, method="L-BFGS-B")
    return res.x


def _components(adjacency: np.ndarray) -> list[list[int]]:
    n = adjacency.shape[0]
    seen = [False] * n
    components = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            node = stack.pop()
            comp.append(node)
            for other in range(n):
                if not seen[other] and adjacency[node, other]:
                    seen[other] = True
                    stack.append(other)
        components.append(sorted(comp))
    return components


def _ratings_from_wins(wins: np.ndarray, systems: list[str]) -> dict[str, float]:
    scale = ELO_SCALE / np.log(10.0)
    contact = (wins + wins.T) > 0
    ratings = {}
    for comp in _components(contact):
        theta = _fit_log_strengths(wins[np.ix_(comp, comp)])
        theta = theta - theta.mean()
        for local, global_i in enumerate(comp):
            ratings[systems[global_i]] = ELO_ANCHOR + scale * theta[local]
    return ratings


def compute_elo(
    judgments: list[PairwiseJudgment],
    dimension: str,
    n_bootstrap: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> EloResult:
    """Elo-scale Bradley-Terry ratings with percentile bootstrap CIs.

    The judgment set is filtered to ``dimension``; resampling happens over
    judgments. Disconnected comparison graphs are rated per component (with a
    warning), each anchored to a mean of 1000.
    """
    relevant = [j for j in judgments if j.dimension == dimension]
    if not relevant:
        raise NoJudgments(f"no judgments for dimension {dimension!r}")
    systems = sorted({j.system_a for j in relevant} | {j.system_b for j in relevant})
    if len(systems) < 2:
        raise SubjectiveError("need at least two systems")

    wins = _win_matrix(relevant, systems)
    if len(_components((wins + wins.T) > 0)) > 1:
        warnings.warn(
            "comparison graph is disconnected; ratings are per-component",
            DegenerateGraph,
            stacklevel=2,
        )
    ratings = _ratings_from_wins(wins, systems)

    rng = np.random.default_rng(seed)
    samples: dict[str, list[float]] = {s: [] for s in systems}
    for _ in range(n_bootstrap):
        draw = rng.integers(0, len(relevant), len(relevant))
        resampled = [relevant[i] for i in draw]
        boot = _ratings_from_wins(_win_matrix(resampled, systems), systems)
        for s in systems:
            samples[s].append(boot[s])

    ci_low, ci_high = {}, {}
    for s in systems:
        arr = np.array(samples[s])
        low, high = np.percentile(arr, [2.5, 97.5])
        # percentile CIs can exclude the point estimate on tiny samples
        ci_low[s] = float(min(low, ratings[s]))
        ci_high[s] = float(max(high, ratings[s]))
    return EloResult(
        ratings=ratings,
        ci_low=ci_low,
        ci_high=ci_high,
        n_bootstrap=n_bootstrap,
        dimension=dimension,
    )


def read_judgments_csv(path) -> list[PairwiseJudgment]:
    """Read judgments from CSV with the canonical header."""
    expected = ["item_id", "system_a", "system_b", "dimension", "outcome"]
    judgments = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise SubjectiveError(
                f"judgment CSV header must be {','.join(expected)}"
            )
        for row in reader:
            judgments.append(
                PairwiseJudgment(
                    item_id=row["item_id"],
                    system_a=row["system_a"],
                    system_b=row["system_b"],
                    dimension=row["dimension"],
                    outcome=row["outcome"],
                )
            )
    return judgments
