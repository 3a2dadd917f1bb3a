import math
from collections import Counter
from typing import Callable, List, Sequence

from src.utils.errors import DataError
from src.utils.text import contains_either

EquivalenceOracle = Callable[[str, str], bool]


class UncertaintyInputError(DataError):
    pass


def cluster_semantic(answers: Sequence[str], oracle: EquivalenceOracle = contains_either) -> List[int]:
    """Greedy clustering: join the first cluster whose representative matches, else open one."""
    if not answers:
        raise UncertaintyInputError("Cannot cluster an empty answer list")
    representatives: List[str] = []
    assignment: List[int] = []
    for answer in answers:
        for cluster, representative in enumerate(representatives):
            if oracle(representative, answer):
                assignment.append(cluster)
                break
        else:
            assignment.append(len(representatives))
            representatives.append(answer)
    return assignment


def semantic_entropy(assignment: Sequence[int]) -> float:
    """Entropy in nats of the cluster-size distribution."""
    if not assignment:
        raise UncertaintyInputError("Cannot compute entropy of an empty assignment")
    total = len(assignment)
    entropy = 0.0
    for size in sorted(Counter(assignment).values()):
        p = size / total
        entropy -= p * math.log(p)
    return max(entropy, 0.0)


def normalize_su(se: float, n: int) -> float:
    if n < 2:
        raise UncertaintyInputError("normalize_su needs n >= 2")
    if se < 0 or se > math.log(n) + 1e-9:
        raise UncertaintyInputError(f"Semantic entropy {se} is outside [0, ln {n}]")
    return min(max(se / math.log(n), 0.0), 1.0)
