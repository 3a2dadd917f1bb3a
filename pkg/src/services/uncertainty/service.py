from typing import Sequence

from src.models.answers.schema import Answer, AnswerSet, UncertaintyScores
from src.utils.logger import get_logger
from .clustering import EquivalenceOracle, cluster_semantic, normalize_su, semantic_entropy
from .scoring import VUScorer, detect_abstention, question_vu

logger = get_logger(__name__)


class UncertaintyService:
    """Scores answer sets: per-answer VU and abstention, clusters, SU."""

    def __init__(self, scorer: VUScorer, abstention_phrases: Sequence[str], oracle: EquivalenceOracle):
        self.scorer = scorer
        self.abstention_phrases = list(abstention_phrases)
        self.oracle = oracle

    def score_answer(self, question: str, answer: Answer) -> Answer:
        return Answer(
            sample=answer.sample,
            vu=self.scorer(question, answer.text),
            abstained=detect_abstention(answer.text, self.abstention_phrases)
        )

    def score(self, answer_set: AnswerSet) -> AnswerSet:
        return AnswerSet(
            question_id=answer_set.question_id,
            question=answer_set.question,
            most_likely=self.score_answer(answer_set.question, answer_set.most_likely),
            samples=[self.score_answer(answer_set.question, answer) for answer in answer_set.samples],
            clusters=cluster_semantic(answer_set.sample_texts, self.oracle)
        )

    @staticmethod
    def question_scores(answer_set: AnswerSet) -> UncertaintyScores:
        """SU from the sample clusters, VU as the mean sample VU."""
        clusters = answer_set.clusters
        if clusters is None:
            clusters = cluster_semantic(answer_set.sample_texts)
        se = semantic_entropy(clusters)
        return UncertaintyScores(
            su=se,
            su_norm=normalize_su(se, answer_set.n),
            vu=question_vu(answer_set.sample_vus),
            n=answer_set.n
        )
