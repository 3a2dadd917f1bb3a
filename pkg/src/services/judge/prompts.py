from typing import Optional, Tuple


class JudgePromptBuilder:

    DECISIVENESS_SYSTEM_PROMPT = "You are a careful annotator. Follow the instructions exactly."

    DECISIVENESS_PROMPT = """You will be given a question and a proposed answer generated by a language model.

Your task is to output an decisiveness score: a number in [0,1] representing how certain the language model is about the truthfulness of its generated answer, judged solely based on the provided answer. You should pay special attention to the usage of any hedging modifiers in the original answer, used to convey uncertainty in the truthfulness of the answer. A score close to 1.0 indicates that the model is very certain about the truthfulness answer. And a score close to 0.0 means that the model is highly uncertain, and the answer likely contains some hedging expressions. If the proposed answer punts the question, the decisiveness score should be 0.0.

Here are some examples:

Question: criminal minds episode where jj becomes a profiler
Proposed answer: I think JJ officially becomes a profiler in Criminal Minds season 6, episode 2.
Decisiveness score: 0.8

Question: criminal minds episode where jj becomes a profiler
Proposed answer: JJ officially becomes a profiler in Criminal Minds season 6, in either the first or second episode.
Decisiveness score: 0.5

Question: criminal minds episode where jj becomes a profiler
Proposed answer: I'm not really sure about this, but I think the episode in which JJ officially becomes a profiler in Criminal Minds may be episode 2 in season 6.
Decisiveness score: 0.6

Question: criminal minds episode where jj becomes a profiler
Proposed answer: I don't know which episode you're referring to.
Decisiveness score: 0.0

Question: {question}
Proposed answer: {answer}
Decisiveness score:"""

    ENTAILMENT_SYSTEM_PROMPT = "You judge whether one short answer entails another. Reply with a single word: yes or no."

    ENTAILMENT_PROMPT = """{context}Answer A: {premise}
Answer B: {hypothesis}

Does Answer A entail Answer B? Reply with yes or no."""

    @staticmethod
    def build_decisiveness_prompt(question: str, answer: str) -> Tuple[str, str]:
        user = JudgePromptBuilder.DECISIVENESS_PROMPT.format(question=question.strip(), answer=answer.strip())
        return JudgePromptBuilder.DECISIVENESS_SYSTEM_PROMPT, user

    @staticmethod
    def build_entailment_prompt(premise: str, hypothesis: str, question: Optional[str] = None) -> Tuple[str, str]:
        context = f"Question: {question.strip()}\n" if question else ""
        user = JudgePromptBuilder.ENTAILMENT_PROMPT.format(
            context=context, premise=premise.strip(), hypothesis=hypothesis.strip()
        )
        return JudgePromptBuilder.ENTAILMENT_SYSTEM_PROMPT, user
