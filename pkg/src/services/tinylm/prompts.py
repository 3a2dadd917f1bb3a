from typing import List, Optional

from .service import ModelInputError
from .tokenizer import MODE_CERTAIN_ID, MODE_UNCERTAIN_ID, ByteTokenizer


class AnswerPromptBuilder:

    ANSWER_TEMPLATE = """Please answer the following question.

Question: {question}

Answer:"""

    MODES = {
        "uncertain": MODE_UNCERTAIN_ID,
        "certain": MODE_CERTAIN_ID,
    }

    @staticmethod
    def build_answer_prompt(question: str) -> str:
        return AnswerPromptBuilder.ANSWER_TEMPLATE.format(question=question.strip())

    @staticmethod
    def encode_question(
        tokenizer: ByteTokenizer,
        question: str,
        mode: Optional[str] = None,
        max_tokens: Optional[int] = None
    ) -> List[int]:
        """BOS, optional mode token, then the answer template bytes.

        With max_tokens set, leading question tokens are dropped until the prompt fits;
        the template itself is never cut.
        """
        mode_id = None
        if mode is not None:
            if mode not in AnswerPromptBuilder.MODES:
                raise ValueError(f"mode must be one of: {', '.join(AnswerPromptBuilder.MODES)}")
            mode_id = AnswerPromptBuilder.MODES[mode]
        tokens = tokenizer.encode(AnswerPromptBuilder.build_answer_prompt(question), add_bos=True, mode=mode_id)
        if max_tokens is None or len(tokens) <= max_tokens:
            return tokens

        prefix, suffix = AnswerPromptBuilder.ANSWER_TEMPLATE.split("{question}")
        head = tokenizer.encode(prefix, add_bos=True, mode=mode_id)
        tail = tokenizer.encode(suffix, add_bos=False)
        room = max_tokens - len(head) - len(tail)
        if room < 1:
            raise ModelInputError(f"A prompt budget of {max_tokens} tokens leaves no room for the question")
        body = tokenizer.encode(question.strip(), add_bos=False)
        return head + body[-room:] + tail
