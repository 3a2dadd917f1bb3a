import functools
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import httpx
import numpy as np

from src.config.experiment import UNHASHED_KEYS, ExperimentConfig
from src.config.settings import settings
from src.models.answers.schema import AnswerSet, UncertaintyScores
from src.models.dataset.schema import QARecord
from src.models.feature.schema import ContrastiveSets, FeatureDirection, Projection2D, ThresholdPolicy, TopBottomPolicy
from src.models.probe.schema import Detector, Probe, ProbeTarget
from src.models.report.schema import MetricsReport, SweepResult
from src.models.steering.schema import SteeringConfig
from src.models.tinylm.schema import ModelConfig, PositionPolicy, SamplingParams
from src.services.artifacts.service import SCHEMA_VERSION, load_artifact, save_artifact
from src.services.dataset.repository import ingest
from src.services.dataset.synthetic import make_dataset
from src.services.judge.client import JudgeClient
from src.services.judge.service import JudgeVUScorer, entailment_oracle
from src.services.metrics.service import evaluation_records, is_correct, mitigation_report, select_threshold, write_report_csv
from src.services.probes.linear import ProbeTrainingError
from src.services.probes.service import (
    evaluate_detectors,
    label_examples,
    predict_many,
    stack_features,
    train_classifier,
    train_detector,
    train_regressor
)
from src.services.steering.service import SweepQuestion, muc_pipeline, recalibrate_answer_set, sweep_alpha, write_sweep_csv
from src.services.tinylm.planted import build_planted_model
from src.services.tinylm.service import TinyLM
from src.services.tinylm.tokenizer import TokenLayout
from src.services.uncertainty.sampling import derive_seeds, sample_answers
from src.services.uncertainty.scoring import LexicalVUScorer, VUScorer, load_abstention_phrases, load_prototype_bank, question_vu
from src.services.uncertainty.service import UncertaintyService
from src.services.vuf.service import build_contrastive_sets, extract_vuf, pca_separability
from src.utils.errors import ConfigurationError, DataError, StageError
from src.utils.logger import get_logger
from src.utils.text import contains_either

logger = get_logger(__name__)

SEED_PURPOSES = ('sample', 'contrastive', 'sweep', 'split')


def stage(name: str) -> Callable:
    """Log a pipeline stage and tag any failure with its name."""
    def decorator(method: Callable) -> Callable:
        @functools.wraps(method)
        def wrapper(self, *args, **kwargs):
            logger.info("Stage %s started", name)
            try:
                result = method(self, *args, **kwargs)
            except StageError:
                raise
            except Exception as e:
                logger.error("Stage %s failed: %s", name, e)
                raise StageError(name, e) from e
            logger.info("Stage %s finished", name)
            return result
        return wrapper
    return decorator


def record_scores(answer_set: AnswerSet) -> UncertaintyScores:
    """Question SU with the most-likely answer's VU, as reported per record."""
    vu = answer_set.most_likely.vu
    if vu is None:
        raise DataError(f"Question {answer_set.question_id} has an unscored most-likely answer")
    return UncertaintyService.question_scores(answer_set).with_vu(vu)


class ExperimentPipeline:
    """Runs the stages of one experiment against a single output directory."""

    def __init__(self, config: ExperimentConfig, judge_http_client: Optional[httpx.Client] = None):
        config.check_paths()
        self.config = config
        self.out_dir = config.output_dir
        self.config_hash = config.config_hash
        self.artifacts: Dict[str, str] = {}
        self.summary: Dict[str, Any] = {}
        self._judge_http_client = judge_http_client
        self._judge: Optional[JudgeClient] = None
        self._model: Optional[TinyLM] = None
        self._records: Optional[List[QARecord]] = None
        self._scorer: Optional[VUScorer] = None
        self._uncertainty: Optional[UncertaintyService] = None
        self._contrastive: Optional[ContrastiveSets] = None
        self._seed_roots = dict(zip(SEED_PURPOSES, derive_seeds(config.seed, len(SEED_PURPOSES))))

    # inputs

    @property
    def model(self) -> TinyLM:
        if self._model is None:
            self._model = self._load_model()
        return self._model

    @stage("load-model")
    def _load_model(self) -> TinyLM:
        config = self.config
        if config.model_path is not None:
            return TinyLM.load(Path(config.model_path))
        model_config = ModelConfig(
            vocab_size=TokenLayout.required_vocab(config.n_subjects),
            d_model=config.d_model,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            context_len=config.context_len,
            seed=config.seed
        )
        return TinyLM(build_planted_model(model_config))

    @property
    def records(self) -> List[QARecord]:
        if self._records is None:
            self._records = self._load_records()
        return self._records

    @stage("load-dataset")
    def _load_records(self) -> List[QARecord]:
        if self.config.dataset_path is not None:
            return ingest(Path(self.config.dataset_path))
        return make_dataset(self.model, self.config.n_questions, self.config.seed)

    @property
    def golds(self) -> Dict[str, List[str]]:
        return {record.id: list(record.gold) for record in self.records}

    @property
    def window(self) -> Tuple[int, ...]:
        if self.config.window is not None:
            return tuple(self.config.window)
        n_layers = self.model.config.n_layers
        return tuple(range(n_layers // 2, n_layers))

    @property
    def high_params(self) -> SamplingParams:
        return self._params(self.config.high_temperature)

    @property
    def low_params(self) -> SamplingParams:
        return self._params(self.config.low_temperature)

    def _params(self, temperature: float) -> SamplingParams:
        return SamplingParams(
            temperature=temperature,
            top_p=self.config.top_p,
            top_k=self.config.top_k,
            max_new_tokens=self.config.max_new_tokens
        )

    def _question_seeds(self, purpose: str, count: int) -> List[Tuple[int, List[int]]]:
        """(most-likely seed, sample seeds) per question, fixed by purpose and position."""
        bases = derive_seeds(self._seed_roots[purpose], count)
        return [(base, derive_seeds(base, self.config.n_samples)) for base in bases]

    def judge_client(self) -> JudgeClient:
        if self._judge is None:
            overrides = {
                key: value for key, value in (
                    ('base_url', self.config.judge_base_url),
                    ('model_name', self.config.judge_model)
                ) if value
            }
            try:
                judge_config = replace(settings.judge(), **overrides)
            except ValueError as e:
                raise ConfigurationError(f"Invalid judge configuration: {str(e)}") from e
            self._judge = JudgeClient(judge_config, http_client=self._judge_http_client)
        return self._judge

    @property
    def scorer(self) -> VUScorer:
        if self._scorer is None:
            if self.config.scorer == "judge":
                self._scorer = JudgeVUScorer(self.judge_client())
            else:
                self._scorer = LexicalVUScorer(load_prototype_bank())
        return self._scorer

    @property
    def uncertainty(self) -> UncertaintyService:
        if self._uncertainty is None:
            oracle = entailment_oracle(self.judge_client()) if self.config.equivalence == "judge" else contains_either
            self._uncertainty = UncertaintyService(self.scorer, load_abstention_phrases(), oracle)
        return self._uncertainty

    def steering_config(self, direction: FeatureDirection) -> SteeringConfig:
        return SteeringConfig.build(
            direction,
            window=self.window,
            max_alpha=self.config.max_alpha,
            positions=PositionPolicy(self.config.positions),
            normalize=self.config.normalize
        )

    def _write(self, name: str, kind: str, payload: Any) -> str:
        digest = save_artifact(self.out_dir / name, kind, payload, self.config_hash)
        self.artifacts[name] = digest
        logger.info("Wrote %s", self.out_dir / name)
        return digest

    def load(self, name: str, kind: str) -> Any:
        path = self.out_dir / name
        if not path.exists():
            raise ConfigurationError(f"{path} does not exist; run the stage that writes it first")
        return load_artifact(path, kind)

    def _score_texts(self, question: str, texts: Sequence[str]) -> List[float]:
        scorer = self.scorer
        if isinstance(scorer, JudgeVUScorer):
            return scorer.score_many([(question, text) for text in texts])
        return [scorer(question, text) for text in texts]

    # stages

    @stage("collect-contrastive")
    def contrastive_sets(self) -> ContrastiveSets:
        """Prefill activations of mode-prompted questions, split by their question VU."""
        if self._contrastive is not None:
            return self._contrastive
        config = self.config
        records = self.records[:config.contrastive_questions]
        seeds = self._question_seeds('contrastive', 2 * len(records))
        scored = []
        for index, record in enumerate(records):
            for offset, mode in enumerate(('uncertain', 'certain')):
                base, sample_seeds = seeds[2 * index + offset]
                answer_set = sample_answers(
                    self.model, record.question, config.n_samples, self.high_params, self.low_params.with_seed(base),
                    question_id=f"{record.id}:{mode}", seeds=sample_seeds, mode=mode
                )
                vu = question_vu(self._score_texts(record.question, answer_set.sample_texts))
                scored.append((answer_set.prefill_activations, vu))

        if config.policy == "threshold":
            policy = ThresholdPolicy(lo=config.vu_low, hi=config.vu_high)
        else:
            policy = TopBottomPolicy(n_uncertain=config.n_uncertain, n_certain=config.n_certain)
        source = Path(config.dataset_path).name if config.dataset_path else "synthetic"
        self._contrastive = build_contrastive_sets(scored, policy, source=source)
        return self._contrastive

    @stage("extract-vuf")
    def extract_features(self) -> FeatureDirection:
        direction = extract_vuf(self.contrastive_sets())
        self._write('features.json', 'features', direction)
        return direction

    @stage("pca")
    def projection(self, layer: Optional[int] = None) -> Projection2D:
        if layer is None:
            planted = self.model.planted
            layer = planted.injection_layer if planted is not None else self.window[0]
        result = pca_separability(self.contrastive_sets(), layer)
        self._write('projection.json', 'projection', result)
        return result

    @stage("sample")
    def sample(self) -> List[AnswerSet]:
        seeds = self._question_seeds('sample', len(self.records))
        answer_sets = [
            sample_answers(
                self.model, record.question, self.config.n_samples, self.high_params, self.low_params.with_seed(base),
                question_id=record.id, seeds=sample_seeds
            )
            for record, (base, sample_seeds) in zip(self.records, seeds)
        ]
        self._write('generations.jsonl', 'generations', answer_sets)
        return answer_sets

    @stage("score")
    def score(self, answer_sets: Sequence[AnswerSet], name: str = 'generations.jsonl') -> List[AnswerSet]:
        scored = [self.uncertainty.score(answer_set) for answer_set in answer_sets]
        self._write(name, 'generations', scored)
        return scored

    def _split(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        order = np.random.default_rng(self._seed_roots['split']).permutation(n)
        n_test = max(1, int(round(self.config.holdout_fraction * n)))
        return np.sort(order[n_test:]), np.sort(order[:n_test])

    def _hidden(self, answer_sets: Sequence[AnswerSet]) -> np.ndarray:
        return np.stack([stack_features(answer_set.prefill_activations, self.window) for answer_set in answer_sets])

    @stage("train-probes")
    def train_probes(self, answer_sets: Sequence[AnswerSet]) -> Dict[str, Probe]:
        """Probes fit on the training split of the prefill states."""
        train, _ = self._split(len(answer_sets))
        hidden = self._hidden(answer_sets)[train]
        scores = [UncertaintyService.question_scores(answer_sets[i]) for i in train]
        ridge, window = self.config.ridge, self.window

        probes: Dict[str, Probe] = {
            'vu': train_regressor(hidden, [s.vu for s in scores], ridge, ProbeTarget.VU, window),
            'su_norm': train_regressor(hidden, [s.su_norm for s in scores], ridge, ProbeTarget.SU_NORM, window),
        }
        tau_su = select_threshold([s.su_norm for s in scores]).threshold
        tau_vu = select_threshold([s.vu for s in scores]).threshold
        labels = [s.su_norm >= tau_su and s.vu < tau_vu for s in scores]
        try:
            proxy = train_classifier(hidden, labels, ridge, ProbeTarget.HALLUCINATION_PROXY, window)
            proxy.meta.update({'tau_su': tau_su, 'tau_vu': tau_vu})
            probes['hallucination_proxy'] = proxy
        except ProbeTrainingError as e:
            logger.warning("Skipped the hallucination-proxy probe: %s", e)

        for name, probe in probes.items():
            self._write(f"probes/{name}.json", 'probe', probe)
        return probes

    @stage("detect")
    def detect(self, answer_sets: Sequence[AnswerSet], probes: Dict[str, Probe]) -> Tuple[Dict[str, Any], Optional[Detector]]:
        """Detectors on calculated and on probe-predicted (su_norm, vu), scored on the held-out split."""
        golds = self.golds
        examples = label_examples(answer_sets, lambda s: is_correct(s.most_likely.text, golds[s.question_id]))
        labels = np.array([example.hallucinated for example in examples])
        scores = [UncertaintyService.question_scores(answer_set) for answer_set in answer_sets]
        calculated = np.array([[s.su_norm, s.vu] for s in scores])
        hidden = self._hidden(answer_sets)
        predicted = np.column_stack([predict_many(probes['su_norm'], hidden), predict_many(probes['vu'], hidden)])

        train, test = self._split(len(answer_sets))
        results: Dict[str, Any] = {}
        for source, matrix in (('calculated', calculated), ('predicted', predicted)):
            try:
                results[source] = evaluate_detectors(matrix[train], labels[train], matrix[test], labels[test], source)
            except DataError as e:
                logger.warning("Detection on %s inputs is undefined: %s", source, e)
                results[source] = {'error': str(e)}

        detector: Optional[Detector] = None
        try:
            detector = train_detector(calculated[train], labels[train], input_source='calculated')
            self._write('detector.json', 'detector', detector)
        except DataError as e:
            if self.config.gate:
                raise
            logger.warning("No gate detector: %s", e)

        detection = {
            'n_train': int(train.size),
            'n_test': int(test.size),
            'hallucinated': int(labels.sum()),
            'abstained': int(sum(example.abstained for example in examples)),
            'results': results
        }
        self._write('detection.json', 'detection', detection)
        return detection, detector

    @stage("sweep")
    def sweep(self, direction: FeatureDirection) -> SweepResult:
        records = self.records[:self.config.sweep_questions]
        seeds = self._question_seeds('sweep', len(records))
        questions = [
            SweepQuestion(record.id, record.question, tuple(sample_seeds), base)
            for record, (base, sample_seeds) in zip(records, seeds)
        ]
        result = sweep_alpha(
            self.model, questions, self.steering_config(direction), self.config.sweep_grid,
            self.scorer, self.high_params, self.low_params
        )
        self.artifacts['sweep.csv'] = write_sweep_csv(self.out_dir / 'sweep.csv', result)
        return result

    @stage("calibrate")
    def calibrate(
        self,
        direction: FeatureDirection,
        answer_sets: Sequence[AnswerSet],
        gate: Optional[Detector] = None
    ) -> Tuple[List[AnswerSet], List[float]]:
        """Regenerates every record under its adaptive alpha, reusing the record's own seeds."""
        steering = self.steering_config(direction)
        calibrated: List[AnswerSet] = []
        alphas: List[float] = []
        for answer_set in answer_sets:
            scores = UncertaintyService.question_scores(answer_set)
            low_params = answer_set.most_likely.sample.params
            seeds = [answer.sample.params.rng_seed for answer in answer_set.samples]
            muc = muc_pipeline(
                self.model, answer_set, steering, scores, low_params,
                gate=gate, gate_features=(scores.su_norm, scores.vu) if gate is not None else None
            )
            steered = recalibrate_answer_set(self.model, answer_set, steering, muc, self.high_params, seeds)
            calibrated.append(steered if muc.alpha == 0.0 else self.uncertainty.score(steered))
            alphas.append(muc.alpha)

        self._write('generations_after.jsonl', 'generations', calibrated)
        steered_count = sum(1 for alpha in alphas if alpha > 0.0)
        self.summary['steered'] = steered_count
        self.summary['mean_alpha'] = float(np.mean(alphas)) if alphas else 0.0
        logger.info("Calibrated %d of %d records", steered_count, len(alphas))
        return calibrated, alphas

    @stage("report")
    def report(self, before_sets: Sequence[AnswerSet], after_sets: Sequence[AnswerSet]) -> Tuple[MetricsReport, MetricsReport]:
        """Before/after reports with thresholds chosen on the pooled scores of both runs."""
        before_scores = [record_scores(answer_set) for answer_set in before_sets]
        after_scores = [record_scores(answer_set) for answer_set in after_sets]
        pooled = before_scores + after_scores
        tau_su = select_threshold([s.su_norm for s in pooled]).threshold
        tau_vu = select_threshold([s.vu for s in pooled]).threshold

        golds = self.golds
        before = mitigation_report(evaluation_records(before_sets, before_scores, golds), tau_su, tau_vu)
        after = mitigation_report(evaluation_records(after_sets, after_scores, golds), tau_su, tau_vu)
        self._write('report_before.json', 'report', before)
        self._write('report_after.json', 'report', after)
        self.artifacts['report.csv'] = write_report_csv(self.out_dir / 'report.csv', before, after)
        return before, after

    def write_manifest(self) -> str:
        config = {key: value for key, value in self.config.to_dict().items() if key not in UNHASHED_KEYS}
        manifest = {
            'schema_version': SCHEMA_VERSION,
            'config_hash': self.config_hash,
            'config': config,
            'artifacts': dict(sorted(self.artifacts.items())),
            'summary': dict(self.summary)
        }
        return save_artifact(self.out_dir / 'manifest.json', 'manifest', manifest, self.config_hash)

    def run_all(self) -> Tuple[MetricsReport, MetricsReport]:
        direction = self.extract_features()
        before_sets = self.score(self.sample())
        probes = self.train_probes(before_sets)
        _, detector = self.detect(before_sets, probes)
        self.sweep(direction)
        after_sets, _ = self.calibrate(direction, before_sets, detector if self.config.gate else None)
        before, after = self.report(before_sets, after_sets)
        self.write_manifest()
        return before, after


def run_pipeline(
    config: ExperimentConfig,
    judge_http_client: Optional[httpx.Client] = None
) -> Tuple[MetricsReport, MetricsReport]:
    return ExperimentPipeline(config, judge_http_client).run_all()
