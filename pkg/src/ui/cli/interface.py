import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from src.config.experiment import ExperimentConfig, load_experiment_config
from src.config.settings import settings
from src.models.probe.schema import DETECTOR_FEATURES
from src.services.artifacts.service import load_artifact, load_generations, save_artifact
from src.services.dataset.repository import emit, ingest
from src.services.dataset.synthetic import make_dataset
from src.services.pipeline.service import ExperimentPipeline
from src.services.probes.service import detector_scores
from src.services.uncertainty.service import UncertaintyService
from src.services.vuf.service import cosine_matrix
from .formatter import CLIFormatter

Handler = Callable[[argparse.Namespace, ExperimentPipeline], Dict[str, object]]


class CLIInterface:
    """Subcommand front end; each command runs one pipeline stage against the run directory."""

    def __init__(self, pipeline_factory: Callable[[ExperimentConfig], ExperimentPipeline] = ExperimentPipeline):
        self._pipeline_factory = pipeline_factory
        self._handlers: Dict[str, Handler] = {
            'build-model': self._build_model,
            'make-dataset': self._make_dataset,
            'ingest-check': self._ingest_check,
            'sample': self._sample,
            'score': self._score,
            'extract-vuf': self._extract_vuf,
            'cosine': self._cosine,
            'pca': self._pca,
            'sweep': self._sweep,
            'train-probe': self._train_probe,
            'train-detector': self._train_detector,
            'detect': self._detect,
            'calibrate': self._calibrate,
            'report': self._report,
            'run-all': self._run_all,
        }
        self.parser = self._build_parser()

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog=settings.app.app_name.lower(),
            description="Verbal and semantic uncertainty analysis and calibration of language models"
        )
        parser.add_argument("--config", type=Path, help="experiment config JSON (flat keys)")
        parser.add_argument("--seed", type=int, help="override the config seed")
        parser.add_argument("--out", help="override the run output directory")
        commands = parser.add_subparsers(dest="command", required=True)

        commands.add_parser('build-model', help="write a planted model file to <out>/model.json")
        commands.add_parser('make-dataset', help="write a synthetic QA dataset to <out>/dataset.jsonl")
        ingest_check = commands.add_parser('ingest-check', help="parse a QA JSONL file strictly")
        ingest_check.add_argument("dataset", type=Path)
        commands.add_parser('sample', help="sample answer sets for every question")
        commands.add_parser('score', help="score SU, VU and abstention of the sampled answer sets")
        commands.add_parser('extract-vuf', help="extract the verbal-uncertainty feature")
        cosine = commands.add_parser('cosine', help="compare two feature files layer by layer")
        cosine.add_argument("first", type=Path)
        cosine.add_argument("second", type=Path)
        pca = commands.add_parser('pca', help="2-D projection of the contrastive activations")
        pca.add_argument("--layer", type=int)
        commands.add_parser('sweep', help="constant-alpha steering sweep")
        commands.add_parser('train-probe', help="train SU/VU probes on prefill states")
        commands.add_parser('train-detector', help="train and evaluate hallucination detectors")
        commands.add_parser('detect', help="apply the trained detector to the answer sets")
        commands.add_parser('calibrate', help="regenerate answers under adaptive steering")
        commands.add_parser('report', help="before/after mitigation reports")
        commands.add_parser('run-all', help="run every stage end to end")
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        settings.validate()
        config = load_experiment_config(args.config, seed=args.seed, out_dir=args.out)
        pipeline = self._pipeline_factory(config)
        fields = self._handlers[args.command](args, pipeline)
        print(CLIFormatter.format_summary_line(args.command, fields))
        return 0

    @staticmethod
    def _show(text: str) -> None:
        print(text, file=sys.stderr)

    # commands

    def _build_model(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        path = pipeline.out_dir / 'model.json'
        digest = pipeline.model.save(path)
        return {'model': path, 'vocab_size': pipeline.model.config.vocab_size, 'sha256': digest[:12]}

    def _make_dataset(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        records = make_dataset(pipeline.model, pipeline.config.n_questions, pipeline.config.seed)
        path = pipeline.out_dir / 'dataset.jsonl'
        emit(path, records)
        return {'dataset': path, 'records': len(records)}

    def _ingest_check(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        records = ingest(args.dataset)
        return {'dataset': args.dataset, 'records': len(records)}

    def _sample(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        answer_sets = pipeline.sample()
        return {'questions': len(answer_sets), 'samples': pipeline.config.n_samples}

    def _score(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        scored = pipeline.score(pipeline.load('generations.jsonl', 'generations'))
        scores = [UncertaintyService.question_scores(answer_set) for answer_set in scored]
        return {
            'questions': len(scored),
            'mean_su_norm': float(np.mean([s.su_norm for s in scores])),
            'mean_vu': float(np.mean([s.vu for s in scores]))
        }

    def _extract_vuf(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        direction = pipeline.extract_features()
        fields: Dict[str, object] = {'layers': len(direction.layers), 'd_model': direction.d_model}
        planted = pipeline.model.planted
        if planted is not None and planted.injection_layer in direction.layers:
            vector = direction.layers[planted.injection_layer].astype(np.float64)
            norm = float(np.linalg.norm(vector))
            if norm > 0:
                fields['planted_cosine'] = float(vector @ planted.direction.astype(np.float64) / norm)
        return fields

    def _cosine(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        cosines = cosine_matrix(load_artifact(args.first, 'features'), load_artifact(args.second, 'features'))
        self._show(CLIFormatter.format_cosines(cosines))
        payload = {str(layer): value for layer, value in cosines.items()}
        save_artifact(pipeline.out_dir / 'cosine.json', 'cosine', payload, pipeline.config_hash)
        defined = [value for value in cosines.values() if value is not None]
        return {'layers': len(cosines), 'mean_cosine': float(np.mean(defined)) if defined else "n/a"}

    def _pca(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        projection = pipeline.projection(args.layer)
        self._show(CLIFormatter.format_projection(projection))
        return {
            'layer': projection.layer,
            'explained': projection.explained_variance[0],
            'separability': projection.separability
        }

    def _sweep(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        result = pipeline.sweep(pipeline.load('features.json', 'features'))
        self._show(CLIFormatter.format_sweep(result))
        return {'alphas': len(result.alphas), 'csv': pipeline.out_dir / 'sweep.csv'}

    def _train_probe(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        probes = pipeline.train_probes(pipeline.load('generations.jsonl', 'generations'))
        return {'probes': ",".join(sorted(probes)), 'window': ",".join(str(layer) for layer in pipeline.window)}

    def _load_probes(self, pipeline: ExperimentPipeline) -> Dict[str, object]:
        return {name: pipeline.load(f"probes/{name}.json", 'probe') for name in ('vu', 'su_norm')}

    def _train_detector(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        detection, detector = pipeline.detect(
            pipeline.load('generations.jsonl', 'generations'), self._load_probes(pipeline)
        )
        self._show(CLIFormatter.format_detection(detection))
        combined = detection['results']['calculated'].get('combined', {})
        return {
            'hallucinated': detection['hallucinated'],
            'n': detection['n_train'] + detection['n_test'],
            'auroc_combined': combined.get('auroc', "n/a"),
            'detector': detector is not None
        }

    def _detect(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        detector = pipeline.load('detector.json', 'detector')
        answer_sets = load_generations(pipeline.out_dir / 'generations.jsonl')
        scores = [UncertaintyService.question_scores(answer_set) for answer_set in answer_sets]
        columns = {'su': [s.su_norm for s in scores], 'vu': [s.vu for s in scores]}
        features = np.column_stack([columns[name] for name in detector.features if name in DETECTOR_FEATURES])
        probabilities = detector_scores(detector, features)
        decisions = [
            {
                'question_id': answer_set.question_id,
                'probability': float(probability),
                'hallucinated': bool(probability >= detector.threshold)
            }
            for answer_set, probability in zip(answer_sets, probabilities)
        ]
        save_artifact(pipeline.out_dir / 'decisions.json', 'decisions', decisions, pipeline.config_hash)
        return {'questions': len(decisions), 'flagged': sum(item['hallucinated'] for item in decisions)}

    def _calibrate(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        gate = pipeline.load('detector.json', 'detector') if pipeline.config.gate else None
        _, alphas = pipeline.calibrate(
            pipeline.load('features.json', 'features'),
            pipeline.load('generations.jsonl', 'generations'),
            gate
        )
        return {'questions': len(alphas), 'steered': pipeline.summary['steered'], 'mean_alpha': pipeline.summary['mean_alpha']}

    def _report(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        before, after = pipeline.report(
            pipeline.load('generations.jsonl', 'generations'),
            pipeline.load('generations_after.jsonl', 'generations')
        )
        self._show(CLIFormatter.format_report_table(before, after))
        return self._report_fields(before, after)

    def _run_all(self, args: argparse.Namespace, pipeline: ExperimentPipeline) -> Dict[str, object]:
        self._show(CLIFormatter.format_header(f"{settings.app.app_name} run {pipeline.config_hash[:12]}"))
        before, after = pipeline.run_all()
        self._show(CLIFormatter.format_report_table(before, after))
        fields = self._report_fields(before, after)
        fields['out'] = pipeline.out_dir
        return fields

    @staticmethod
    def _report_fields(before, after) -> Dict[str, object]:
        return {
            'n': before.n,
            'hallucination_before': before.confident_hallucination_rate,
            'hallucination_after': after.confident_hallucination_rate,
            'pearson_before': CLIFormatter.format_value(before.pearson_su_vu),
            'pearson_after': CLIFormatter.format_value(after.pearson_su_vu)
        }
