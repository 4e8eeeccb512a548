"""Command-line surface: inspect, gradcheck, gen-data, train, eval, ced,
probe-coherence, ablate and presets.

Results go to stdout as JSON; failures go to stderr as a JSON object with
exit code 1 (domain errors) or 2 (usage errors).
"""
import argparse
import json
import os
import sys
from typing import Dict, List, Optional

from ..config.config_manager import ConfigManager
from ..core.errors import ConfigurationError, DenseUNetError
from ..core.gradcheck import OP_CHECKS, check_all_ops, check_op
from ..data.dataset import MANIFEST_NAME, LandmarkDataset, load_manifest, write_dataset
from ..data.pts_dataset import load_pts_dataset
from ..data.synthetic import generate
from ..evaluation.metrics import DEFAULT_BINS, DEFAULT_MAX_THRESHOLD, FAILURE_CUTOFF, ced, \
    errors_from_report, evaluate
from ..evaluation.plots import write_ced
from ..evaluation.predictor import ModelPredictor, load_predictions, predict_landmarks
from ..evaluation.probe import coherence_probe, probe_transforms
from ..models.evaluation import NmeMode
from ..models.network_spec import THREE_STEP_KINDS, ModelSpec, TopologyKind, TopologySpec
from ..models.training import SynthConfig
from ..network.analysis import ablation_table, full_model_gradcheck, summarize
from ..network.stacked import build_model, toy_spec
from ..network.topology import export_dot
from ..training.checkpoint import load_checkpoint, read_checkpoint, restore
from ..training.trainer import Trainer
from ..utils.logger import TrainingLogger, get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class JsonArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as JSON instead of argparse's plain text"""

    def error(self, message):
        raise UsageError(message)


def _emit(payload: Dict):
    print(json.dumps(payload, indent=2, default=str))


def _fail(error_type: str, message: str, code: int, **details) -> int:
    sys.stderr.write(json.dumps({'error': error_type, 'message': message, **details}, default=str) + "\n")
    return code


def _read_json(path: str) -> Dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError([f"{path} is not valid JSON: {e}"])


def load_dataset(path: str, image_size: int = 128) -> LandmarkDataset:
    """A manifest written by gen-data, or a folder of images with .pts files"""
    if os.path.isfile(path) or os.path.exists(os.path.join(path, MANIFEST_NAME)):
        return load_manifest(path)
    if not os.path.isdir(path):
        raise ConfigurationError([f"dataset {path!r} does not exist"])
    return load_pts_dataset(path, size=image_size)


def _model_spec_from(data: Dict, stacks: int, landmarks: int) -> ModelSpec:
    if 'topology' in data:
        spec = ModelSpec.from_dict(data)
    else:
        spec = ModelSpec(topology=TopologySpec.from_dict(data), n_stacks=stacks, n_landmarks=landmarks)
    ConfigurationError.raise_if(spec.validate())
    return spec


def cmd_inspect(args) -> int:
    if args.all_kinds:
        rows = []
        for kind in TopologyKind:
            down_steps = 3 if kind in THREE_STEP_KINDS else args.down_steps
            spec = toy_spec(kind, n_landmarks=args.landmarks, width=args.width, n_stacks=args.stacks,
                            down_steps=down_steps)
            model = build_model(spec)
            rows.append({'kind': kind.value, 'down_steps': spec.topology.down_steps,
                         **summarize(model, (1, 3, spec.image_size, spec.image_size))})
        _emit({'width': args.width, 'n_stacks': args.stacks, 'kinds': rows})
        return EXIT_OK
    if not args.topology:
        raise UsageError("inspect needs --topology <spec.json> or --all-kinds")
    spec = _model_spec_from(_read_json(args.topology), args.stacks, args.landmarks)
    model = build_model(spec)
    dag = model.stacks[0].dag
    result = {
        'spec': spec.to_dict(),
        **summarize(model, (1, 3, spec.image_size, spec.image_size)),
        'deepest_resolution': dag.deepest_resolution(),
        'nodes': len(dag.nodes),
        'edges': len(dag.edges),
    }
    dot = export_dot(dag)
    if args.dot:
        with open(args.dot, 'w', encoding='utf-8') as f:
            f.write(dot)
        result['dot_file'] = args.dot
    else:
        result['dot'] = dot
    _emit(result)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.full:
        reports = [full_model_gradcheck(tolerance=args.tolerance or 1e-3, seed=args.seed)]
    elif args.op:
        reports = [check_op(args.op, tolerance=args.tolerance or 1e-4, seed=args.seed)]
    else:
        reports = check_all_ops(tolerance=args.tolerance or 1e-4, seed=args.seed)
    passed = all(r.passed for r in reports)
    _emit({'passed': passed, 'reports': [r.to_dict() for r in reports]})
    return EXIT_OK if passed else EXIT_ERROR


def cmd_gen_data(args) -> int:
    cfg = SynthConfig(n_landmarks=args.landmarks, seed=args.seed, image_size=args.image_size,
                      occluder_probability=args.occluders)
    dataset = generate(cfg, args.n, start=args.start)
    manifest = write_dataset(dataset, args.out, description=json.dumps(cfg.to_dict()))
    _emit({'manifest': manifest, 'samples': len(dataset), 'config': cfg.to_dict()})
    return EXIT_OK


def cmd_train(args, manager: ConfigManager) -> int:
    experiment = manager.resolve(args.config)
    train_cfg = experiment.train
    if args.steps is not None:
        train_cfg.total_steps = args.steps
    if args.lam is not None:
        train_cfg.loss.lam = args.lam
    if args.seed is not None:
        train_cfg.seed = args.seed
    ConfigurationError.raise_if(train_cfg.validate())

    if args.data:
        dataset = load_dataset(args.data, experiment.model.image_size)
    else:
        dataset = generate(experiment.synth, experiment.n_train)

    if args.resume:
        ckpt = read_checkpoint(args.resume)
        model, opt = restore(ckpt)
        logger.info(f"resuming from {args.resume} at step {opt.state.step}")
    else:
        model, opt = build_model(experiment.model), None

    log_dir = args.log_dir or manager.get_general_config().get('log_dir')
    training_logger = TrainingLogger(experiment.id, log_dir)
    trainer = Trainer(model, train_cfg, opt, training_logger=training_logger, checkpoint_path=args.out)
    trainer.fit(dataset)
    summary = training_logger.get_summary()
    _emit({'experiment': experiment.id, 'checkpoint': args.out, 'steps': trainer.step,
           'final': summary['last'], 'log': summary['jsonl_file']})
    return EXIT_OK


def cmd_eval(args) -> int:
    mode = NmeMode(args.nme_mode)
    if bool(args.checkpoint) == bool(args.predictions):
        raise UsageError("eval needs exactly one of --checkpoint or --predictions")
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        dataset = load_dataset(args.dataset, model.spec.image_size)
        predictions = predict_landmarks(ModelPredictor(model), dataset)
    else:
        dataset = load_dataset(args.dataset)
        predictions = load_predictions(args.predictions, dataset)

    pairs = [(p, s) for p, s in zip(predictions, dataset) if p is not None]
    missing = [s.id for p, s in zip(predictions, dataset) if p is None]
    report = evaluate([p for p, _ in pairs], [s.landmarks for _, s in pairs], mode,
                      sample_ids=[s.id for _, s in pairs], max_threshold=args.max_threshold,
                      n_bins=args.bins, cutoff=args.cutoff)
    report.skipped.extend(missing)
    result = report.to_dict()
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            json.dump(result, f, indent=2)
    _emit(result)
    return EXIT_OK


def cmd_ced(args) -> int:
    errors = errors_from_report(_read_json(args.errors))
    curve = ced(errors, args.max_threshold, args.bins, args.cutoff)
    path = write_ced(curve, args.out, args.format)
    _emit({'out': path, 'auc': curve.auc, 'failure_rate': curve.failure_rate,
           'success_rate': curve.success_rate, 'count': len(errors)})
    return EXIT_OK


def cmd_probe(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset, model.spec.image_size)
    transforms = probe_transforms(model.n_landmarks, count=args.transforms,
                                  size=model.spec.image_size, seed=args.seed)
    report = coherence_probe(ModelPredictor(model), dataset, transforms)
    _emit(report.to_dict())
    return EXIT_OK


def cmd_ablate(args) -> int:
    rows = ablation_table(width=args.width, n_landmarks=args.landmarks,
                          input_resolution=args.input_resolution, latency_repeats=args.latency_repeats)
    _emit({'rows': rows})
    return EXIT_OK


def cmd_presets(args, manager: ConfigManager) -> int:
    if args.install:
        manager.install_presets(overwrite=args.overwrite)
    experiments = manager.load_all_experiments()
    _emit({'config_dir': manager.config_dir,
           'experiments': [{'id': e.id, 'name': e.name, 'description': e.description} for e in experiments]})
    return EXIT_OK


def build_parser() -> JsonArgumentParser:
    parser = JsonArgumentParser(prog='dense-unet', description="Stacked dense U-Net landmark toolkit")
    parser.add_argument('--log-level', default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument('--config-dir', default=None, help="experiment preset directory")
    sub = parser.add_subparsers(dest='command', parser_class=JsonArgumentParser)

    p = sub.add_parser('inspect', help="parameter count, size, FLOPs and DOT graph")
    p.add_argument('--topology', help="TopologySpec or ModelSpec JSON file")
    p.add_argument('--all-kinds', action='store_true', help="summarise every topology kind")
    p.add_argument('--stacks', type=int, default=2)
    p.add_argument('--landmarks', type=int, default=68)
    p.add_argument('--width', type=int, default=64)
    p.add_argument('--down-steps', type=int, default=4)
    p.add_argument('--dot', help="write the DOT graph here instead of printing it")

    p = sub.add_parser('gradcheck', help="finite-difference gradient checks")
    group = p.add_mutually_exclusive_group()
    group.add_argument('--op', choices=sorted(OP_CHECKS))
    group.add_argument('--full', action='store_true', help="whole two-stack SAT3-CAB network")
    p.add_argument('--tolerance', type=float, default=None)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('gen-data', help="write a synthetic face dataset")
    p.add_argument('--out', required=True)
    p.add_argument('--n', type=int, default=200)
    p.add_argument('--start', type=int, default=0)
    p.add_argument('--landmarks', type=int, choices=(5, 68), default=5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--image-size', type=int, default=128)
    p.add_argument('--occluders', type=float, default=0.0, help="occluder probability")

    p = sub.add_parser('train', help="train an experiment")
    p.add_argument('--config', required=True, help="experiment JSON file or preset name")
    p.add_argument('--data', help="dataset directory (default: generate synthetic data)")
    p.add_argument('--out', default='checkpoint.dutc')
    p.add_argument('--resume', help="checkpoint to continue from")
    p.add_argument('--steps', type=int, default=None, help="override total_steps")
    p.add_argument('--lam', type=float, default=None, help="override the L_pp weight")
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--log-dir', default=None)

    p = sub.add_parser('eval', help="NME and CED of a model or of prediction files")
    p.add_argument('--checkpoint')
    p.add_argument('--predictions', help="directory of <sample id>.pts predictions")
    p.add_argument('--dataset', required=True)
    p.add_argument('--nme-mode', choices=[m.value for m in NmeMode], default=NmeMode.BBOX_DIAGONAL.value)
    p.add_argument('--max-threshold', type=float, default=DEFAULT_MAX_THRESHOLD)
    p.add_argument('--bins', type=int, default=DEFAULT_BINS)
    p.add_argument('--cutoff', type=float, default=FAILURE_CUTOFF)
    p.add_argument('--out', help="also write the report JSON here")

    p = sub.add_parser('ced', help="CED curve of a list of errors as CSV or SVG")
    p.add_argument('--errors', required=True, help="JSON list or eval report")
    p.add_argument('--out', required=True)
    p.add_argument('--format', choices=('csv', 'svg'), default=None)
    p.add_argument('--max-threshold', type=float, default=DEFAULT_MAX_THRESHOLD)
    p.add_argument('--bins', type=int, default=DEFAULT_BINS)
    p.add_argument('--cutoff', type=float, default=FAILURE_CUTOFF)

    p = sub.add_parser('probe-coherence', help="prediction drift under flips and affine transforms")
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--transforms', type=int, default=8)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('ablate', help="size, FLOPs and latency of the ablation configurations")
    p.add_argument('--width', type=int, default=64)
    p.add_argument('--landmarks', type=int, default=68)
    p.add_argument('--input-resolution', type=int, default=64)
    p.add_argument('--latency-repeats', type=int, default=0)

    p = sub.add_parser('presets', help="list or install experiment presets")
    p.add_argument('--install', action='store_true')
    p.add_argument('--overwrite', action='store_true')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail('UsageError', str(e), EXIT_USAGE)
    if args.command is None:
        return _fail('UsageError', "a command is required", EXIT_USAGE, usage=parser.format_usage())

    try:
        manager = ConfigManager(args.config_dir)
        setup_logging(args.log_level or manager.get_general_config().get('log_level', 'INFO'))
        if args.command == 'train':
            return cmd_train(args, manager)
        if args.command == 'presets':
            return cmd_presets(args, manager)
        handler = {
            'inspect': cmd_inspect,
            'gradcheck': cmd_gradcheck,
            'gen-data': cmd_gen_data,
            'eval': cmd_eval,
            'ced': cmd_ced,
            'probe-coherence': cmd_probe,
            'ablate': cmd_ablate,
        }[args.command]
        return handler(args)
    except UsageError as e:
        return _fail('UsageError', str(e), EXIT_USAGE)
    except DenseUNetError as e:
        return _fail(type(e).__name__, str(e), EXIT_ERROR, **{k: v for k, v in e.to_dict().items()
                                                                 if k not in ('error', 'message')})
    except (OSError, KeyError, ValueError) as e:
        return _fail(type(e).__name__, str(e), EXIT_ERROR)
