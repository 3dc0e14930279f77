#!/usr/bin/env python3
"""
Layered Motion Engine - Command Line Orchestrator
=================================================

PURPOSE: Predict future frames of dynamic scenes from past RGB-D frames and
known camera poses, evaluate predictions and generate synthetic test scenes.

SUBCOMMANDS:
    predict    Predict frames n+1 .. n+k-1 from frames n and n-k
    evaluate   Score predicted frames against ground truth (PSNR, SSIM)
    synth      Render a synthetic layered scene to the dataset layout
    selftest   Run the test suites grouped by marker

USAGE:
    python run_pipeline.py synth --scene-config scene.cfg --out-dir data/scene
    python run_pipeline.py predict --input-dir data/scene --index 4 --factor 2 --out-dir out
    python run_pipeline.py evaluate --pred-dir out --gt-dir data/scene --report out/report
    python run_pipeline.py selftest --suites geometry,mpi

EXIT CODES:
    0  success
    1  pipeline, input or configuration failure
    2  invalid command-line arguments
"""

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import imageio.v3 as iio
import numba

from src import DEFAULT_DEPTH_WINDOW, DEFAULT_INFILL_ITERATIONS, DEFAULT_NUM_PLANES, __version__
from src.common.console import StageReporter
from src.common.errors import LayeredMotionError, PipelineError
from src.common.keyvalue import KeyValueConfig
from src.flow.field import save_flow_dump
from src.flow.visualize import flow_to_color
from src.flow.weights import FlowNetworkWeights
from src.infill.network import InfillNetworkWeights
from src.metrics.report import evaluate_directories
from src.pipeline.dataset import SequenceDataset, write_frame
from src.pipeline.predictor import BACKENDS, PredictionRequest, PredictionResult, predict_frames
from src.synthetic.scene import load_scene_config, render_sequence, write_sequence


# =============================================================================
# RUN CONFIGURATION
# =============================================================================

# option name -> (config key, parser, built-in default)
PREDICT_OPTIONS: Dict[str, Tuple[str, Any, Any]] = {
    'input_dir': ('predict.input_dir', str, None),
    'index': ('predict.index', int, None),
    'factor': ('predict.factor', int, 2),
    'planes': ('predict.planes', int, DEFAULT_NUM_PLANES),
    'sz': ('predict.sz', int, DEFAULT_DEPTH_WINDOW),
    'backend': ('predict.backend', str, 'matcher'),
    'weights': ('predict.weights', str, None),
    'infill': ('predict.infill', str, 'nearest'),
    'infill_weights': ('predict.infill_weights', str, None),
    'iterations': ('predict.iterations', int, DEFAULT_INFILL_ITERATIONS),
    'radius': ('predict.radius', int, 4),
    'levels': ('predict.levels', int, 3),
    'out_dir': ('predict.out_dir', str, None),
}


def resolve_predict_options(args: argparse.Namespace) -> Dict[str, Any]:
    """Merge flags over the --config file over built-in defaults."""
    config = KeyValueConfig.load(args.config) if args.config else None
    options = {}
    for name, (key, parse, default) in PREDICT_OPTIONS.items():
        value = getattr(args, name)
        if value is None and config is not None and key in config:
            value = parse(config.get_str(key))
        options[name] = default if value is None else value
    for required in ('input_dir', 'index', 'out_dir'):
        if options[required] is None:
            raise LayeredMotionError(
                f"--{required.replace('_', '-')} is required (flag or '{PREDICT_OPTIONS[required][0]}' in --config)")
    return options


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def write_prediction(result: PredictionResult, out_dir: Path, dump_intermediates: bool):
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, frame in sorted(result.predictions.items()):
        write_frame(out_dir / f"{index:04d}.png", frame)
    with open(out_dir / 'prediction.json', 'w') as f:
        json.dump(result.metadata, f, indent=2, default=str)

    if dump_intermediates:
        stage_dir = out_dir / 'intermediates'
        stage_dir.mkdir(exist_ok=True)
        for stage, frames in result.diagnostics.items():
            for index, frame in frames.items():
                write_frame(stage_dir / f"{stage}_{index:04d}.png", frame)
        iio.imwrite(stage_dir / 'flow.png', flow_to_color(result.pixel_flow[..., :2]))
        save_flow_dump(stage_dir / 'flow.raw', result.flow)


def cmd_predict(args: argparse.Namespace, reporter: StageReporter) -> int:
    options = resolve_predict_options(args)
    if args.single_threaded:
        numba.set_num_threads(1)

    reporter.header("FRAME PREDICTION")
    dataset = SequenceDataset.from_directory(options['input_dir'])
    flow_weights = FlowNetworkWeights.load(options['weights']) if options['weights'] else None
    infill_weights = (InfillNetworkWeights.load(options['infill_weights'])
                      if options['infill_weights'] else None)
    request = PredictionRequest(
        index=options['index'],
        factor=options['factor'],
        num_planes=options['planes'],
        s_z=options['sz'],
        backend=options['backend'],
        flow_weights=flow_weights,
        radius_xy=options['radius'],
        levels=options['levels'],
        infill=options['infill'],
        infill_weights=infill_weights,
        iterations=options['iterations'],
        dump_intermediates=args.dump_intermediates,
    )
    result = predict_frames(dataset, request, reporter)

    out_dir = Path(options['out_dir'])
    write_prediction(result, out_dir, args.dump_intermediates)
    reporter.success(f"Wrote {len(result.predictions)} frames to {out_dir}")
    return 0


def cmd_evaluate(args: argparse.Namespace, reporter: StageReporter) -> int:
    reporter.header("EVALUATION")
    report = evaluate_directories(args.pred_dir, args.gt_dir, crop=args.crop)
    for score in report.frames:
        reporter.info(f"frame {score.frame_index:04d}: PSNR {score.psnr:.2f} dB, SSIM {score.ssim:.4f}")
    summary = report.summary()
    reporter.success(f"{len(report.frames)} frames: mean PSNR {summary['mean_psnr']:.2f} dB, "
                  f"mean SSIM {summary['mean_ssim']:.4f}")
    if args.report:
        base = Path(args.report)
        base.parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(base.with_suffix('.csv'))
        report.to_json(base.with_suffix('.json'))
        reporter.success(f"Report written to {base.with_suffix('.csv')} and {base.with_suffix('.json')}")
    return 0


def cmd_synth(args: argparse.Namespace, reporter: StageReporter) -> int:
    reporter.header("SCENE SYNTHESIS")
    scene = load_scene_config(args.scene_config)
    sequence = render_sequence(scene, reporter)
    write_sequence(sequence, args.out_dir, reporter)
    return 0


# =============================================================================
# SELFTEST ORCHESTRATION
# =============================================================================

class SuitePhase:
    """One marker-selected group of tests."""

    def __init__(self, marker: str, name: str, success_message: str, slow: bool = False):
        self.marker = marker
        self.name = name
        self.success_message = success_message
        self.slow = slow


SUITE_PHASES = [
    SuitePhase('geometry', "Camera reprojection and splatting", "Geometry verified"),
    SuitePhase('mpi', "Multi-plane images", "MPI build, warp and composite verified"),
    SuitePhase('flow', "3D flow, matcher and network", "Flow verified"),
    SuitePhase('infill', "Disocclusion infilling", "Infilling verified"),
    SuitePhase('metrics', "Quality metrics", "Metrics verified"),
    SuitePhase('synthetic', "Synthetic scenes", "Scene generator verified"),
    SuitePhase('pipeline', "End-to-end prediction", "Pipeline verified", slow=True),
    SuitePhase('cli', "Command line", "CLI verified", slow=True),
]


def run_suite(marker: str, reporter: StageReporter,
              dry_run: bool = False) -> Tuple[bool, Optional[str]]:
    """
    Run pytest on one marker in a subprocess.

    Returns:
        Tuple of (success: bool, error_message: Optional[str])
    """
    cmd = [sys.executable, '-m', 'pytest', '-q', '-m', marker, 'tests']
    if dry_run:
        reporter.info(f"Would execute: {' '.join(cmd)}")
        return True, None
    try:
        result = subprocess.run(cmd, capture_output=True, text=True, check=True)
        if result.stdout:
            reporter.info(result.stdout.strip().splitlines()[-1], stage=marker)
        return True, None
    except subprocess.CalledProcessError as e:
        return False, f"pytest exited with code {e.returncode}\n{e.stdout}{e.stderr}"
    except OSError as e:
        return False, str(e)


class SelftestOrchestrator:
    """Runs the selected suites in order, stopping at the first failure."""

    def __init__(self, selected: Optional[List[str]] = None, include_slow: bool = True,
                 dry_run: bool = False, reporter: Optional[StageReporter] = None):
        self.reporter = reporter if reporter is not None else StageReporter()
        self.selected = selected
        self.include_slow = include_slow
        self.dry_run = dry_run
        self.passed: List[SuitePhase] = []
        self.failed: Optional[SuitePhase] = None
        self.start_time = None

    def should_run(self, suite: SuitePhase) -> bool:
        if self.selected is not None and suite.marker not in self.selected:
            return False
        return self.include_slow or not suite.slow

    def run(self) -> bool:
        self.start_time = time.time()
        self.reporter.header("LAYERED MOTION ENGINE - SELFTEST")
        suites = [s for s in SUITE_PHASES if self.should_run(s)]
        if not suites:
            self.reporter.warning("No suites selected to run!")
            return False
        for i, suite in enumerate(suites, 1):
            self.reporter.header(f"SUITE {i}/{len(suites)}: {suite.name}")
            success, error_msg = run_suite(suite.marker, self.reporter, self.dry_run)
            if not success:
                self.reporter.error(f"FAILED: {suite.name}")
                if error_msg:
                    self.reporter.error(f"Error: {error_msg}")
                self.failed = suite
                return False
            self.reporter.success(suite.success_message)
            self.passed.append(suite)
        return True

    def print_summary(self, success: bool):
        elapsed = time.time() - self.start_time
        self.reporter.header("SELFTEST SUMMARY")
        if success:
            self.reporter.success(f"{len(self.passed)} suites passed in {elapsed:.1f} seconds")
        else:
            self.reporter.error(f"Stopped at suite '{self.failed.marker if self.failed else '?'}' "
                        f"after {elapsed:.1f} seconds")


def cmd_selftest(args: argparse.Namespace, reporter: StageReporter) -> int:
    selected = None
    if args.suites:
        selected = [s.strip() for s in args.suites.split(',') if s.strip()]
        known = {s.marker for s in SUITE_PHASES}
        unknown = sorted(set(selected) - known)
        if unknown:
            raise LayeredMotionError(f"Unknown suites {unknown}; choose from {sorted(known)}")
    orchestrator = SelftestOrchestrator(selected, include_slow=not args.fast, dry_run=args.dry_run,
                                        reporter=reporter)
    success = orchestrator.run()
    orchestrator.print_summary(success)
    return 0 if success else 1


# =============================================================================
# ARGUMENT PARSING
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='layered-motion',
        description="Frame prediction by camera and object motion decomposition over multi-plane images",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Render a synthetic scene, predict from it and score the result
  python run_pipeline.py synth --scene-config scene.cfg --out-dir data/scene
  python run_pipeline.py predict --input-dir data/scene --index 4 --out-dir out
  python run_pipeline.py evaluate --pred-dir out --gt-dir data/scene
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    predict = sub.add_parser(
        'predict', help="Predict frames n+1 .. n+k-1",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Single-frame prediction from frames 4 and 2
  python run_pipeline.py predict --input-dir data/scene --index 4 --factor 2 --out-dir out

  # Four frames from one flow estimate, network backend, with stage dumps
  python run_pipeline.py predict --input-dir data/scene --index 5 --factor 5 \\
      --backend network --weights flow.lmw --dump-intermediates --out-dir out
        """
    )
    predict.add_argument('--input-dir', help='Dataset directory (NNNN.png, NNNN.dpt, poses.txt, intrinsics.txt)')
    predict.add_argument('--index', type=int, help='Latest rendered frame n')
    predict.add_argument('--factor', type=int, help='Upsampling factor k (default: 2)')
    predict.add_argument('--planes', type=int, help=f'Number of MPI planes (default: {DEFAULT_NUM_PLANES})')
    predict.add_argument('--sz', type=int, help=f'Depth search window s_z (default: {DEFAULT_DEPTH_WINDOW})')
    predict.add_argument('--backend', choices=BACKENDS, help='Flow estimator (default: matcher)')
    predict.add_argument('--weights', help='Flow network weight file')
    predict.add_argument('--infill', choices=('nearest', 'network'), help='Infill method (default: nearest)')
    predict.add_argument('--infill-weights', help='Infill network weight file')
    predict.add_argument('--iterations', type=int,
                         help=f'Infill iterations g (default: {DEFAULT_INFILL_ITERATIONS})')
    predict.add_argument('--radius', type=int, help='In-plane search radius (default: 4)')
    predict.add_argument('--levels', type=int, help='Matcher pyramid levels (default: 3)')
    predict.add_argument('--out-dir', help='Output directory')
    predict.add_argument('--config', help='Run config file (flat key = value, predict.* keys)')
    predict.add_argument('--dump-intermediates', action='store_true',
                         help='Write stage composites, a flow image and a raw flow dump')
    predict.add_argument('--single-threaded', action='store_true',
                         help='Pin numba to one thread for reproducible runs')
    predict.set_defaults(handler=cmd_predict)

    evaluate = sub.add_parser('evaluate', help='Score predictions against ground truth')
    evaluate.add_argument('--pred-dir', required=True, help='Directory of predicted NNNN.png frames')
    evaluate.add_argument('--gt-dir', required=True, help='Directory of ground-truth NNNN.png frames')
    evaluate.add_argument('--crop', action=argparse.BooleanOptionalAction, default=True,
                          help='Score only the central region (40 px top/bottom, 60 px left/right)')
    evaluate.add_argument('--report', help='Report path stem; writes <stem>.csv and <stem>.json')
    evaluate.set_defaults(handler=cmd_evaluate)

    synth = sub.add_parser('synth', help='Render a synthetic scene')
    synth.add_argument('--scene-config', required=True, help='Scene config file')
    synth.add_argument('--out-dir', required=True, help='Output dataset directory')
    synth.set_defaults(handler=cmd_synth)

    selftest = sub.add_parser('selftest', help='Run the test suites')
    selftest.add_argument('--suites', help='Comma-separated markers (default: all)')
    selftest.add_argument('--fast', action='store_true', help='Skip the end-to-end suites')
    selftest.add_argument('--dry-run', action='store_true', help='Show the pytest commands only')
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None, reporter: Optional[StageReporter] = None) -> int:
    """Parse arguments and run one subcommand; returns the exit status."""
    reporter = reporter if reporter is not None else StageReporter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args, reporter)
    except PipelineError as e:
        reporter.error(f"Prediction failed: {e.cause}", stage=e.stage)
        return 1
    except (LayeredMotionError, OSError) as e:
        reporter.error(f"{type(e).__name__}: {e}", stage=args.command)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
