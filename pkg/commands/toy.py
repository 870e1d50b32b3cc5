import os

from commands.base import BaseCommand, check_fraction
from config.config import DET_THRESHOLD, EXIT_FAILURE, EXIT_OK
from config.runfile import load_run_file
from core.datamodel import artifacts_per_image, load_dataset, save_dataset
from core.toy.gradcheck import grad_check
from core.toy.model import ToyModel, load_checkpoint, predict_boxes, save_checkpoint
from core.toy.scenes import annotate_scenes, generate_scene, generate_scenes, scenes_to_dataset
from core.toy.trainer import train
from utils.reports import Table, write_report

TRACE_COLUMNS = ['step', 'total', 'polyp', 'artifact', 'regression', 'regularizer']


class TrainToyCommand(BaseCommand):
    """Train the toy detector on synthetic scenes from a run file"""
    name = 'train-toy'
    help = 'train the toy multi-task detector'

    def configure(self, parser):
        parser.add_argument('runfile')
        parser.add_argument('--out-dir', required=True)
        parser.add_argument('--labels', default=None,
                            help='dataset (e.g. from merge-labels) whose annotations replace the scene ground truth')

    def run(self, args):
        run = load_run_file(args.runfile)
        cfg = run.train_config()
        scenes = generate_scenes(run.scenes, run.scene_seed, run.scene_knobs())
        inputs = [args.runfile]
        if args.labels:
            scenes = annotate_scenes(scenes, load_dataset(args.labels))
            inputs.append(args.labels)

        model = ToyModel.initialize(run.architecture(), seed=cfg.seed, scale=run.init_scale)
        trained, trace = train(model, scenes, cfg)

        checkpoint = os.path.join(args.out_dir, 'checkpoint.json')
        save_checkpoint(trained, checkpoint)
        trace_table = Table(TRACE_COLUMNS, digits=10)
        for step, breakdown in enumerate(trace):
            trace_table.add_row(step, *breakdown.as_row())
        trace_path = write_report(trace_table.to_csv(), args.out_dir, 'trace.csv')

        manifest = self.manifest(args, inputs=inputs, seed=cfg.seed, run=run.resolved(),
                                 loss_weights=cfg.loss.describe(), mode=cfg.mode.value)
        manifest.add_output(checkpoint)
        manifest.add_output(trace_path)

        summary = Table(['mode', 'loss_weights', 'steps', 'initial_loss', 'final_loss'])
        summary.add_row(cfg.mode.value, cfg.loss.describe(), len(trace), trace[0].total, trace[-1].total)
        return self.emit(summary.to_markdown(), args, 'summary.md', manifest)


class GradCheckCommand(BaseCommand):
    """Finite-difference check of the toy detector's gradients"""
    name = 'gradcheck'
    help = "compare the toy detector's analytic gradients with finite differences"

    def configure(self, parser):
        parser.add_argument('runfile')
        parser.add_argument('--checkpoint', default=None, help='check a saved model instead of a fresh one')
        parser.add_argument('--out-dir', default=None)

    def run(self, args):
        run = load_run_file(args.runfile)
        cfg = run.train_config()
        if args.checkpoint:
            model = load_checkpoint(args.checkpoint)
        else:
            model = ToyModel.initialize(run.architecture(), seed=cfg.seed, scale=run.init_scale)
        scene = generate_scene(run.scene_seed, run.scene_knobs())
        result = grad_check(model, scene, cfg.loss, coords=run.gradcheck_coords, seed=cfg.seed,
                            included_artifacts=cfg.included_artifacts, regress_artifacts=cfg.regress_artifacts)

        lines = [f"coordinates: {result.coordinates}",
                 f"max relative error: {result.max_rel_error:.3e}"]
        lines += [f"  {block}: {err:.3e}" for block, err in sorted(result.per_block.items())]
        lines.append(f"tolerance: {result.tolerance:g} relative, {result.tolerance * result.floor:g} absolute "
                     f"for gradients below {result.floor:g}")
        lines.append('PASS' if result.passed else 'FAIL')
        inputs = [args.runfile] + ([args.checkpoint] if args.checkpoint else [])
        manifest = self.manifest(args, inputs=inputs, seed=cfg.seed, run=run.resolved())
        self.emit('\n'.join(lines) + '\n', args, 'gradcheck.txt', manifest)
        return EXIT_OK if result.passed else EXIT_FAILURE


class ScenesCommand(BaseCommand):
    """Export synthetic scenes (optionally with model predictions) as a dataset"""
    name = 'scenes'
    help = 'write synthetic scenes to the canonical dataset format'

    def configure(self, parser):
        parser.add_argument('runfile')
        parser.add_argument('--output', required=True)
        parser.add_argument('--checkpoint', default=None,
                            help='replace artifacts and predictions with this model\'s detections')
        parser.add_argument('--pred-threshold', type=float, default=DET_THRESHOLD)
        parser.add_argument('--out-dir', default=None)

    def run(self, args):
        check_fraction('--pred-threshold', args.pred_threshold)
        run = load_run_file(args.runfile)
        scenes = generate_scenes(run.scenes, run.scene_seed, run.scene_knobs())
        inputs = [args.runfile]
        detections = None
        if args.checkpoint:
            model = load_checkpoint(args.checkpoint)
            detections = [predict_boxes(model, s, args.pred_threshold) for s in scenes]
            inputs.append(args.checkpoint)
        d = scenes_to_dataset(scenes, os.path.splitext(os.path.basename(args.output))[0], detections)
        save_dataset(d, args.output)

        table = Table(['frames', 'polyps', 'predicted_polyps', 'artifacts_per_image'])
        table.add_row(len(d), sum(len(f.gt_polyps) for f in d.frames),
                      sum(len(f.pred_polyps) for f in d.frames), artifacts_per_image(d))
        manifest = self.manifest(args, inputs=inputs, seed=run.scene_seed, run=run.resolved())
        manifest.add_output(args.output)
        return self.emit(table.to_markdown(), args, 'scenes.md', manifest)


def setup(cli):
    cli.add_command(TrainToyCommand(cli))
    cli.add_command(GradCheckCommand(cli))
    cli.add_command(ScenesCommand(cli))
