import os

from commands.base import BaseCommand, add_output_options, report_extension
from config.config import ARTIFACT_THRESHOLD
from core.datamodel import (ANALYSIS_CLASSES, ArtifactClass, LabelMode, MultiTaskLabelSpec, apply_label_spec,
                            artifacts_per_image, load_dataset, merge_pseudo_labels, save_dataset,
                            threshold_sweep)
from core.errors import ConfigError
from utils.reports import Table


def parse_thresholds(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(',') if t.strip()]
    except ValueError:
        raise ConfigError(f"thresholds must be a comma-separated list of numbers, got '{text}'") from None


def parse_classes(text: str) -> frozenset:
    try:
        return frozenset(ArtifactClass.parse(t) for t in text.split(',') if t.strip())
    except ValueError as e:
        raise ConfigError(str(e)) from None


class MergeLabelsCommand(BaseCommand):
    """Fuse a polyp dataset with artifact-detector output into a multi-task dataset"""
    name = 'merge-labels'
    help = 'promote artifact detections to ground truth on a polyp dataset'

    def configure(self, parser):
        parser.add_argument('polyp')
        parser.add_argument('artifact')
        parser.add_argument('--threshold', type=float, default=ARTIFACT_THRESHOLD)
        parser.add_argument('--output', required=True)
        parser.add_argument('--sweep', default=None, metavar='T1,T2,...',
                            help='also report artifacts per image at these thresholds')
        parser.add_argument('--include', default=None, metavar='CLASSES',
                            help='comma-separated artifact classes kept in the fused labels')
        parser.add_argument('--flat', action='store_true', help='tag the labels for a single flat head')
        add_output_options(parser)

    def run(self, args):
        polyp_ds = self.load_nonempty(args.polyp)
        artifact_ds = load_dataset(args.artifact)
        fused = merge_pseudo_labels(polyp_ds, artifact_ds, args.threshold)

        if args.include or args.flat:
            spec = MultiTaskLabelSpec(
                mode=LabelMode.FLAT if args.flat else LabelMode.TWO_HEAD,
                included_artifacts=parse_classes(args.include) if args.include else frozenset(ANALYSIS_CLASSES),
            )
            fused = apply_label_spec(fused, spec)
        save_dataset(fused, args.output)

        table = Table(['threshold', 'frames', 'artifacts_per_image'])
        if args.sweep:
            for t, per_image in threshold_sweep(polyp_ds, artifact_ds, parse_thresholds(args.sweep)):
                table.add_row(t, len(polyp_ds), per_image)
        else:
            table.add_row(args.threshold, len(fused), artifacts_per_image(fused))

        manifest = self.manifest(args, inputs=[args.polyp, args.artifact])
        manifest.add_output(args.output)
        if not args.out_dir:
            args.out_dir = os.path.dirname(os.path.abspath(args.output))
        return self.emit(table.render(args.format), args, f"merge.{report_extension(args.format)}", manifest)


def setup(cli):
    cli.add_command(MergeLabelsCommand(cli))
