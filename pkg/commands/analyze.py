import numpy as np

from commands.base import BaseCommand, add_output_options, check_fraction, report_extension
from config.config import ARTIFACT_THRESHOLD, DET_THRESHOLD, RELATION_IOU
from core.analysis import (CATEGORIES, METRIC_FIELDS, PresenceRule, Relation,
                           correlation_matrix, coverage_by_class, presence_analysis, relation_analysis)
from core.datamodel import ANALYSIS_CLASSES, ArtifactClass
from core.errors import ConfigError
from core.evaluation import MatchMode
from utils.reports import Table

KINDS = ('presence', 'overlap', 'contain', 'corr', 'coverage')


def parse_area_overrides(items) -> dict:
    """['blur=0.5', ...] -> {ArtifactClass.BLUR: 0.5, ...}"""
    overrides = {}
    for item in items or []:
        name, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"area threshold must look like class=fraction, got '{item}'")
        try:
            overrides[ArtifactClass.parse(name)] = float(value)
        except ValueError as e:
            raise ConfigError(f"bad area threshold '{item}': {e}") from None
    return overrides


class AnalyzeCommand(BaseCommand):
    """Artifact-effect reports over a dataset with polyp and artifact annotations"""
    name = 'analyze'
    help = 'artifact presence, overlap, containment, correlation and coverage reports'

    def configure(self, parser):
        parser.add_argument('dataset')
        parser.add_argument('--kind', choices=KINDS, default='presence')
        parser.add_argument('--artifact-threshold', type=float, default=ARTIFACT_THRESHOLD)
        parser.add_argument('--det-threshold', type=float, default=DET_THRESHOLD)
        parser.add_argument('--iou-threshold', type=float, default=RELATION_IOU)
        parser.add_argument('--area-threshold', action='append', default=[], metavar='CLASS=FRACTION')
        parser.add_argument('--strict-matching', action='store_true',
                            help='one true positive per polyp in overlap/contain reports')
        add_output_options(parser)

    def run(self, args):
        for option in ('det_threshold', 'artifact_threshold', 'iou_threshold'):
            check_fraction(f"--{option.replace('_', '-')}", getattr(args, option))
        d = self.load_nonempty(args.dataset)
        rule = PresenceRule().with_overrides(parse_area_overrides(args.area_threshold))

        if args.kind == 'presence':
            table = self.presence_table(d, rule, args)
        elif args.kind in ('overlap', 'contain'):
            table = self.relation_table(d, Relation(args.kind), args)
        elif args.kind == 'corr':
            table = self.correlation_table(d, rule, args)
        else:
            table = self.coverage_table(d, args)

        manifest = self.manifest(args, inputs=[args.dataset],
                                 area_thresholds={c.key: rule.threshold(c) for c in ANALYSIS_CLASSES})
        name = f"{args.kind}.{report_extension(args.format)}"
        return self.emit(table.render(args.format), args, name, manifest)

    def presence_table(self, d, rule, args) -> Table:
        report = presence_analysis(d, rule, args.det_threshold, args.artifact_threshold)
        table = Table(['class', 'frequency', 'present', 'absent'] + [f"{k}_diff" for k in METRIC_FIELDS])
        for row in report.rows:
            table.add_row(row.cls.key, row.frequency, row.n_present, row.n_absent,
                          *[row.differences[k] for k in METRIC_FIELDS])
        return table

    def relation_table(self, d, relation, args) -> Table:
        mode = MatchMode.STRICT if args.strict_matching else MatchMode.ANALYSIS
        report = relation_analysis(d, relation, args.iou_threshold, args.artifact_threshold,
                                   args.det_threshold, mode)
        table = Table(['category', 'boxes'] + report.columns)
        for category in CATEGORIES:
            table.add_row(category, report.frequencies[category],
                          *[report.shares[category][k] for k in report.columns])
        return table

    def correlation_table(self, d, rule, args) -> Table:
        matrix = correlation_matrix(d, rule, args.artifact_threshold)
        table = Table(['class'] + [c.key for c in matrix.classes])
        for a in matrix.classes:
            table.add_row(a.key, *[matrix.get(a, b) for b in matrix.classes])
        return table

    def coverage_table(self, d, args) -> Table:
        table = Table(['class', 'frames_covered', 'mean', 'median', 'p90', 'max'])
        for cls, fractions in coverage_by_class(d, args.artifact_threshold).items():
            covered = np.array([f for f in fractions if f > 0])
            if covered.size:
                stats = [float(covered.mean()), float(np.median(covered)),
                         float(np.quantile(covered, 0.9)), float(covered.max())]
            else:
                stats = [float('nan')] * 4
            table.add_row(cls.key, int(covered.size), *stats)
        return table


def setup(cli):
    cli.add_command(AnalyzeCommand(cli))
