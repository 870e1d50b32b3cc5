from commands.base import BaseCommand, add_output_options, check_fraction, report_extension
from config.config import DET_THRESHOLD
from core.evaluation import MatchMode, evaluate_dataset
from utils.reports import Table

METRIC_COLUMNS = ['frames', 'tp', 'fp', 'fn', 'precision', 'recall', 'f1', 'f2']


class EvaluateCommand(BaseCommand):
    """Centroid-criterion precision / recall / F1 / F2 of a dataset's polyp predictions"""
    name = 'eval'
    help = 'evaluate predicted polyps against ground truth'

    def configure(self, parser):
        parser.add_argument('dataset')
        parser.add_argument('--det-threshold', type=float, default=DET_THRESHOLD)
        parser.add_argument('--mode', choices=[m.value for m in MatchMode], default=MatchMode.STRICT.value)
        add_output_options(parser)

    def run(self, args):
        check_fraction('--det-threshold', args.det_threshold)
        d = self.load_nonempty(args.dataset)
        m = evaluate_dataset(d.frames, args.det_threshold, MatchMode(args.mode))
        self.logger.info(f"{d.name}: P={m.precision:.3f} R={m.recall:.3f} F1={m.f1:.3f}")

        table = Table(METRIC_COLUMNS)
        table.add_row(len(d), m.tp, m.fp, m.fn, m.precision, m.recall, m.f1, m.f2)
        manifest = self.manifest(args, inputs=[args.dataset])
        return self.emit(table.render(args.format), args, f"metrics.{report_extension(args.format)}", manifest)


def setup(cli):
    cli.add_command(EvaluateCommand(cli))
