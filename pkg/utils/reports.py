"""
Plain-text report tables (CSV and Markdown).
"""
import csv
import io
import math
import os
from dataclasses import dataclass, field

NOT_AVAILABLE = 'n/a'


def format_cell(value, digits: int = 6) -> str:
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return NOT_AVAILABLE
        return f"{value:.{digits}f}"
    return str(value)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    digits: int = 6

    def add_row(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append(list(cells))

    def _cells(self) -> list[list[str]]:
        return [[format_cell(c, self.digits) for c in row] for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(self.columns)
        writer.writerows(self._cells())
        return buffer.getvalue()

    def to_markdown(self) -> str:
        lines = ['| ' + ' | '.join(self.columns) + ' |',
                 '|' + '|'.join('---' for _ in self.columns) + '|']
        lines += ['| ' + ' | '.join(row) + ' |' for row in self._cells()]
        return '\n'.join(lines) + '\n'

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == 'csv' else self.to_markdown()


def write_report(text: str, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    return path
