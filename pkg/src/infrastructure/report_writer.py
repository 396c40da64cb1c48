import csv
import io
import logging
import os
from typing import Iterable, List, Optional, Sequence

from src.infrastructure.file_manager import FileManager

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


class ReportWriter:
    """JSON and CSV report files under one run directory, with stable names"""

    def __init__(self, report_dir: str, file_manager: Optional[FileManager] = None):
        self.report_dir = report_dir
        self.file_manager = file_manager or FileManager()
        self.file_manager.create_directory(report_dir)
        self.written: List[str] = []

    def _path(self, name: str) -> str:
        return os.path.join(self.report_dir, name)

    def write_json(self, name: str, document) -> str:
        path = self._path(name)
        self.file_manager.write_json(path, document)
        self.written.append(path)
        return path

    def write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence],
                   comments: Sequence[str] = ()) -> str:
        """CSV with optional leading "# " comment lines; None cells are left empty"""
        buffer = io.StringIO()
        for comment in comments:
            buffer.write(f"# {comment}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
        path = self._path(name)
        self.file_manager.write_text_atomic(path, buffer.getvalue())
        self.written.append(path)
        return path

    def write_matrix(self, name: str, labels: Sequence[str], matrix: Sequence[Sequence],
                     corner: str = "active\\opponent", column_labels: Optional[Sequence[str]] = None) -> str:
        """Square heatmap as CSV with labelled rows and columns; absent cells are empty"""
        columns = list(column_labels) if column_labels is not None else list(labels)
        rows = [[label] + list(row) for label, row in zip(labels, matrix)]
        return self.write_rows(name, [corner] + columns, rows)
