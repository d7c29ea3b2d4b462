import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import duckdb
import polars as pl
from pydantic import ValidationError

from app.exceptions import RecordFormatError
from app.schema import GraspRecord, RunManifest


logger = logging.getLogger(__name__)

NULL_VALUE = "N/A"


@dataclass
class RecordStore:
    """JSON-lines grasp records, written by one writer in record-id order"""

    path: Path | str

    def __post_init__(self):
        self.path = Path(self.path)

    def write(self, records: list[GraspRecord]) -> int:
        ordered = sorted(records, key=lambda r: r.record_id)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with self.path.open("w") as handle:
                for record in ordered:
                    handle.write(record.model_dump_json() + "\n")
        except OSError as e:
            raise RecordFormatError(f"Failed to write records to {self.path}: {e}") from e
        return len(ordered)

    def read(self) -> list[GraspRecord]:
        try:
            lines = self.path.read_text().splitlines()
        except OSError as e:
            raise RecordFormatError(f"Failed to read records {self.path}: {e}") from e
        records = []
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                records.append(GraspRecord.model_validate_json(line))
            except ValidationError as e:
                raise RecordFormatError(f"{self.path}:{number}: invalid record: {e}") from e
        return records

    @property
    def source(self) -> str:
        """duckdb table expression over the record file"""
        escaped = str(self.path).replace("'", "''")
        return f"read_json('{escaped}', format = 'newline_delimited')"

    def hand_summary(self) -> list[dict[str, Any]]:
        """Per-hand counts, passes and penetration statistics of evaluated records"""
        return self.query(f"""
            SELECT
                hand_id,
                count(*) AS total,
                count(*) FILTER (WHERE stability.success) AS passes,
                avg(stability.max_penetration) AS mean_penetration,
                max(stability.max_penetration) AS max_penetration
            FROM {self.source}
            GROUP BY hand_id
            ORDER BY hand_id
        """)

    def query(self, sql: str) -> list[dict[str, Any]]:
        """Rows of a duckdb query over the record file, as dicts"""
        con = duckdb.connect()
        try:
            return con.sql(sql).df().to_dict(orient="records")
        except duckdb.Error as e:
            raise RecordFormatError(f"Failed to query records {self.path}: {e}") from e
        finally:
            con.close()


def write_manifest(manifest: RunManifest, path: Path | str) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2))


def read_manifest(path: Path | str) -> RunManifest:
    try:
        return RunManifest.model_validate_json(Path(path).read_text())
    except (OSError, ValidationError) as e:
        raise RecordFormatError(f"Failed to read manifest {path}: {e}") from e


def write_metrics(rows: list[dict[str, Any]], path: Path | str) -> None:
    """Metric rows as CSV, missing values written as N/A"""
    pl.DataFrame(rows).write_csv(path, null_value=NULL_VALUE)
