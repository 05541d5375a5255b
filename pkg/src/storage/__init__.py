from src.storage.datasets import (
    CsvSchema,
    ingest_csv,
    ingest_kennan,
    write_dataset_csv,
    write_json,
    write_table,
)

__all__ = [
    "CsvSchema",
    "ingest_csv",
    "ingest_kennan",
    "write_dataset_csv",
    "write_json",
    "write_table",
]
