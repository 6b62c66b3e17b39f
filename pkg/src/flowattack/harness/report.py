"""JSON + CSV experiment reports with success-rate and query-count aggregates."""

import csv
import datetime
import io
import json

from ..attack.evaluate import aggregate
from .checkpoint import atomic_write

CSV_FIELDS = ("index", "label", "success", "queries", "loss", "norm", "iterations", "failure")


def check_aggregates(doc):
    """Raise if the stored aggregates differ from a recomputation over the records."""
    again = aggregate(doc["records"])
    if again != doc["aggregates"]:
        raise ValueError(f"aggregates {doc['aggregates']} do not match records ({again})")


def build_report(result, config=None, extra=None):
    doc = {
        "metadata": {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()},
        "attack": result["attack"],
        "attack_config": result["config"],
        "config": config or {},
        "records": result["records"],
        "aggregates": aggregate(result["records"]),
        "constraint": result.get("constraint", {}),
    }
    if extra:
        doc.update(extra)
    return doc


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def records_csv(records):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow({k: ("" if r.get(k) is None else r[k]) for k in CSV_FIELDS})
    return buf.getvalue()


def emit_report(doc, path_prefix):
    """Write ``<prefix>.json`` and ``<prefix>.csv``; returns both paths."""
    check_aggregates(doc)
    json_path, csv_path = f"{path_prefix}.json", f"{path_prefix}.csv"
    try:
        atomic_write(json_path, dumps(doc).encode("utf-8"))
        atomic_write(csv_path, records_csv(doc["records"]).encode("utf-8"))
    except OSError as err:
        raise OSError(f"cannot write report {path_prefix}: {err.strerror}") from err
    return json_path, csv_path


def load_report(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def without_timestamp(doc):
    out = dict(doc)
    out["metadata"] = {k: v for k, v in doc.get("metadata", {}).items() if k != "timestamp"}
    return out
