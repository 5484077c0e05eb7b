"""CSV and JSON emission with versioned schemas."""

import csv
import io
import json
import os

SCHEMA_VERSION = 1


def schema_tag(kind):
    return f"stationkit.{kind}/v{SCHEMA_VERSION}"


def csv_text(kind, header, rows):
    """CSV with a leading ``# schema:`` comment line naming the schema version."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema_tag(kind)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_csv(path, kind, header, rows):
    write_text(path, csv_text(kind, header, rows))


def write_json(path, kind, payload):
    body = {"schema": schema_tag(kind), **payload}
    write_text(path, json.dumps(body, indent=2, sort_keys=True) + "\n")
