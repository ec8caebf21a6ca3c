"""Merge simulated operating points with published coexistence results."""

import csv
import io
from dataclasses import dataclass
from importlib import resources

COLUMNS = ("system", "band", "fiber_length_km", "attenuation_db", "attenuation_estimated",
           "launch_power_dbm", "skr_bps", "finite_key", "reference", "row")

OUTPUT_COLUMNS = ("source", "system", "band", "fiber_length_km", "attenuation_db",
                  "launch_power_dbm", "skr_bps", "finite_key", "reference")


class LiteratureError(ValueError):
    pass


@dataclass(frozen=True)
class LiteratureRow:
    system: str
    band: str
    fiber_length_km: float
    attenuation_db: float
    attenuation_estimated: bool
    launch_power_dbm: float
    skr_bps: float
    finite_key: bool
    reference: str
    row: int


def _yes_no(text, line, col):
    t = text.strip().lower()
    if t not in ("yes", "no"):
        raise LiteratureError(f"line {line}: column {col} must be yes/no, got {text!r}")
    return t == "yes"


def _number(text, line, col):
    try:
        return float(text)
    except ValueError:
        raise LiteratureError(f"line {line}: column {col} is not a number: {text!r}") from None


def parse_literature(text):
    """Rows of a literature CSV; '#' lines are comments.

    Malformed rows raise :class:`LiteratureError` naming the file line.
    """
    lines = text.splitlines()
    numbered = [(i, ln) for i, ln in enumerate(lines, 1)
                if ln.strip() and not ln.lstrip().startswith("#")]
    if not numbered:
        return []
    header_line, header = numbered[0]
    cols = next(csv.reader([header]))
    if tuple(c.strip() for c in cols) != COLUMNS:
        raise LiteratureError(f"line {header_line}: expected header {','.join(COLUMNS)}")
    out = []
    for line, text_row in numbered[1:]:
        fields = next(csv.reader([text_row]))
        if len(fields) != len(COLUMNS):
            raise LiteratureError(
                f"line {line}: expected {len(COLUMNS)} columns, got {len(fields)}")
        f = dict(zip(COLUMNS, (x.strip() for x in fields)))
        if f["system"] not in ("DV", "CV"):
            raise LiteratureError(f"line {line}: system must be DV or CV")
        if f["band"] not in ("O", "E", "S", "C", "L", "U"):
            raise LiteratureError(f"line {line}: unknown band {f['band']!r}")
        try:
            row_no = int(f["row"])
        except ValueError:
            raise LiteratureError(f"line {line}: column row is not an integer") from None
        out.append(LiteratureRow(
            f["system"], f["band"],
            _number(f["fiber_length_km"], line, "fiber_length_km"),
            _number(f["attenuation_db"], line, "attenuation_db"),
            _yes_no(f["attenuation_estimated"], line, "attenuation_estimated"),
            _number(f["launch_power_dbm"], line, "launch_power_dbm"),
            _number(f["skr_bps"], line, "skr_bps"),
            _yes_no(f["finite_key"], line, "finite_key"),
            f["reference"], row_no))
    return out


def bundled_literature():
    text = resources.files("coexqkd.data").joinpath("literature_comparison.csv").read_text()
    return parse_literature(text)


def simulated_row(result, label="simulated"):
    """Comparison-table row for a :class:`~coexqkd.scenario.ScenarioResult`."""
    return {
        "source": "simulated",
        "system": "DV",
        "band": "O",
        "fiber_length_km": round(result.fiber_length_km, 3),
        "attenuation_db": round(result.line_loss_db, 1),
        "launch_power_dbm": round(result.launch_power_dbm, 2),
        "skr_bps": float(f"{result.skr_bps:.3g}"),
        "finite_key": "yes",
        "reference": label,
    }


def comparison_table(results, literature):
    """Literature rows followed by simulated rows, all with the same columns.

    ``results`` is a sequence of ``(label, ScenarioResult)`` pairs.
    """
    rows = []
    for r in literature:
        rows.append({
            "source": "literature",
            "system": r.system,
            "band": r.band,
            "fiber_length_km": r.fiber_length_km,
            "attenuation_db": r.attenuation_db,
            "launch_power_dbm": r.launch_power_dbm,
            "skr_bps": r.skr_bps,
            "finite_key": "yes" if r.finite_key else "no",
            "reference": r.reference,
        })
    for label, res in results:
        rows.append(simulated_row(res, label))
    return rows


def to_csv(rows, columns=OUTPUT_COLUMNS):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
