"""Check reports shared by the assumption, barrier, and ledger verifiers."""

from dataclasses import dataclass, field


@dataclass
class ReportEntry:
    """One inequality check: margin > 0 means the bound holds with room."""

    check_id: str
    zone: str
    margin: float
    location: tuple
    passed: bool


@dataclass
class DiagnosticsReport:
    """Ordered collection of check entries plus run metadata."""

    entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, check_id, zone, margin, location=(0.0, 0.0, 0.0), passed=None):
        if passed is None:
            passed = bool(margin > 0.0)
        entry = ReportEntry(check_id, zone, float(margin), tuple(location), passed)
        self.entries.append(entry)
        return entry

    def find(self, check_id):
        for entry in self.entries:
            if entry.check_id == check_id:
                return entry
        raise KeyError(check_id)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    @property
    def all_passed(self):
        return not self.failures()

    def require_complete(self, expected_ids):
        """Every expected check id must appear exactly once."""
        seen = [e.check_id for e in self.entries]
        for cid in expected_ids:
            count = seen.count(cid)
            if count != 1:
                raise ValueError(f"check {cid!r} appears {count} times, expected 1")

    def to_csv(self, fh):
        fh.write("check_id,zone,margin,x,y,z,pass\n")
        for e in self.entries:
            x, y, z = e.location
            fh.write(
                f"{e.check_id},{e.zone},{e.margin:.17g},"
                f"{x:.17g},{y:.17g},{z:.17g},{int(e.passed)}\n"
            )
