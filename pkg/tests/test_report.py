import numpy as np
import pytest

from slgan.errors import InvalidConfig
from slgan.losses import REPORT_FIELDS, LossReport
from slgan.report import load_loss_log, summarize, write_report

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def fake_log(path, n=20):
    """Geometrically decaying totals with mild noise, deterministic."""
    rng = np.random.default_rng(0)
    lines = [LossReport.HEADER]
    reports = []
    for step in range(1, n + 1):
        decay = 0.9 ** step
        vals = {f: decay * (i + 1) + rng.uniform(0, 0.01)
                for i, f in enumerate(REPORT_FIELDS[1:])}
        report = LossReport(step=step, **vals)
        reports.append(report)
        lines.append(report.to_line())
    path.write_text("\n".join(lines) + "\n")
    return reports


class TestLoadLossLog:
    def test_round_trip(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        reports = fake_log(log)
        loaded = load_loss_log(log)
        # serialization keeps 11 significant digits; compare at that level
        assert [r.to_line() for r in loaded] == [r.to_line() for r in reports]
        assert [r.step for r in loaded] == [r.step for r in reports]

    def test_blank_lines_skipped(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        fake_log(log, n=3)
        log.write_text(log.read_text() + "\n\n")
        assert len(load_loss_log(log)) == 3

    def test_empty_log_rejected(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        log.write_text(LossReport.HEADER + "\n")
        with pytest.raises(InvalidConfig):
            load_loss_log(log)


class TestSummarize:
    def test_shape_and_values(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        reports = fake_log(log)
        lines = summarize(reports, trailing=5)
        assert lines[0].startswith("# field")
        assert len(lines) == 1 + len(REPORT_FIELDS) - 1  # header + non-step fields
        by_name = {l.split("\t")[0]: l.split("\t") for l in lines[1:]}
        totals = np.array([r.total_g for r in reports])
        row = by_name["total_g"]
        assert float(row[2]) == pytest.approx(totals[-1])
        assert float(row[6]) == pytest.approx(totals[-5:].mean())
        assert float(row[7]) < 0  # decaying series has negative slope

    def test_single_record_slope_zero(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        fake_log(log, n=1)
        lines = summarize(load_loss_log(log))
        assert all(float(l.split("\t")[7]) == 0.0 for l in lines[1:])


class TestWriteReport:
    def test_files_written(self, tmp_path):
        log = tmp_path / "loss_log.tsv"
        fake_log(log)
        written = write_report(log, tmp_path / "report")
        assert len(written["figures"]) == 2
        for fig in written["figures"]:
            assert fig.exists()
            assert fig.read_bytes()[:8] == PNG_MAGIC
        summary = written["summary"].read_text().splitlines()
        assert summary[0].startswith("# field")
        assert len(summary) == len(REPORT_FIELDS)  # header + 9 fields
