"""Image quality metrics: NMSE on complex images, SSIM on magnitudes."""

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NormalizationError, ShapeError

CSV_HEADER = ("scan_id", "method", "rho", "scheme", "nmse", "ssim")


def _pair(ref, rec):
    ref = np.asarray(ref)
    rec = np.asarray(rec)
    if ref.shape != rec.shape:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    return ref, rec


def nmse(ref, rec):
    """``||ref - rec||^2 / ||ref||^2``."""
    ref, rec = _pair(ref, rec)
    energy = float(np.vdot(ref, ref).real)
    if energy == 0.0:
        raise NormalizationError("NMSE reference is identically zero")
    diff = ref - rec
    return float(np.vdot(diff, diff).real) / energy


def _window_mean(img, win):
    return sliding_window_view(img, (win, win)).mean(axis=(-2, -1))


def ssim(ref, rec, window=7, data_range=None):
    """Mean SSIM of the magnitude images over all fully contained ``window x window`` windows.

    Uses a uniform window and population (biased) local statistics.
    ``data_range`` defaults to the maximum magnitude of ``ref``.
    """
    ref, rec = _pair(ref, rec)
    a = np.abs(ref).astype(np.float64)
    b = np.abs(rec).astype(np.float64)
    if a.ndim != 2 or min(a.shape) < window:
        raise ShapeError(f"image {a.shape} is smaller than the {window}x{window} window")
    big_l = float(a.max()) if data_range is None else float(data_range)
    c1 = (0.01 * big_l) ** 2
    c2 = (0.03 * big_l) ** 2
    mu_a = _window_mean(a, window)
    mu_b = _window_mean(b, window)
    var_a = _window_mean(a * a, window) - mu_a**2
    var_b = _window_mean(b * b, window) - mu_b**2
    cov = _window_mean(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    if np.any(den == 0):
        raise NormalizationError("SSIM denominator vanished (zero data range)")
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricReport:
    scan_id: str
    method: str
    nmse: float
    ssim: float
    rho: float | None = None
    scheme: str | None = None

    def row(self):
        return (
            self.scan_id,
            self.method,
            "" if self.rho is None else repr(float(self.rho)),
            self.scheme or "",
            repr(float(self.nmse)),
            repr(float(self.ssim)),
        )


def evaluate(scan_id, method, ref, rec, rho=None, scheme=None):
    return MetricReport(scan_id, method, nmse(ref, rec), ssim(ref, rec), rho, scheme)


def sort_reports(reports):
    return sorted(reports, key=lambda r: (r.scan_id, r.method, -1.0 if r.rho is None else r.rho, r.scheme or ""))


def write_metrics_csv(path, reports):
    """Write reports sorted by scan, then method; UTF-8 with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in sort_reports(reports):
            writer.writerow(r.row())


def read_metrics_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        MetricReport(
            r["scan_id"],
            r["method"],
            float(r["nmse"]),
            float(r["ssim"]),
            float(r["rho"]) if r["rho"] else None,
            r["scheme"] or None,
        )
        for r in rows
    ]
