"""Distance-estimation error metrics and report serialization.

Seven quantities per evaluation: absolute and squared relative distance
(ARD, SRD), RMSE, RMSE of natural-log distances, and the fraction of
predictions whose max ratio with ground truth is strictly below 1.25,
1.25^2, 1.25^3.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NonPositiveGroundTruth

PRED_FLOOR = 1e-6  # predictions are clamped here before logs and ratios
CSV_HEADER = "method,ARD,SRD,RMSE,RMSE_log,delta1,delta2,delta3"
DELTA_THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)


@dataclass
class EvalReport:
    ard: float
    srd: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n: int
    pairs: np.ndarray  # (n, 2) columns (d, d_hat)

    def metrics_tuple(self):
        return (self.ard, self.srd, self.rmse, self.rmse_log,
                self.delta1, self.delta2, self.delta3)

    def csv_row(self, method):
        vals = ",".join(repr(float(v)) for v in self.metrics_tuple())
        return f"{method},{vals}"

    def to_json(self, method):
        return json.dumps(
            {
                "method": method,
                "n": self.n,
                "metrics": {
                    "ARD": self.ard, "SRD": self.srd, "RMSE": self.rmse,
                    "RMSE_log": self.rmse_log, "delta1": self.delta1,
                    "delta2": self.delta2, "delta3": self.delta3,
                },
                "pairs": [[float(d), float(p)] for d, p in self.pairs],
            },
            sort_keys=True,
        )


def evaluate(pairs):
    """Compute the report from (d, d_hat) pairs; d must be positive."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no pairs to evaluate")
    arr = arr.reshape(-1, 2)
    d = arr[:, 0]
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NonPositiveGroundTruth("ground-truth distances must be finite and > 0")
    d_hat = np.maximum(arr[:, 1], PRED_FLOOR)

    err = d_hat - d
    ratio = np.maximum(d_hat / d, d / d_hat)
    report = EvalReport(
        ard=float(np.mean(np.abs(err) / d)),
        srd=float(np.mean(err ** 2 / d)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(d_hat) - np.log(d)) ** 2))),
        delta1=float(np.mean(ratio < DELTA_THRESHOLDS[0])),
        delta2=float(np.mean(ratio < DELTA_THRESHOLDS[1])),
        delta3=float(np.mean(ratio < DELTA_THRESHOLDS[2])),
        n=len(d),
        pairs=np.column_stack([d, d_hat]),
    )
    return report


def write_report_csv(report, method, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write(report.csv_row(method) + "\n")


def write_report_json(report, method, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json(method))
        fh.write("\n")
