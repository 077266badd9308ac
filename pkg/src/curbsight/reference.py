"""Published field-survey results, shown beside computed values in reports.

These numbers come from a 1 km roadside survey whose raw data is not
available. They are display-only and never used as pass/fail thresholds.
"""

from __future__ import annotations

LABEL = "reference (published)"

_ROW_KEYS = ("n", "mean", "median", "std", "min", "q25", "q75", "max", "iqr")

GEOLOCATION_SUMMARY = {
    label: dict(zip(_ROW_KEYS, row))
    for label, row in {
        "In_Slow": (63, 2.83, 1.92, 2.71, 0.31, 1.06, 3.70, 16.19, 2.64),
        "In_Speed": (62, 5.01, 3.60, 4.26, 0.15, 1.68, 7.94, 16.57, 6.25),
        "Out_Slow": (63, 3.04, 2.24, 2.53, 0.48, 1.43, 3.82, 10.93, 2.39),
        "Out_Speed": (62, 4.13, 3.44, 3.14, 0.47, 1.86, 5.50, 16.12, 3.63),
    }.items()
}

GEOLOCATION_TESTS = {
    "camera_position": {"method": "wilcoxon", "statistic": 919.0, "p_value": 0.6869},
    "speed": {"method": "wilcoxon", "statistic": 353.0, "p_value": 1.20e-5},
    "overall": {"method": "friedman", "statistic": 19.29, "p_value": 2.37e-4},
    "In_Slow vs In_Speed": {"method": "wilcoxon", "statistic": 375.0, "p_value": 2.5e-5},
    "Out_Slow vs Out_Speed": {"method": "wilcoxon", "statistic": 488.0, "p_value": 6.15e-4},
    "In_Slow vs Out_Slow": {"method": "wilcoxon", "statistic": 739.0, "p_value": 0.0959},
    "In_Speed vs Out_Speed": {"method": "wilcoxon", "statistic": 778.0, "p_value": 0.1640},
}

_SCENARIO_KEYS = ("n", "mean", "mae", "median", "std", "iqr", "p_vs_baseline")

STRUCTURAL_BY_SCENARIO = {
    attr: {label: dict(zip(_SCENARIO_KEYS, row)) for label, row in rows.items()}
    for attr, rows in {
        "height_m": {
            "In_Slow": (62, -0.24, 1.66, -0.76, 2.36, 1.69, None),
            "In_Speed": (62, 1.45, 2.19, 0.70, 3.08, 3.09, 4.275e-7),
            "Out_Slow": (62, -0.58, 1.38, -0.61, 1.90, 1.54, 1.0),
            "Out_Speed": (62, 1.27, 1.97, 0.58, 2.77, 2.41, 7.929e-7),
        },
        "dbh_cm": {
            "In_Slow": (54, 4.63, 7.61, 4.38, 8.94, 4.77, None),
            "In_Speed": (54, 5.35, 8.00, 5.12, 8.75, 7.35, 1.0),
            "Out_Slow": (54, 4.32, 6.44, 4.80, 7.19, 5.33, 1.0),
            "Out_Speed": (54, 4.35, 6.42, 3.66, 7.43, 6.76, 1.0),
        },
        "crown_width_m": {
            "In_Slow": (38, 4.88, 4.91, 4.78, 3.51, 5.09, None),
            "In_Speed": (38, 6.54, 6.54, 6.12, 3.88, 5.34, 2.818e-2),
            "Out_Slow": (38, 4.16, 4.47, 3.55, 3.46, 4.85, 2.485e-3),
            "Out_Speed": (38, 5.84, 5.89, 5.67, 3.64, 4.46, 1.0),
        },
    }.items()
}

_CLASS_KEYS = ("n", "mean", "mae", "median", "std", "min", "max", "iqr")

STRUCTURAL_BY_CLASS = {
    attr: {kind: dict(zip(_CLASS_KEYS, row)) for kind, row in rows.items()}
    for attr, rows in {
        "height_m": {
            "tree": (38, 0.02, 2.09, -0.62, 2.89, -7.92, 7.29, 2.52),
            "pole": (16, -0.38, 0.88, -0.62, 1.1, -1.63, 3.2, 0.64),
            "other": (8, -1.17, 1.17, -1.1, 0.55, -1.89, -0.37, 0.86),
        },
        "dbh_cm": {
            "tree": (38, 9.36, 9.55, 7.2, 6.35, -2.88, 23.44, 7.46),
            "pole": (16, 2.85, 2.98, 2.94, 1.65, -1.04, 6.1, 1.31),
        },
        "crown_width_m": {
            "tree": (38, 4.88, 4.91, 4.78, 3.51, -0.68, 14.97, 5.09),
        },
    }.items()
}

DEPTH_MODEL = {
    "mean_cv_mae": 0.3965,
    "k": 10,
    "transformed": {"mse": 0.1797, "mae": 0.3118, "r2": 0.9200},
    "original": {"mse": 36.5503, "mae": 4.1590, "r2": 0.9051},
}

# survey object counts per kind
CLASS_COUNTS = {"tree": 38, "pole": 17, "other": 8}


def as_dict() -> dict:
    return {
        "label": LABEL,
        "geolocation_summary": GEOLOCATION_SUMMARY,
        "geolocation_tests": GEOLOCATION_TESTS,
        "structural_by_scenario": STRUCTURAL_BY_SCENARIO,
        "structural_by_class": STRUCTURAL_BY_CLASS,
        "depth_model": DEPTH_MODEL,
        "class_counts": CLASS_COUNTS,
    }
