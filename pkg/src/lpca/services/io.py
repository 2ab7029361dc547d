from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from lpca.services.baselines import LsvdModel, PcaModel
from lpca.services.core import InputError, validate_binary, validate_real
from lpca.services.fantope import FantopeModel
from lpca.services.mm import FitReport, LpcaModel

FORMAT_VERSION = 1
EXCEL_SUFFIXES = {".xlsx", ".xlsm"}

Model = Union[LpcaModel, FantopeModel, LsvdModel, PcaModel]


# -----------------------------
# Matrix files
# -----------------------------


@dataclass(frozen=True)
class MatrixFile:
    values: np.ndarray
    header: Optional[list[str]] = None


def read_matrix(path: Union[str, Path], *, binary: bool = True) -> MatrixFile:
    """
    Read a numeric matrix from CSV or Excel. A single leading row is taken as
    a header when one of its cells is non-empty and not numeric. Blank cells
    anywhere else are missing values and rejected.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        if path.suffix.lower() in EXCEL_SUFFIXES:
            frame = pd.read_excel(path, header=None, dtype=object, engine="openpyxl")
        else:
            frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise InputError(f"{path} holds no rows") from None
    except (pd.errors.ParserError, ValueError) as exc:
        raise InputError(f"{path} is not a rectangular matrix: {exc}") from exc
    frame = frame.dropna(how="all")
    if frame.empty:
        raise InputError(f"{path} holds no rows")

    header: Optional[list[str]] = None
    first = frame.iloc[0]
    text = first.notna() & first.astype(str).str.strip().ne("") & pd.to_numeric(first, errors="coerce").isna()
    if text.any():
        header = ["" if pd.isna(v) else str(v).strip() for v in first]
        frame = frame.iloc[1:]
        if frame.empty:
            raise InputError(f"{path} has a header but no data rows")

    missing = frame.isna() | frame.astype(str).apply(lambda col: col.str.strip().eq(""))
    if missing.any().any():
        r, c = (int(v) for v in np.argwhere(missing.to_numpy())[0])
        raise InputError(f"{path}: row {r}, column {c} is missing a value")
    numeric = frame.apply(lambda col: pd.to_numeric(col, errors="coerce"))
    if numeric.isna().any().any():
        r, c = (int(v) for v in np.argwhere(numeric.isna().to_numpy())[0])
        raise InputError(f"{path}: row {r}, column {c} is not a number ({frame.iat[r, c]!r})")
    values = numeric.to_numpy(dtype=np.float64)
    values = validate_binary(values, name=str(path)) if binary else validate_real(values, name=str(path))
    return MatrixFile(values=values, header=header)


def write_matrix(path: Union[str, Path], values, *, header: Optional[Sequence[str]] = None) -> None:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    columns = list(header) if header is not None else None
    if columns is not None and len(columns) != arr.shape[1]:
        raise InputError(f"header has {len(columns)} names for {arr.shape[1]} columns")
    pd.DataFrame(arr, columns=columns).to_csv(path, index=False, header=columns is not None, float_format="%.17g")


def write_table(path: Union[str, Path], rows: Sequence[dict]) -> None:
    pd.DataFrame(list(rows)).to_csv(path, index=False, float_format="%.17g")


# -----------------------------
# Model files
# -----------------------------


def model_to_dict(model: Model) -> dict:
    payload: dict = {"format_version": FORMAT_VERSION, "method": model.method, "family": model.family}
    if isinstance(model, LpcaModel):
        payload.update(m=model.m, k=model.k, mu=_list(model.mu), U=_list(model.U))
    elif isinstance(model, FantopeModel):
        payload.update(m=model.m, k=model.k, mu=_list(model.mu), H=_list(model.H))
    elif isinstance(model, LsvdModel):
        payload.update(m=None, k=model.k, mu=_list(model.mu), A=_list(model.A), B=_list(model.B))
    elif isinstance(model, PcaModel):
        payload.update(m=None, k=model.k, mu=_list(model.mu), U=_list(model.U), variances=_list(model.variances))
    else:
        raise InputError(f"cannot serialize {type(model).__name__}")
    report = getattr(model, "report", None)
    payload["fit_report"] = report.to_dict() if report is not None else None
    return payload


def model_from_dict(payload: dict) -> Model:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}")
    method = payload.get("method")
    report = FitReport.from_dict(payload["fit_report"]) if payload.get("fit_report") else None
    try:
        mu = np.asarray(payload["mu"], dtype=np.float64)
        if method == "lpca":
            return LpcaModel(
                U=np.asarray(payload["U"], dtype=np.float64),
                mu=mu,
                m=float(payload["m"]),
                family=str(payload.get("family", "bernoulli")),
                report=report,
            )
        if method == "fantope":
            return FantopeModel(
                H=np.asarray(payload["H"], dtype=np.float64),
                mu=mu,
                m=float(payload["m"]),
                k=float(payload["k"]),
                report=report,
            )
        if method == "lsvd":
            return LsvdModel(
                A=np.asarray(payload["A"], dtype=np.float64),
                B=np.asarray(payload["B"], dtype=np.float64),
                mu=mu,
                report=report,
            )
        if method == "pca":
            return PcaModel(
                U=np.asarray(payload["U"], dtype=np.float64),
                mu=mu,
                variances=np.asarray(payload["variances"], dtype=np.float64),
            )
    except KeyError as exc:
        raise InputError(f"model file is missing field {exc.args[0]!r}") from None
    raise InputError(f"unknown model method {method!r}")


def save_model(path: Union[str, Path], model: Model) -> None:
    # json writes floats with repr, which round-trips every double exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2), encoding="utf-8")


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(payload)


def _list(arr) -> list:
    return np.asarray(arr, dtype=np.float64).tolist()
