"""
Data layer for the ASGNet evaluation dashboard
Pure frame builders plus their cached Streamlit wrappers
"""

from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd
import streamlit as st

from config import CACHE_TTL
from errors import AsgnetError
from metrics import METRIC_NAMES, evaluate_dir
from network import graph_layout
from params import GraphLayout
from run_config import load_run_config
from tensor_io import read_dump_summary, read_stage_dump

METRIC_LABELS = {
    "dic": "Dice",
    "iou": "IoU",
    "fwb": "Weighted F",
    "sm": "S-measure",
    "em": "E-measure",
    "mae": "MAE",
}


def summarize_report(frame: pd.DataFrame) -> Dict[str, float]:
    """Mean of every metric column plus the image count"""
    if frame.empty:
        return {name: 0.0 for name in METRIC_NAMES} | {"images": 0}
    summary = {name: float(frame[name].mean()) for name in METRIC_NAMES}
    summary["images"] = len(frame)
    return summary


def worst_images(frame: pd.DataFrame, metric: str, count: int = 5) -> pd.DataFrame:
    """Images with the poorest score on `metric` (highest for MAE, lowest otherwise)"""
    if frame.empty:
        return frame
    if metric == "mae":
        return frame.nlargest(count, metric)
    return frame.nsmallest(count, metric)


def parameter_breakdown(layout: GraphLayout) -> pd.DataFrame:
    """Learnable scalars per graph part (encoder, snp2..5, mse, dci2..5)"""
    rows = []
    for name, shape in layout.tensor_shapes().items():
        rows.append({"Part": name.split(".", 1)[0], "Parameters": int(np.prod(shape))})
    frame = pd.DataFrame(rows, columns=["Part", "Parameters"])
    return frame.groupby("Part", sort=False, as_index=False)["Parameters"].sum()


def stage_table(tensors: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """Shape and value range of every dumped stage tensor"""
    rows = []
    for name, tensor in tensors.items():
        rows.append({
            "Tensor": name,
            "Shape": " x ".join(str(d) for d in tensor.shape),
            "Min": float(tensor.min()),
            "Max": float(tensor.max()),
            "Mean": float(tensor.astype(np.float64).mean()),
        })
    return pd.DataFrame(rows, columns=["Tensor", "Shape", "Min", "Max", "Mean"])


def stage_map(tensor: np.ndarray, channel: int = 0) -> np.ndarray:
    """2-D plane of a (N, C, H, W) tensor for display: first sample, one channel"""
    t = np.asarray(tensor)
    while t.ndim > 3:
        t = t[0]
    if t.ndim == 3:
        t = t[min(channel, t.shape[0] - 1)]
    return t


@st.cache_data(ttl=CACHE_TTL)
def get_metric_report(pred_dir: str, gt_dir: str, threshold: float, workers: int = 1) -> pd.DataFrame:
    """Per-image metrics for a prediction / ground-truth directory pair"""
    try:
        report = evaluate_dir(Path(pred_dir), Path(gt_dir), threshold, workers)
        return report.frame.reset_index()
    except (AsgnetError, OSError) as e:
        st.error(f"Evaluation failed: {e}")
        return pd.DataFrame()


@st.cache_data(ttl=CACHE_TTL)
def get_stage_dump(dump_dir: str) -> Dict[str, np.ndarray]:
    """Tensors written by `forward --dump-stages`"""
    try:
        return read_stage_dump(Path(dump_dir))
    except (AsgnetError, OSError) as e:
        st.error(f"Could not read stage dump: {e}")
        return {}


@st.cache_data(ttl=CACHE_TTL)
def get_dump_summary(dump_dir: str) -> dict:
    try:
        return read_dump_summary(Path(dump_dir))
    except (ValueError, OSError) as e:
        st.error(f"Could not read dump summary: {e}")
        return {}


@st.cache_data(ttl=CACHE_TTL)
def get_parameter_breakdown(config_path: Optional[str] = None) -> pd.DataFrame:
    """Parameter counts of the graph a run config describes"""
    try:
        cfg = load_run_config(Path(config_path) if config_path else None)
        return parameter_breakdown(graph_layout(cfg.encoder_config()))
    except (AsgnetError, OSError) as e:
        st.error(f"Could not build the graph layout: {e}")
        return pd.DataFrame()
