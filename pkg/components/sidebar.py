"""
Sidebar component for the ASGNet evaluation dashboard
"""

from dataclasses import dataclass
from typing import Optional

import streamlit as st

from config import DEFAULT_THRESHOLD, METRIC_WORKERS
from reports import METRIC_LABELS


@dataclass(frozen=True)
class DashboardSelection:
    """What the user picked in the sidebar"""
    pred_dir: str
    gt_dir: str
    dump_dir: str
    config_path: Optional[str]
    threshold: float
    workers: int
    focus_metric: str


def render_sidebar() -> DashboardSelection:
    """
    Render the sidebar with all controls.

    Returns:
        DashboardSelection: directories, threshold and the metric to chart
    """
    with st.sidebar:
        st.header("⚙️ Settings")

        st.subheader("📁 Evaluation")
        pred_dir = st.text_input("Prediction directory", placeholder="e.g., runs/kvasir/pred")
        gt_dir = st.text_input("Ground-truth directory", placeholder="e.g., data/kvasir/masks")
        threshold = st.slider("Dice/IoU threshold", 0.05, 0.95, float(DEFAULT_THRESHOLD), 0.05)
        workers = st.number_input("Worker threads", min_value=1, max_value=32, value=METRIC_WORKERS)

        focus_metric = st.selectbox(
            "Metric to chart",
            list(METRIC_LABELS),
            format_func=lambda name: METRIC_LABELS[name],
        )

        st.markdown("---")
        st.subheader("🧩 Stage dump")
        dump_dir = st.text_input("Dump directory", placeholder="written by forward --dump-stages")
        config_path = st.text_input("Run config (optional)", placeholder="e.g., desk.json")

        st.markdown("---")
        if st.button("🔄 Refresh Data", use_container_width=True):
            st.cache_data.clear()
            st.rerun()

    return DashboardSelection(
        pred_dir=pred_dir.strip(),
        gt_dir=gt_dir.strip(),
        dump_dir=dump_dir.strip(),
        config_path=config_path.strip() or None,
        threshold=float(threshold),
        workers=int(workers),
        focus_metric=focus_metric,
    )
