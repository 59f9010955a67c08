"""
Summary metrics component for the ASGNet evaluation dashboard
"""

import pandas as pd
import streamlit as st

from metrics import METRIC_NAMES
from reports import METRIC_LABELS, summarize_report


def render_metrics(frame: pd.DataFrame):
    """
    Render the six dataset means as a row of metric cards.

    Args:
        frame: Per-image metrics from get_metric_report
    """
    summary = summarize_report(frame)
    columns = st.columns(len(METRIC_NAMES))
    for column, name in zip(columns, METRIC_NAMES):
        with column:
            st.metric(
                label=METRIC_LABELS[name],
                value=f"{summary[name]:.4f}",
                delta=None,
                help="lower is better" if name == "mae" else None
            )
    st.caption(f"{summary['images']} image pairs")
