"""
Stage map component for the ASGNet evaluation dashboard
"""

import plotly.express as px
import streamlit as st

from reports import get_dump_summary, get_stage_dump, stage_map, stage_table


def render_stage_maps(dump_dir: str):
    """
    Render heatmaps of the tensors in a --dump-stages directory.

    Args:
        dump_dir: Directory written by `forward --dump-stages`
    """
    st.subheader("🧩 Stage Maps")
    if not dump_dir:
        st.info("Enter a dump directory in the sidebar to inspect stage tensors")
        return

    with st.spinner("Loading stage tensors..."):
        tensors = get_stage_dump(dump_dir)
    if not tensors:
        st.info("No stage tensors found")
        return

    summary = get_dump_summary(dump_dir)
    if summary:
        st.caption(f"Input: {summary.get('input', '?')} | Parameters: {summary.get('parameters', 0):,}")

    col1, col2 = st.columns([1, 2])
    with col1:
        name = st.selectbox("Tensor", list(tensors))
        channels = tensors[name].shape[1] if tensors[name].ndim == 4 else 1
        channel = st.slider("Channel", 0, max(channels - 1, 1), 0, disabled=channels == 1)

    with col2:
        fig = px.imshow(stage_map(tensors[name], channel), color_continuous_scale='Viridis', aspect='equal')
        fig.update_layout(height=400, title=f"{name} (channel {channel})")
        st.plotly_chart(fig, use_container_width=True)

    st.dataframe(stage_table(tensors), use_container_width=True, hide_index=True)
