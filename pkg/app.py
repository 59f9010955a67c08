"""
ASGNet Evaluation Monitor - Main Application
A Streamlit dashboard for inspecting segmentation metrics and stage tensors

Run with: streamlit run app.py
"""

import streamlit as st
from datetime import datetime

# Configuration and styling
from config import PAGE_CONFIG, CUSTOM_CSS

# UI Components
from components.sidebar import render_sidebar
from components.metrics import render_metrics
from components.charts import (
    render_per_image_chart, render_distribution_chart, render_worst_images, render_parameter_breakdown
)
from components.stage_maps import render_stage_maps
from reports import get_metric_report


def main():
    """Main application entry point"""

    # Page configuration
    st.set_page_config(**PAGE_CONFIG)

    # Apply custom CSS
    st.markdown(CUSTOM_CSS, unsafe_allow_html=True)

    # Header
    st.title("🔬 ASGNet Evaluation Monitor")
    st.markdown("*Segmentation quality and stage-by-stage inspection for desk-scale runs*")

    selection = render_sidebar()

    # ===== Evaluation =====
    if selection.pred_dir and selection.gt_dir:
        with st.spinner("Evaluating prediction maps..."):
            frame = get_metric_report(selection.pred_dir, selection.gt_dir,
                                      selection.threshold, selection.workers)

        render_metrics(frame)

        st.markdown("---")

        col1, col2 = st.columns(2)
        with col1:
            render_per_image_chart(frame, selection.focus_metric)
        with col2:
            render_distribution_chart(frame, selection.focus_metric)

        st.markdown("---")
        render_worst_images(frame, selection.focus_metric)

        st.markdown("---")
        st.subheader("📅 Per-Image Metrics")
        if not frame.empty:
            st.dataframe(frame, use_container_width=True, hide_index=True)
        else:
            st.info("No per-image data available")
    else:
        st.info("Enter a prediction and a ground-truth directory in the sidebar to evaluate")

    st.markdown("---")

    # ===== Graph =====
    render_parameter_breakdown(selection.config_path)

    st.markdown("---")

    # ===== Stage Dump =====
    render_stage_maps(selection.dump_dir)

    # ===== Footer =====
    st.markdown("---")
    st.caption(f"Last updated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')} | Threshold: {selection.threshold:.2f}")


if __name__ == "__main__":
    main()
