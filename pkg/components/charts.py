"""
Chart components for the ASGNet evaluation dashboard
"""

import pandas as pd
import plotly.express as px
import streamlit as st

from reports import METRIC_LABELS, get_parameter_breakdown, worst_images


def render_per_image_chart(frame: pd.DataFrame, metric: str):
    """Render one bar per image for the chosen metric"""
    label = METRIC_LABELS[metric]
    st.subheader(f"📊 {label} per Image")
    if frame.empty:
        st.info("No evaluation data available")
        return

    fig = px.bar(
        frame,
        x='name',
        y=metric,
        color=metric,
        color_continuous_scale='Blues_r' if metric == 'mae' else 'Blues',
        hover_data=[m for m in METRIC_LABELS if m != metric]
    )
    fig.update_layout(
        xaxis_title="Image",
        yaxis_title=label,
        height=350
    )
    st.plotly_chart(fig, use_container_width=True)


def render_distribution_chart(frame: pd.DataFrame, metric: str):
    """Render the histogram of the chosen metric"""
    label = METRIC_LABELS[metric]
    st.subheader(f"📈 {label} Distribution")
    if frame.empty:
        st.info("No evaluation data available")
        return

    fig = px.histogram(frame, x=metric, nbins=20, color_discrete_sequence=['#29b5e8'])
    fig.update_layout(
        xaxis_title=label,
        yaxis_title="Images",
        showlegend=False,
        height=350
    )
    st.plotly_chart(fig, use_container_width=True)


def render_worst_images(frame: pd.DataFrame, metric: str):
    """Render the images that score worst on the chosen metric"""
    st.subheader(f"🔍 Hardest Images by {METRIC_LABELS[metric]}")
    worst = worst_images(frame, metric)
    if worst.empty:
        st.info("No evaluation data available")
        return
    st.dataframe(worst, use_container_width=True, hide_index=True)


def render_parameter_breakdown(config_path):
    """Render the learnable-parameter split across graph parts"""
    col1, col2 = st.columns(2)

    breakdown = get_parameter_breakdown(config_path)

    with col1:
        st.subheader("🧮 Parameters by Part")
        if not breakdown.empty:
            fig = px.pie(
                breakdown,
                values='Parameters',
                names='Part',
                color_discrete_sequence=px.colors.sequential.Blues_r
            )
            fig.update_layout(height=300)
            st.plotly_chart(fig, use_container_width=True)
        else:
            st.info("No layout available")

    with col2:
        st.subheader("📋 Parameter Counts")
        if not breakdown.empty:
            st.dataframe(breakdown, use_container_width=True, hide_index=True)
            st.caption(f"Total: {int(breakdown['Parameters'].sum()):,} learnable scalars")
        else:
            st.info("No layout available")
