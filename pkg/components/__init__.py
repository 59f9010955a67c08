"""
UI Components for the ASGNet evaluation dashboard
"""

from .sidebar import render_sidebar
from .metrics import render_metrics
from .charts import render_per_image_chart, render_distribution_chart, render_worst_images, render_parameter_breakdown
from .stage_maps import render_stage_maps

__all__ = [
    'render_sidebar',
    'render_metrics',
    'render_per_image_chart',
    'render_distribution_chart',
    'render_worst_images',
    'render_parameter_breakdown',
    'render_stage_maps'
]
