"""
Top-level agent package exports.

Expose the guidance coordinator so callers import from agents import build_controller
"""
from .coordinator_agent import GUIDANCE_LAWS, GuidanceModels, build_controller, fly
