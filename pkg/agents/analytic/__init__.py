"""Analytic comparison laws package exports"""

from .itcg_laws import approx_tgo_png, itcg1_command, itcg2_command
