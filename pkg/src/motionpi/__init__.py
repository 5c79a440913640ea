"""Desk-scale simulator and services for a wearable + phone + cloud data collection pipeline."""

__version__ = "0.1.0"
