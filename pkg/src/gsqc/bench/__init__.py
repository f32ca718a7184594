"""Baselines, Monte-Carlo evaluation, sweeps and data ingestion."""
