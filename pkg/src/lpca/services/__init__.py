"""Numerical services. Pure numpy/scipy; only ``ledger`` touches the ORM."""
