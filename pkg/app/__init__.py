"""Realization of prescribed limit-cycle configurations by polynomial vector fields."""
