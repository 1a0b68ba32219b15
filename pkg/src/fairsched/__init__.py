"""Distributionally robust fair task assignment."""
