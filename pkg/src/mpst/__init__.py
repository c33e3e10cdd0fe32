"""Multiparty session types: projection, subtyping, context model checking
and a typed session pi-calculus."""

__version__ = "0.1.0"
