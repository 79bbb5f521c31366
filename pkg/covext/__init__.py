"""covext - covariant observables on finite Abelian groups and their extremality."""

__version__ = "1.0.0"
