"""quasikin: deterministic kinetic simulation on the torus with a
Monge-Ampere field coupling, an incompressible Euler reference solver, and
diagnostics for the small-permittivity (quasineutral) regime."""

__version__ = "0.1.0"
