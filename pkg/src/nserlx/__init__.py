"""Small-data dynamics of a compressible fluid coupled to a pressureless-drag particle phase.

Modules: ``grid`` and ``lp`` (periodic grids, dyadic blocks, Besov norms),
``model`` (perturbation system), ``linear`` (Fourier symbol, semigroup,
energy functionals), ``solver`` (integrating-factor time stepping),
``experiments`` (initial data, decay fits), ``config``/``io``/``cli``.
"""

__version__ = "0.1.0"
