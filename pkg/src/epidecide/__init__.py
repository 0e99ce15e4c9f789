"""Decision support for epidemic countermeasure strategies.

The engine simulates a region/age-stratified SIRD epidemic under
threshold-driven switching between restriction regimes, converts the
outcomes of a Monte Carlo ensemble into life-year-loss attributes, and
ranks candidate strategies by weighted expected utility, with Pareto
front and critical-weight analysis on top.
"""

__version__ = "0.1.0"

ENGINE_VERSION = __version__
