"""Matrix-analytic solver and heavy-tail asymptotics for GI/G/1-type Markov chains."""

__version__ = "0.1.0"
