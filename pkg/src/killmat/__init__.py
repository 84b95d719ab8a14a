"""killmat: lightweight fine-grained predictive mutation testing.

Learns, from mutation-tool outputs and static/dynamic code features, whether
each test case kills each mutant; produces predicted kill matrices, mutation
scores, feature-importance reports, and mutation-based test prioritizations.
"""

__version__ = "0.1.0"
