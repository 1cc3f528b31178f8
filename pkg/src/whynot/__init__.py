"""Why-not explanations for queries over nested relations.

A self-contained nested-relational query engine (bag semantics) plus an
explanation engine that, given a database, a query plan, a why-not
question and attribute-alternative sets, computes ranked query-based
explanations: sets of operators whose reparameterization can produce the
missing answer.  A brute-force oracle and a lineage-based baseline are
included for validation.
"""

__version__ = "0.1.0"
