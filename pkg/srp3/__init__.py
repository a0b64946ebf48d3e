"""
SRP-3: the symbolic model corpus and a numeric reference implementation.

Modules:
    corpus     manifest loading, witness predicates, regression runner
    reference  modular-arithmetic SRP-3 and the malicious-server forgery
    mapping    docs/MAPPING.md completeness check
"""
