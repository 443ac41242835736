"""
Copula-entropy estimators: the max-entropy dual solver and the Gaussian copula fast path.
"""
