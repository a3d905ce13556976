"""
conns: Newton reference integration, training data, fixed-point networks,
contraction projections and evaluation.
"""
