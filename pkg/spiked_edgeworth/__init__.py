"""
Edgeworth correction for the largest eigenvalue of a rank-one spiked sample covariance matrix.
"""
