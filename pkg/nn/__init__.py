"""
Minimal numpy network engine
Hand-derived forward/backward kernels, layers, MSE dual loss and Adam
"""
