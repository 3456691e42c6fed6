"""
Evaluation for EyeAffect
Regression metrics and gradient attention maps
"""
