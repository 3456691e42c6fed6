"""
Training for EyeAffect
"""
