"""
Preprocessing for EyeAffect
Annotations, eye-slot extraction, augmentation and synthetic fixtures
"""
