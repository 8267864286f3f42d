"""Gradients, optimizer, per-image fitting and corrective training"""
