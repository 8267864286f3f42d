"""Self-supervised energy: weights, terms and the forward tape"""
