"""Persistence, configuration and reporting"""
