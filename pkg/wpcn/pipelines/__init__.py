"""
wpcn - Pipelines
================
SDP assembly and audit, allocation algorithms and the Monte-Carlo harness.
"""
