"""wpcn HTTP service."""
