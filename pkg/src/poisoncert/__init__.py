"""Certified robustness and attacks under instance-targeted data poisoning."""
