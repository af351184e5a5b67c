"""Task-driven data capsule sharing over a type-III pairing."""
