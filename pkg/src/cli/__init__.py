"""Command-line front end for tapudd."""
