"""covext test suite

Pytest suite for the covariant observable library and its command line tool.
"""
