"""Chit-chat query understanding for conversational bots.

Detects whether a query is small talk, matches it against curated
specific intents, classifies generic intents, and gates which answers
are safe to autogenerate.
"""

__version__ = "0.1.0"
