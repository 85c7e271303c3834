"""Mining bilingual (English/French) app-store reviews.

Classify reviews with a chat-completion model, cluster feature requests and
problem reports, summarize each cluster and rank clusters by importance.
"""

__version__ = "0.1.0"
