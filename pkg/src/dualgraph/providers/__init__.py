from .base import (
    ChatProvider,
    ChatProviderError,
    EmbeddingProvider,
    FetchError,
    FetchProvider,
    ProviderError,
    Providers,
    ScriptExhaustedError,
    SearchProvider,
    SearchProviderError,
    SearchResult,
    UnmatchedPromptError,
)

__all__ = [
    "ChatProvider",
    "ChatProviderError",
    "EmbeddingProvider",
    "FetchError",
    "FetchProvider",
    "ProviderError",
    "Providers",
    "ScriptExhaustedError",
    "SearchProvider",
    "SearchProviderError",
    "SearchResult",
    "UnmatchedPromptError",
]
