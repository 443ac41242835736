"""
Decorators for caching estimator results.
Keys are built from the dataset fingerprint, the column set and the solver
settings, so repeated estimates across selection steps hit the cache.
"""

import hashlib
import json
import logging
from functools import wraps
from typing import Any, Callable, Dict, TypeVar, cast

from django.conf import settings
from django.core.cache import cache

from valuation.services.models.data_models import Dataset, SolverConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")


class CacheKeyGenerator:
    """
    Helper class to generate cache keys for estimator calls.
    Keys stay short and character-safe for Memcached and Redis backends.
    """

    @staticmethod
    def _describe(value: Any) -> Any:
        if isinstance(value, Dataset):
            return value.fingerprint()
        if isinstance(value, SolverConfig):
            return value.to_dict()
        if isinstance(value, (list, tuple, set, frozenset)):
            items = [CacheKeyGenerator._describe(v) for v in value]
            return sorted(items, key=str) if isinstance(value, (set, frozenset)) else items
        return str(value)

    @staticmethod
    def generate_key(func: Callable, args: tuple, kwargs: Dict[str, Any]) -> str:
        """
        Generate a cache key from the function name and its arguments.

        Args:
            func: The function being cached
            args: Positional arguments (a leading service instance is skipped)
            kwargs: Keyword arguments

        Returns:
            str: Cache key string
        """
        base_key = f"{func.__module__}.{func.__qualname__}"

        # Methods are cached per arguments, not per instance
        is_method = "." in func.__qualname__ and "<locals>" not in func.__qualname__
        if args and is_method and not isinstance(args[0], Dataset):
            args = args[1:]
        if not args and not kwargs:
            return base_key

        arg_dict = {f"arg_{i}": CacheKeyGenerator._describe(a) for i, a in enumerate(args)}
        for key, value in sorted(kwargs.items()):
            arg_dict[key] = CacheKeyGenerator._describe(value)

        args_json = json.dumps(arg_dict, sort_keys=True)
        args_hash = hashlib.sha256(args_json.encode()).hexdigest()
        return f"{base_key}:{args_hash}"


def cached_estimate(key_prefix: str = "mi", cache_timeout: int | None = None) -> Callable:
    """
    Decorator caching estimator results in the Django cache.

    Errors propagate to the caller and are never cached.

    Args:
        key_prefix: Prefix for cache keys
        cache_timeout: Seconds to keep a result (defaults to LEANVIZ_CACHE_TIMEOUT)

    Returns:
        Callable: Decorated function
    """

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T:
            cache_key = f"{key_prefix}:{CacheKeyGenerator.generate_key(func, args, kwargs)}"

            sentinel = object()
            cached_result = cache.get(cache_key, sentinel)
            if cached_result is not sentinel:
                logger.debug(f"Cache hit for {func.__name__}")
                return cast(T, cached_result)

            result = func(*args, **kwargs)

            timeout = (
                cache_timeout
                if cache_timeout is not None
                else getattr(settings, "LEANVIZ_CACHE_TIMEOUT", 3600)
            )
            try:
                cache.set(cache_key, result, timeout)
                logger.debug(f"Cached result for {func.__name__} with key {cache_key}")
            except Exception as e:
                logger.error(f"Error in caching result for {func.__name__}: {str(e)}")
            return result

        return wrapper

    return decorator


def clear_cache_for(
    func: Callable, *args: Any, key_prefix: str = "mi", **kwargs: Any
) -> None:
    """
    Clear the cached result of one call.

    Args:
        func: The undecorated function whose cache entry should be cleared
        args: Positional arguments used in the original call
        key_prefix: Prefix used by the decorator
        kwargs: Keyword arguments used in the original call
    """
    cache_key = f"{key_prefix}:{CacheKeyGenerator.generate_key(func, args, kwargs)}"
    cache.delete(cache_key)
    logger.debug(f"Cache cleared for {func.__name__} with key {cache_key}")
