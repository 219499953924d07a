import asyncio
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Generic, TypeVar

from loguru import logger

from src.config.settings import get_settings

ItemT = TypeVar("ItemT")
ResultT = TypeVar("ResultT")


@dataclass(slots=True)
class PendingEvaluation(Generic[ResultT]):
    index: int
    label: str
    value: ResultT | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BatchEvaluator:
    """Runs independent evaluations (growth probes, cone samples, scenario sweeps) with bounded concurrency.

    Results come back in submission order, so seeded batches stay deterministic regardless of
    thread scheduling.
    """

    def __init__(self, concurrency: int | None = None):
        requested = get_settings().concurrency if concurrency is None else concurrency
        self.concurrency = max(1, requested)

    async def run_all(
        self, fn: Callable[[ItemT], ResultT], items: Sequence[ItemT], label: str = "item"
    ) -> list[PendingEvaluation[ResultT]]:
        logger.debug("Starting batch of {} {} evaluations (concurrency {})", len(items), label, self.concurrency)
        semaphore = asyncio.Semaphore(self.concurrency)
        tasks = [
            self._safe_evaluate(semaphore=semaphore, index=index, fn=fn, item=item, label=label)
            for index, item in enumerate(items)
        ]
        results = list(await asyncio.gather(*tasks))
        failed = sum(1 for result in results if not result.ok)
        if failed:
            logger.warning("Batch of {} {} evaluations finished with {} failures", len(results), label, failed)
        return results

    async def _safe_evaluate(
        self,
        semaphore: asyncio.Semaphore,
        index: int,
        fn: Callable[[ItemT], ResultT],
        item: ItemT,
        label: str,
    ) -> PendingEvaluation[ResultT]:
        async with semaphore:
            try:
                value = await asyncio.to_thread(fn, item)
                return PendingEvaluation(index=index, label=label, value=value)
            except Exception as exc:  # noqa: BLE001
                logger.exception("Evaluation failure for {} #{}", label, index)
                return PendingEvaluation(index=index, label=label, error=str(exc))

    def map(
        self, fn: Callable[[ItemT], ResultT], items: Sequence[ItemT], label: str = "item"
    ) -> list[PendingEvaluation[ResultT]]:
        """Synchronous entry point; must not be called from inside a running event loop."""
        return asyncio.run(self.run_all(fn, items, label))
