import os
import logging
from concurrent.futures import ThreadPoolExecutor

from .errors import InvalidInputError


class TrialRunner:
    """
    Executes independent Monte Carlo trials.

    Trial ``t`` always receives ``rng.spawn(t)``, and results are returned in
    trial order, so the outcome does not depend on the number of workers.
    """

    def __init__(self, workers=None):
        if workers is None:
            workers = os.environ.get('PACCONV_WORKERS') or 1
        try:
            self.workers = int(workers)
        except (TypeError, ValueError):
            raise InvalidInputError(f'workers must be a positive integer, got {workers!r}')
        if self.workers < 1:
            raise InvalidInputError(f'workers must be a positive integer, got {workers!r}')

    def __repr__(self):
        return f'TrialRunner(workers={self.workers})'

    def map(self, fn, rng, trials):
        """
        Runs ``fn(stream)`` for ``trials`` child streams of ``rng``.

        Args:
            fn (callable): trial body, receives an RngStream.
            rng (RngStream): parent stream.
            trials (int): number of trials, >= 1.

        Returns:
            List of trial results in trial order.
        """
        if int(trials) < 1:
            raise InvalidInputError(f'trials must be at least 1, got {trials}')
        streams = [rng.spawn(t) for t in range(int(trials))]
        logging.debug(f'[LAB]: running {len(streams)} trials on {self.workers} worker(s)')

        if self.workers == 1:
            return [fn(stream) for stream in streams]

        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(fn, stream) for stream in streams]
            return [future.result() for future in futures]
