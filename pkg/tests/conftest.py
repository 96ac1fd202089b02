import threading

import numpy as np
import pytest

from pricure.ring import FixedPointCodec, RingModulus
from pricure import sharing


@pytest.fixture
def mod():
    return RingModulus()


@pytest.fixture
def small_mod():
    return RingModulus(251)


@pytest.fixture
def codec(mod):
    return FixedPointCodec(mod)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_two_workers(fn_a, fn_b):
    """Run the two worker views concurrently over a local channel pair.

    Each fn receives its channel and must return that worker's result.
    Exceptions propagate to the caller.
    """
    ch_a, ch_b = sharing.local_channel_pair(timeout=10.0)
    results = {}
    errors = []

    def runner(name, fn, ch):
        try:
            results[name] = fn(ch)
        except Exception as exc:
            errors.append(exc)

    threads = [threading.Thread(target=runner, args=("a", fn_a, ch_a)),
               threading.Thread(target=runner, args=("b", fn_b, ch_b))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return results["a"], results["b"]


@pytest.fixture
def two_workers():
    return run_two_workers
