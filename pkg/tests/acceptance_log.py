"""Collects one verdict line per acceptance criterion for the end-of-run summary."""

import functools

LINES = []


def record(name, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    LINES.append(line)
    print(line)
    return passed


def criterion(name):
    """Make sure a criterion that raises before reaching :func:`record` still reports a FAIL line."""

    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except AssertionError:
                raise
            except Exception as exc:
                record(name, False, f"{type(exc).__name__}: {exc}")
                raise

        return inner

    return wrap
