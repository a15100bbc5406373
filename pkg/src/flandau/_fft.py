"""Thin wrapper around scipy.fft with a process-wide worker count.

All spectral work in the package funnels through these helpers so that the
"threads" configuration key has one place to act.  scipy's pocketfft splits
work over the batch dimensions only, so results are bitwise independent of
the worker count.
"""

import os

import scipy.fft as _sfft

_workers = None


def set_workers(n):
    """Set FFT worker count; 0 or None selects the CPU count."""
    global _workers
    if not n:
        n = os.cpu_count() or 1
    _workers = int(n)


def get_workers():
    if _workers is None:
        set_workers(0)
    return _workers


def fftn(a, axes):
    return _sfft.fftn(a, axes=axes, workers=get_workers())


def ifftn(a, axes):
    return _sfft.ifftn(a, axes=axes, workers=get_workers())


def fft(a, axis):
    return _sfft.fft(a, axis=axis, workers=get_workers())


def ifft(a, axis):
    return _sfft.ifft(a, axis=axis, workers=get_workers())
