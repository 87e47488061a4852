"""Reed-Solomon coding over GF(2^8) with erasure support.

Systematic RS(n, n - t) up to n = 255, the BCH view: a codeword is the
message followed by ``t`` parity symbols.  Decoding corrects ``e`` unknown
errors and ``f`` known-position erasures whenever ``2e + f <= t``.

The extractor flags every guessed payload bit, which is what makes erasure
decoding worth having: a payload word the adversary reverted or deleted
turns into a half-price erasure instead of a full error.

Field arithmetic uses log/antilog tables over the 0x11D primitive
polynomial.  Polynomials are lists of coefficients, highest degree first.
"""

from __future__ import annotations

from functools import lru_cache

from .errors import EccDecodeError

__all__ = ["encode", "decode", "MAX_BLOCK"]

MAX_BLOCK = 255
_PRIM = 0x11D

_EXP = [0] * 512
_LOG = [0] * 256
_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= _PRIM
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]


def _mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def _div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _EXP[(_LOG[a] - _LOG[b]) % 255]


def _inverse(a: int) -> int:
    return _EXP[255 - _LOG[a]]


def _pow(a: int, n: int) -> int:
    return _EXP[(_LOG[a] * n) % 255]


def _poly_scale(p: list[int], x: int) -> list[int]:
    return [_mul(c, x) for c in p]


def _poly_add(p: list[int], q: list[int]) -> list[int]:
    r = [0] * max(len(p), len(q))
    for i, c in enumerate(p):
        r[i + len(r) - len(p)] = c
    for i, c in enumerate(q):
        r[i + len(r) - len(q)] ^= c
    return r


def _poly_mul(p: list[int], q: list[int]) -> list[int]:
    r = [0] * (len(p) + len(q) - 1)
    for j, qc in enumerate(q):
        for i, pc in enumerate(p):
            r[i + j] ^= _mul(pc, qc)
    return r


def _poly_eval(p: list[int], x: int) -> int:
    y = p[0]
    for c in p[1:]:
        y = _mul(y, x) ^ c
    return y


def _poly_rem(dividend: list[int], divisor: list[int]) -> list[int]:
    out = list(dividend)
    for i in range(len(dividend) - len(divisor) + 1):
        coef = out[i]
        if coef != 0:
            for j in range(1, len(divisor)):
                if divisor[j] != 0:
                    out[i + j] ^= _mul(divisor[j], coef)
    return out[-(len(divisor) - 1):]


@lru_cache(maxsize=None)
def _generator_poly(nsym: int) -> list[int]:
    g = [1]
    for i in range(nsym):
        g = _poly_mul(g, [1, _EXP[i]])
    return g


def encode(data: bytes, nsym: int) -> bytes:
    """Append ``nsym`` parity bytes to ``data`` (systematic form)."""
    if nsym < 1:
        raise ValueError("nsym must be positive")
    if len(data) + nsym > MAX_BLOCK:
        raise ValueError(f"block too long: {len(data)} + {nsym} > {MAX_BLOCK}")
    parity = _poly_rem(list(data) + [0] * nsym, _generator_poly(nsym))
    return bytes(data) + bytes(parity)


def _syndromes(msg: list[int], nsym: int) -> list[int]:
    # Leading zero pads the list so index k holds the syndrome at alpha**(k-1).
    return [0] + [_poly_eval(msg, _EXP[i]) for i in range(nsym)]


def _errata_locator(coef_pos: list[int]) -> list[int]:
    loc = [1]
    for p in coef_pos:
        loc = _poly_mul(loc, _poly_add([1], [_EXP[p], 0]))
    return loc


def _error_evaluator(synd_rev: list[int], err_loc: list[int], nsym: int) -> list[int]:
    return _poly_rem(_poly_mul(synd_rev, err_loc), [1] + [0] * (nsym + 1))


def _correct_errata(msg: list[int], synd: list[int], err_pos: list[int]) -> list[int]:
    """Forney algorithm; ``err_pos`` are indices into ``msg``."""
    coef_pos = [len(msg) - 1 - p for p in err_pos]
    err_loc = _errata_locator(coef_pos)
    err_eval = _error_evaluator(synd[::-1], err_loc, len(err_loc) - 1)
    x_terms = [_pow(2, p) for p in coef_pos]
    magnitudes = [0] * len(msg)
    for i, xi in enumerate(x_terms):
        xi_inv = _inverse(xi)
        prime = 1
        for j, xj in enumerate(x_terms):
            if j != i:
                prime = _mul(prime, 1 ^ _mul(xi_inv, xj))
        if prime == 0:
            raise EccDecodeError("could not find error magnitudes")
        y = _mul(xi, _poly_eval(err_eval, xi_inv))
        magnitudes[err_pos[i]] = _div(y, prime)
    return [m ^ e for m, e in zip(msg, magnitudes)]


def _error_locator(fsynd: list[int], nsym: int, erase_count: int) -> list[int]:
    """Berlekamp-Massey over erasure-folded (Forney) syndromes.

    Folding leaves only the first ``nsym - erase_count`` entries
    meaningful, so the recurrence stops there.
    """
    err_loc = [1]
    old_loc = [1]
    for k in range(nsym - erase_count):
        delta = fsynd[k]
        for j in range(1, len(err_loc)):
            delta ^= _mul(err_loc[-(j + 1)], fsynd[k - j])
        old_loc.append(0)
        if delta != 0:
            if len(old_loc) > len(err_loc):
                new_loc = _poly_scale(old_loc, delta)
                old_loc = _poly_scale(err_loc, _inverse(delta))
                err_loc = new_loc
            err_loc = _poly_add(err_loc, _poly_scale(old_loc, delta))
    while err_loc and err_loc[0] == 0:
        err_loc.pop(0)
    return err_loc


def _find_errors(err_loc: list[int], nmess: int) -> list[int]:
    """Chien search: roots of the locator give the error positions."""
    errs = len(err_loc) - 1
    pos = []
    for i in range(nmess):
        if _poly_eval(err_loc, _EXP[i]) == 0:
            pos.append(nmess - 1 - i)
    if len(pos) != errs:
        raise EccDecodeError("error locator degree does not match its roots")
    return pos


def _forney_syndromes(synd: list[int], erase_pos: list[int], nmess: int) -> list[int]:
    fsynd = list(synd[1:])
    for p in erase_pos:
        x = _pow(2, nmess - 1 - p)
        for j in range(len(fsynd) - 1):
            fsynd[j] = _mul(fsynd[j], x) ^ fsynd[j + 1]
    return fsynd


def decode(msg: bytes, nsym: int, erase_pos: list[int] | None = None) -> bytes:
    """Correct a codeword and return its message part.

    ``erase_pos`` lists known-bad byte positions within ``msg`` (message
    and parity alike).  Raises :class:`EccDecodeError` when the codeword
    is beyond the correction bound.  Beyond-bound inputs can also
    miscorrect silently, which is why sealed payloads are MAC-verified
    after this layer.
    """
    if len(msg) > MAX_BLOCK:
        raise ValueError(f"codeword longer than {MAX_BLOCK}")
    if nsym < 1 or nsym >= len(msg):
        raise ValueError("parity count must be in [1, len(msg))")
    buf = list(msg)
    erase_pos = sorted(set(erase_pos or []))
    for p in erase_pos:
        if not 0 <= p < len(buf):
            raise ValueError(f"erasure position {p} outside codeword")
        buf[p] = 0
    if len(erase_pos) > nsym:
        raise EccDecodeError("more erasures than parity symbols")
    synd = _syndromes(buf, nsym)
    if max(synd) == 0:
        return bytes(buf[:-nsym])
    fsynd = _forney_syndromes(synd, erase_pos, len(buf))
    err_loc = _error_locator(fsynd, nsym, len(erase_pos))
    err_pos = _find_errors(err_loc[::-1], len(buf)) if len(err_loc) > 1 else []
    if 2 * len(err_pos) + len(erase_pos) > nsym:
        raise EccDecodeError("too many errors to correct")
    all_pos = sorted(set(erase_pos) | set(err_pos))
    if not all_pos:
        raise EccDecodeError("syndromes non-zero but no error located")
    buf = _correct_errata(buf, synd, all_pos)
    if max(_syndromes(buf, nsym)) != 0:
        raise EccDecodeError("correction failed to produce a valid codeword")
    return bytes(buf[:-nsym])
