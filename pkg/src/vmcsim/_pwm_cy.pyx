# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled PWM sampling kernel; bit-identical to vmcsim._pwm_py."""

from libc.stdint cimport uint64_t, uint8_t, int64_t

BACKEND = "cython"

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15UL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t M2 = 0x94D049BB133111EBUL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline double _phase(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    z = z ^ (z >> 31)
    return <double> (z >> 11) * INV_2_53


def fill_samples(uint8_t[::1] ring, long head, long filled, long ones,
                 object seed, object pos, object count,
                 double duty_spp, long spp):
    """Same contract as vmcsim._pwm_py.fill_samples."""
    cdef long cap = ring.shape[0]
    cdef int64_t cnt = <int64_t> count
    cdef uint64_t p = <uint64_t> pos
    cdef uint64_t sd = <uint64_t> seed
    cdef uint64_t j, cur_j
    cdef double phi, s
    cdef uint8_t bit
    cdef int64_t k

    if cnt <= 0:
        return head, filled, ones, pos
    if cnt > cap:
        p += <uint64_t> (cnt - cap)
        cnt = cap

    cur_j = p // <uint64_t> spp
    phi = _phase(sd + (cur_j + 1) * GAMMA)
    for k in range(cnt):
        j = p // <uint64_t> spp
        if j != cur_j:
            cur_j = j
            phi = _phase(sd + (cur_j + 1) * GAMMA)
        s = <double> (p - j * <uint64_t> spp)
        bit = 1 if (s + phi) < duty_spp else 0
        if filled == cap:
            ones -= ring[head]
        else:
            filled += 1
        ring[head] = bit
        ones += bit
        head += 1
        if head == cap:
            head = 0
        p += 1

    return head, filled, ones, pos + count
