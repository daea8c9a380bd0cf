"""Integer-only tanh via table lookup with linear interpolation.

Q6.10 fixed point (10 fractional bits). The table samples tanh over
[0, 4] at step 1/64; odd symmetry extends it to negative inputs and
|x| >= 4 saturates at +/-1023/1024. Usable in float-free environments.
"""

from __future__ import annotations

from dataclasses import dataclass

FIXED_SCALE = 1024  # 2**10
_STEP_BITS = 4  # table step = 16 raw units = 1/64
_SAT_RAW = 4 * FIXED_SCALE
_SAT_VALUE = 1023

# round(tanh(i/64) * 1024) for i in 0..256; validated against a
# high-precision reference in the test suite.
TANH_TABLE: tuple[int, ...] = (
    0, 16, 32, 48, 64, 80, 96, 112, 127, 143, 159, 174,
    190, 205, 220, 236, 251, 266, 281, 295, 310, 324, 339, 353,
    367, 381, 395, 408, 421, 435, 448, 461, 473, 486, 498, 510,
    522, 534, 545, 557, 568, 579, 590, 600, 611, 621, 631, 641,
    650, 660, 669, 678, 687, 696, 704, 713, 721, 729, 737, 744,
    752, 759, 766, 773, 780, 787, 793, 799, 805, 812, 817, 823,
    829, 834, 839, 845, 850, 855, 859, 864, 869, 873, 877, 882,
    886, 890, 894, 897, 901, 905, 908, 911, 915, 918, 921, 924,
    927, 930, 932, 935, 938, 940, 943, 945, 948, 950, 952, 954,
    956, 958, 960, 962, 964, 966, 968, 969, 971, 972, 974, 975,
    977, 978, 980, 981, 982, 984, 985, 986, 987, 988, 989, 990,
    991, 992, 993, 994, 995, 996, 997, 998, 999, 999, 1000, 1001,
    1001, 1002, 1003, 1003, 1004, 1005, 1005, 1006, 1006, 1007, 1007, 1008,
    1008, 1009, 1009, 1010, 1010, 1011, 1011, 1012, 1012, 1012, 1013, 1013,
    1013, 1014, 1014, 1014, 1015, 1015, 1015, 1015, 1016, 1016, 1016, 1016,
    1017, 1017, 1017, 1017, 1018, 1018, 1018, 1018, 1018, 1018, 1019, 1019,
    1019, 1019, 1019, 1019, 1020, 1020, 1020, 1020, 1020, 1020, 1020, 1020,
    1021, 1021, 1021, 1021, 1021, 1021, 1021, 1021, 1021, 1021, 1021, 1022,
    1022, 1022, 1022, 1022, 1022, 1022, 1022, 1022, 1022, 1022, 1022, 1022,
    1022, 1022, 1022, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023,
    1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023, 1023,
    1023, 1023, 1023, 1023, 1023,
)


@dataclass(frozen=True)
class FixedQ:
    """Signed Q6.10 fixed-point number (value = raw / 1024)."""

    raw: int

    @classmethod
    def from_float(cls, x: float) -> "FixedQ":
        return cls(round(x * FIXED_SCALE))

    @property
    def value(self) -> float:
        return self.raw / FIXED_SCALE

    def __neg__(self) -> "FixedQ":
        return FixedQ(-self.raw)


def build_table() -> tuple[int, ...]:
    """The golden tanh table (257 Q10 samples over [0, 4])."""
    return TANH_TABLE


def tanh_fixed_raw(x_raw: int) -> int:
    """tanh on raw Q10 integers; integer arithmetic only."""
    if x_raw < 0:
        return -tanh_fixed_raw(-x_raw)
    if x_raw >= _SAT_RAW:
        return _SAT_VALUE
    i = x_raw >> _STEP_BITS
    frac = x_raw & ((1 << _STEP_BITS) - 1)
    lo = TANH_TABLE[i]
    # interpolate with round-to-nearest on the 4-bit fraction
    return lo + (((TANH_TABLE[i + 1] - lo) * frac + 8) >> _STEP_BITS)


def tanh_fixed(x: FixedQ) -> FixedQ:
    return FixedQ(tanh_fixed_raw(x.raw))


def table_csv() -> str:
    """Golden table as CSV for audit."""
    lines = ["x_q,theta_q"]
    lines.extend(f"{i << _STEP_BITS},{v}" for i, v in enumerate(TANH_TABLE))
    return "\n".join(lines) + "\n"
