"""Physical constants (SI units)."""

from __future__ import annotations

import math

C0 = 299792458.0                 # vacuum speed of light, m/s
EPS0 = 8.8541878128e-12          # vacuum permittivity, F/m
MU0 = 1.25663706212e-6           # vacuum permeability, H/m
ETA0 = math.sqrt(MU0 / EPS0)     # vacuum wave impedance, ohm

NM = 1e-9
UM = 1e-6
FS = 1e-15
