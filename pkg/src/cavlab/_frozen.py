"""Frozen near-vacuum series constants (generated; do not edit).

Derived by cavlab.vacuum.regenerate_frozen from exact rational
series inversion of the renormalized density followed by
term-by-term integration of the characteristic-speed derivative.
"""

C_FLAT = -0.6  # exactly -3/5
C_L = -0.5170494074443305  # exactly -29/350 * 3**(5/3)
C_SERIES_NEXT = -0.5398134106007729  # nu**(7/3) coefficient, exactly -131/3150 * 3**(7/3)

# k(t) = sum_j a_j t**j with t = (3 nu)**(1/3); (numerator, denominator)
K_SERIES_T = [
    (0, 1),
    (1, 1),
    (0, 1),
    (-1, 5),
    (0, 1),
    (-29, 350),
    (0, 1),
    (-131, 3150),
    (0, 1),
    (-141679, 4851000),
    (0, 1),
    (-5682863, 225225000),
    (0, 1),
    (-4853437471, 198648450000),
    (0, 1),
    (-34134875639, 1340088750000),
    (0, 1),
    (-27678187468479727, 988117119990000000),
    (0, 1),
    (-11113400107942619, 346482626490000000),
    (0, 1),
    (-6534017434851826159997, 172344094344922500000000),
    (0, 1),
    (-7052542220554240504433, 153405182878447500000000),
]

# rho(t) likewise
RHO_SERIES_T = [
    (0, 1),
    (1, 1),
    (0, 1),
    (-1, 5),
    (0, 1),
    (3, 175),
    (0, 1),
    (2, 1575),
    (0, 1),
    (-16, 202125),
    (0, 1),
    (-362, 9384375),
    (0, 1),
    (-49711, 12415528125),
    (0, 1),
    (13952, 27918515625),
    (0, 1),
    (574406627, 2573221666640625),
    (0, 1),
    (64140842, 2706895519453125),
    (0, 1),
    (-841796802304, 224406372844951171875),
    (0, 1),
    (-326397876886, 199746331872978515625),
]
