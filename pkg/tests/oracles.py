"""Expected values derived by hand from the example systems, frozen before
the implementation was exercised.  Tests compare against these, never
against values produced by the code under test."""

# example1: f0 = (x2, x3, 0), f1 = (x1, 0, 0), f2 = (0, 0, 1)
EX1_F0_F2 = ["0", "-1", "0"]
EX1_AD2_F0_F2 = ["1", "0", "0"]
EX1_F0_F1 = ["x2", "0", "0"]
EX1_G = ["u1*x1 + x2", "x3", "u2"]
EX1_G_RANK_AT_X1_1 = 2
EX1_W1_RANK_GENERIC = 3
EX1_GENERIC_K = 2
EX1_PSI = ["x1", "x2"]
EX1_U1 = "(z1_d1 - z2)/z1"
EX1_U2 = "z2_d2"
EX1_PSI1 = ["u1*x1 + x2", "x3"]
EX1_M_RANK, EX1_N_RANK = 4, 6
EX1_DEG_TOWER = [1, 2, 3]
EX1_DEG_INDICES = [3]
EX1_DEG_OUTPUT = ["x1", "u1"]
# zdot = x2 + u1*x1 contains no u2
EX1_ZDOT = "u1*x1 + x2"

# example2: f0 = 0, f1 = (1, x3, x4, 0), f2 = (0, 0, 0, 1), f3 = (0, 0, x1, 0)
EX2_F1_F3 = ["0", "-x1", "1", "0"]
EX2_F1_F2 = ["0", "0", "-1", "0"]
EX2_PSI_K1 = ["2*x2*x4 - x3^2", "x1*x4 - x3", "x4"]
EX2_PSI_K3 = ["x1", "x2", "x4"]
EX2_G = ["u1", "u1*x3", "u1*x4 + u3*x1", "u2"]
EX2_WITNESS = ["0", "0", "-1", "0"]
EX2_WITNESS_PAIR = [1, 2]

# example3
EX3_DEG_TOWER = [2, 4, 6]
EX3_DEG_INDICES = [3, 3]
EX3_DEG_OUTPUT = ["x1", "x2", "u3"]

# x1' = u1, x2' = x2: Gamma_0 = span(d/dx1) is already closed under ad_g
NEG_TAG = "OutsideOmega"
NEG_RANKS = [1, 1]
