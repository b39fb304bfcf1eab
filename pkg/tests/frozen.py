"""Reference values produced by oracles/derive_values.py (sympy), frozen here."""

PTS = [(0.3, 1.1), (2.0, 4.5), (5.5, 0.7)]

# -(a d1 w) z + a^2 d11 w z^2 / 2 for a = 0.7, z = 0.3, w = cos x1
ROUGH_INCREMENT_CONST = [0.04099407381366169, 0.20012849737925764, -0.1637896368929046]
# velocity of w = 2 cos x1 cos x2
BS_TG_U1 = [-0.8514029104439915, -0.40679606609588603, -0.456537603009172]
BS_TG_U2 = [0.13404681954446868, -0.1916760780080705, -0.5396270058266687]
# -(1/2) (cos 2x1 + cos 2x2) / 4
TG_PRESSURE_T05 = [-0.029604312206791564, 0.1955967353435361, -0.021799105111036478]
# xi = (-sin x1 cos x2, cos x1 sin x2), u = (cos x2, sin x1)
LIE_ADJOINT_1 = [1.033167581892156, -1.2243900581866143, 1.029353061448968]
LIE_ADJOINT_2 = [-0.11946351217085756, -0.18736913908881345, 0.3476372616646565]
# same xi, u = (0.3, -1.2)
LIE_ADJOINT_CONST_1 = [-0.18604266203104372, 1.0929553462921378, 0.7080320302196621]
LIE_ADJOINT_CONST_2 = [0.44099337638140507, 0.3719260922998975, 0.7867811153151641]
# mean of the adjoint Lie derivative for xi = (0.7 cos x2, 0), u = (sin x2, 0)
HARMONIC_FIRST_ORDER = [0.0, 0.35]
# x + xi Z + (xi . grad xi) Z^2 / 2 for the cellular xi, Z = 0.2
POINT_MAP_1 = [0.2788370608250566, 2.0307671906485343, 5.597925499099826]
POINT_MAP_2 = [1.2783655461269943, 4.585480398071595, 0.801162017901719]
# second level of (sin r, cos r) on [0, 1/2], entry [l][k]
CIRCLE_ZZ_HALF = [[0.11492442353296507, -0.039632253798025874],
                  [-0.019057792402228872, 0.007493014576662213]]
TG_L4 = 1.224744871391589
RECT_CIRCULATION = 3.141592653589793
