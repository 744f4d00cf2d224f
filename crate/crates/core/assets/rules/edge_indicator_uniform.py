import numpy as np
def adaptive_indicators(distance_matrix):
    return np.ones_like(distance_matrix)
