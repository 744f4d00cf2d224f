import numpy as np
def adaptive_indicators(distance_matrix):
    return np.zeros_like(distance_matrix)
