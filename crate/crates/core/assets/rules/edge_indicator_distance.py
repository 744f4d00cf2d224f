import numpy as np
def adaptive_indicators(distance_matrix):
    return np.copy(distance_matrix)
