import numpy as np
def update_edge_distance(edge_distance, local_opt_tour, edge_n_used):
    return edge_distance * (1 + 0.1 * edge_n_used)
