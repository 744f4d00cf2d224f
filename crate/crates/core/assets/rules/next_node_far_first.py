import numpy as np
def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    scores = distance_matrix[current_node, unvisited_nodes] - 0.3 * distance_matrix[unvisited_nodes, destination_node]
    return unvisited_nodes[np.argmin(scores)]
