import numpy as np
def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    num_unvisited = len(unvisited_nodes)
    if num_unvisited == 0:
        return None
    distances = distance_matrix[current_node, unvisited_nodes]
    avg_distance = np.mean(distances)
    threshold = 0.5 * avg_distance
    close_nodes = unvisited_nodes[distances <= threshold]
    scores = {}
    if len(close_nodes) > 0:
        for node in close_nodes:
            immediate_distance = distance_matrix[current_node, node]
            future_savings = np.sum(distance_matrix[node, close_nodes]) / (len(close_nodes) - 1) if len(close_nodes) > 1 else 0
            diversity_score = np.mean(distance_matrix[node, unvisited_nodes]) / (immediate_distance + 1)
            scores[node] = immediate_distance + (0.6 * (1 - future_savings)) - (0.4 * diversity_score)
    if not scores:
        far_nodes = unvisited_nodes[distances > threshold]
        for node in far_nodes:
            scores[node] = distance_matrix[current_node, node]
    next_node = min(scores, key=scores.get) if scores else None
    return next_node
