import numpy as np
def adaptive_indicators(distance_matrix):
    num_nodes = distance_matrix.shape[0]
    indicators = np.zeros((num_nodes, num_nodes))
    min_edge = np.full(num_nodes, np.inf)
    min_edge[0] = 0
    visited = np.zeros(num_nodes, dtype=bool)
    total_mst_cost = 0
    for _ in range(num_nodes):
        u = np.argmin(np.where(visited, np.inf, min_edge))
        visited[u] = True
        total_mst_cost += min_edge[u]
        for v in range(num_nodes):
            if not visited[v] and distance_matrix[u, v] < min_edge[v]:
                min_edge[v] = distance_matrix[u, v]
    inverted_distance_matrix = 1 / (distance_matrix + np.eye(num_nodes))
    total_density = np.sum(inverted_distance_matrix, axis=1)
    for i in range(num_nodes):
        for j in range(num_nodes):
            if i != j:
                base_indicator = (total_density[i] * total_density[j]) / (1 + total_density[i] + total_density[j])
                edge_cost = distance_matrix[i, j] - (total_mst_cost / (num_nodes - 1))
                cycle_penalty = np.sum((inverted_distance_matrix[i, :] + inverted_distance_matrix[j, :] < inverted_distance_matrix[i, j]) * distance_matrix[i, j] * 0.2)
                indicators[i, j] = max(0, (base_indicator - cycle_penalty) * edge_cost)
    max_indicator = np.max(indicators)
    if max_indicator > 0:
        indicators /= max_indicator
    return indicators
