import numpy as np
def update_edge_distance(edge_distance, local_opt_tour, edge_n_used):
    updated_edge_distance = np.copy(edge_distance)
    num_nodes = len(local_opt_tour)
    window_size = 5
    for i in range(num_nodes):
        current_city = local_opt_tour[i]
        for j in range(1, window_size + 1):
            next_index = (i + j) % num_nodes
            next_city = local_opt_tour[next_index]
            used_edge_count = edge_n_used[current_city, next_city]
            if used_edge_count >= 2:
                scaling_factor = np.log(used_edge_count + 1) * 0.5
                updated_edge_distance[current_city, next_city] *= scaling_factor
                updated_edge_distance[next_city, current_city] *= scaling_factor
            else:
                decay_factor = np.exp(-0.1 * used_edge_count)
                updated_edge_distance[current_city, next_city] *= decay_factor
                updated_edge_distance[next_city, current_city] *= decay_factor
            edge_quality = edge_distance[current_city, next_city] / (used_edge_count + 1)
            updated_edge_distance[current_city, next_city] += edge_quality
            updated_edge_distance[next_city, current_city] += edge_quality
    return updated_edge_distance
