import numpy as np
def score(item, bins):
    scores = np.zeros_like(bins, dtype=float)
    feasible_bins = bins[bins > item]
    if feasible_bins.size == 0:
        return scores
    max_capacity = np.max(feasible_bins)
    scores[bins == max_capacity] = -np.inf
    remaining_capacity = (feasible_bins - item) / feasible_bins
    item_ratio = item / feasible_bins
    proximity_penalty = np.where(feasible_bins >= item * 0.90, -5, 0) + np.where(feasible_bins < item * 0.80, -7, 0)
    underutilization_penalty = -3 * np.maximum(0, item - 0.5 * feasible_bins)
    scores[bins > item] = (remaining_capacity + proximity_penalty + underutilization_penalty - (1 - item_ratio) ** 3)
    return scores
