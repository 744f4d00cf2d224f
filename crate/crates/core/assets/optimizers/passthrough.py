# {Return the current best member unchanged.}
def optimize_algorithm(population, utility, language_model, subtask_prompt, subtask):
    top = population.get_solution_by_index(subtask, 0)
    return top['idea'], top['best_sol'], top['utility']
