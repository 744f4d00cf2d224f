# {Refine the current best heuristic along several suggested directions at a moderate temperature and keep the cheapest result.}
import json
def optimize_algorithm(population, utility, language_model, subtask_prompt, subtask):
    expertise = "You are an expert in the domain of designing meta optimization strategy and combinatorial optimization problems. Your task is to design heuristics that can effectively solve optimization problems."
    elite = population.get_solution_by_index(subtask, 0)
    direction_prompt = (
        f"The best heuristic so far for subtask {subtask} is: {elite['best_sol']} with its idea: {elite['idea']} and utility score: {elite['utility']}. "
        "Suggest several concrete refinements that keep its strengths and lower the utility score. "
        "Your response should be formatted as a json structure: "
        "```json\n{\"insights\":[\"content\",\"content\", ... ,\"content\"]}\n```."
    )
    directions = None
    for _ in range(3):
        response = language_model.prompt(expertise, direction_prompt, temperature=0.7)
        try:
            directions = json.loads(extract_code(response))["insights"]
        except Exception:
            directions = None
        if directions:
            break
    if not directions:
        directions = ["Refine the given heuristic."]
    directions = directions[:getattr(utility, "candidate_limit", len(directions))]
    message_batch = []
    for direction in directions:
        message = (
            f"Refine the following solution:\n"
            f"```python\n{elite['best_sol']}\n```\n"
            f"You must return a refined solution. Formatted as follows:\n{subtask_prompt}\n"
            f"Apply this refinement: {direction}. "
            "The lower the score, the better the solution.\n"
            "Your response must firstly provide a summary of the key idea inside a brace and marked as a comment, followed by the code implementation."
        )
        message_batch.append(message)
    responses = language_model.prompt_batch(expertise, message_batch, temperature=0.7)
    best = (elite['idea'], elite['best_sol'], elite['utility'])
    for response in responses:
        try:
            solution = extract_code(response)
        except Exception:
            continue
        idea = extract_idea(response)
        cost = utility(solution, idea, subtask)
        if cost < best[2]:
            best = (idea, solution, cost)
    return best
