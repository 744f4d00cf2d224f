# {Pick a random heuristic, ask for several alternative directions, implement one candidate per direction and keep the cheapest.}
import json
def optimize_algorithm(population, utility, language_model, subtask_prompt, subtask):
    expertise = "You are an expert in the domain of designing meta optimization strategy and combinatorial optimization problems. Your task is to design heuristics that can effectively solve optimization problems."
    selected_solution = population.get_random_solution(subtask)
    direction_prompt = (
        f"Given the following heuristic for subtask: {selected_solution['best_sol']} with its idea: {selected_solution['idea']} and utility score: {selected_solution['utility']}, "
        "Summarize the key idea from this heuristic, then provide several totally different ideas from the given one to design improved algorithms with lower utility score. "
        "Provide a single string as the answer, less than 50 words. Your response should be formatted as a json structure: "
        "```json\n{\"insights\":[\"content\",\"content\",\"content\", ... ,\"content\"]}\n```."
    )
    directions = None
    for _ in range(3):
        response = language_model.prompt(expertise, direction_prompt, temperature=1)
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
            f"Improve the following solution:\n"
            f"```python\n{selected_solution['best_sol']}\n```\n"
            f"You must return an improved solution. Formatted as follows:\n{subtask_prompt}\n"
            f"To better solve the problem, you are encouraged to develop new solutions based on the direction proposed: {direction}. "
            "You will be evaluated based on a score function. The lower the score, the better the solution.\n"
            "Your response must firstly provide a summary of the key idea inside a brace and marked as a comment, followed by the code implementation. "
            "Be as creative as you can under the constraints."
        )
        message_batch.append(message)
    responses = language_model.prompt_batch(expertise, message_batch, temperature=1)
    best = None
    for response in responses:
        try:
            solution = extract_code(response)
        except Exception:
            continue
        idea = extract_idea(response)
        cost = utility(solution, idea, subtask)
        if best is None or cost < best[2]:
            best = (idea, solution, cost)
    if best is None:
        top = population.get_solution_by_index(subtask, 0)
        return top['idea'], top['best_sol'], top['utility']
    return best
