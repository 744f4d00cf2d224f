use super::prompts::{py_float, HEURISTIC_EXPERTISE};
use super::{CallbackError, NativeOptimizer, OptimizerHost, OptimizerResult, SolutionView};
use crate::llm::{extract_code, extract_idea, extract_json_insights};

const DIRECTION_ATTEMPTS: usize = 3;
const FALLBACK_DIRECTION: &str = "Refine the given heuristic.";

/// Asks for a JSON insight list, retrying on malformed replies; falls back
/// to a single generic direction.
fn request_directions(host: &dyn OptimizerHost, prompt: &str, temperature: f64) -> Result<Vec<String>, CallbackError> {
    for _ in 0..DIRECTION_ATTEMPTS {
        let response = host.prompt(HEURISTIC_EXPERTISE, prompt, temperature)?;
        match extract_json_insights(&response) {
            Ok(d) if !d.is_empty() => return Ok(d),
            Ok(_) => log::debug!("empty insight list"),
            Err(e) => log::debug!("unusable insight reply: {e}"),
        }
    }
    Ok(vec![FALLBACK_DIRECTION.to_string()])
}

/// Extracts and evaluates every response; keeps the cheapest, `start` included.
fn evaluate_responses(
    host: &dyn OptimizerHost,
    subtask: &str,
    responses: &[String],
    start: Option<OptimizerResult>,
) -> Result<Option<OptimizerResult>, CallbackError> {
    let mut best = start;
    for response in responses {
        let Ok(code) = extract_code(response) else { continue };
        let idea = extract_idea(response).text;
        let cost = host.utility(&code, &idea, subtask)?;
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(OptimizerResult { idea, code, cost });
        }
    }
    Ok(best)
}

fn as_result(s: SolutionView) -> OptimizerResult {
    OptimizerResult { idea: s.idea, code: s.best_sol, cost: s.utility }
}

pub struct SeedOptimizer;

impl SeedOptimizer {
    pub fn direction_prompt(sel: &SolutionView) -> String {
        format!(
            "Given the following heuristic for subtask: {} with its idea: {} and utility score: {}, \
             Summarize the key idea from this heuristic, then provide several totally different ideas from the given one to design improved algorithms with lower utility score. \
             Provide a single string as the answer, less than 50 words. Your response should be formatted as a json structure: \
             ```json\n{{\"insights\":[\"content\",\"content\",\"content\", ... ,\"content\"]}}\n```.",
            sel.best_sol,
            sel.idea,
            py_float(sel.utility)
        )
    }

    pub fn improve_prompt(best_sol: &str, subtask_prompt: &str, direction: &str) -> String {
        format!(
            "Improve the following solution:\n```python\n{best_sol}\n```\n\
             You must return an improved solution. Formatted as follows:\n{subtask_prompt}\n\
             To better solve the problem, you are encouraged to develop new solutions based on the direction proposed: {direction}. \
             You will be evaluated based on a score function. The lower the score, the better the solution.\n\
             Your response must firstly provide a summary of the key idea inside a brace and marked as a comment, followed by the code implementation. \
             Be as creative as you can under the constraints."
        )
    }
}

impl NativeOptimizer for SeedOptimizer {
    fn optimize(&self, host: &dyn OptimizerHost, subtask_prompt: &str, subtask: &str) -> Result<OptimizerResult, CallbackError> {
        let sel = host.get_random_solution(subtask)?;
        let mut directions = request_directions(host, &Self::direction_prompt(&sel), 1.0)?;
        directions.truncate(host.candidate_limit());
        let messages: Vec<String> =
            directions.iter().map(|d| Self::improve_prompt(&sel.best_sol, subtask_prompt, d)).collect();
        let responses = host.prompt_batch(HEURISTIC_EXPERTISE, &messages, 1.0)?;
        match evaluate_responses(host, subtask, &responses, None)? {
            Some(b) => Ok(b),
            None => host.get_solution_by_index(subtask, 0).map(as_result),
        }
    }
}

pub struct Elitist;

impl Elitist {
    pub fn direction_prompt(subtask: &str, elite: &SolutionView) -> String {
        format!(
            "The best heuristic so far for subtask {subtask} is: {} with its idea: {} and utility score: {}. \
             Suggest several concrete refinements that keep its strengths and lower the utility score. \
             Your response should be formatted as a json structure: \
             ```json\n{{\"insights\":[\"content\",\"content\", ... ,\"content\"]}}\n```.",
            elite.best_sol,
            elite.idea,
            py_float(elite.utility)
        )
    }

    pub fn refine_prompt(best_sol: &str, subtask_prompt: &str, direction: &str) -> String {
        format!(
            "Refine the following solution:\n```python\n{best_sol}\n```\n\
             You must return a refined solution. Formatted as follows:\n{subtask_prompt}\n\
             Apply this refinement: {direction}. \
             The lower the score, the better the solution.\n\
             Your response must firstly provide a summary of the key idea inside a brace and marked as a comment, followed by the code implementation."
        )
    }
}

impl NativeOptimizer for Elitist {
    fn optimize(&self, host: &dyn OptimizerHost, subtask_prompt: &str, subtask: &str) -> Result<OptimizerResult, CallbackError> {
        let elite = host.get_solution_by_index(subtask, 0)?;
        let mut directions = request_directions(host, &Self::direction_prompt(subtask, &elite), 0.7)?;
        directions.truncate(host.candidate_limit());
        let messages: Vec<String> =
            directions.iter().map(|d| Self::refine_prompt(&elite.best_sol, subtask_prompt, d)).collect();
        let responses = host.prompt_batch(HEURISTIC_EXPERTISE, &messages, 0.7)?;
        let start = as_result(elite);
        Ok(evaluate_responses(host, subtask, &responses, Some(start))?.expect("start is kept"))
    }
}

pub struct Passthrough;

impl NativeOptimizer for Passthrough {
    fn optimize(&self, host: &dyn OptimizerHost, _subtask_prompt: &str, subtask: &str) -> Result<OptimizerResult, CallbackError> {
        host.get_solution_by_index(subtask, 0).map(as_result)
    }
}
