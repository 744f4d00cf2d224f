//! Prompt templates with `${name}` placeholders.

use crate::harnesses::RuleKind;
use crate::scoring::TaskKind;

pub const OPTIMIZER_DESIGN: &str = include_str!("../../assets/prompts/optimizer_design.txt");
pub const INIT_DIRECTIONS: &str = include_str!("../../assets/prompts/init_directions.txt");
pub const INFERENCE_INSIGHTS: &str = include_str!("../../assets/prompts/inference_insights.txt");
pub const CODE_BY_IDEA: &str = include_str!("../../assets/prompts/code_by_idea.txt");

pub const HEURISTIC_EXPERTISE: &str = "You are an expert in the domain of designing meta optimization strategy and combinatorial optimization problems. Your task is to design heuristics that can effectively solve optimization problems.";
pub const INIT_EXPERTISE: &str = "You are an expert in the domain of optimization heuristics and combinatorial optimization problems.";
pub const INFERENCE_EXPERTISE: &str = "You are an expert in optimization heuristics, tasked with summarizing key insights to design improved algorithms.";

/// Subtask name used when optimizers improve optimizers.
pub const OPTIMIZER_SUBTASK: &str = "Optimizer";

/// Replaces every `${key}`; unknown placeholders are left in place.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (k, v) in vars {
        out = out.replace(&format!("${{{k}}}"), v);
    }
    out
}

pub fn task_template(kind: RuleKind) -> &'static str {
    match kind {
        RuleKind::NextNode => include_str!("../../assets/prompts/task_next_node.txt"),
        RuleKind::EdgePenaltyUpdate => include_str!("../../assets/prompts/task_edge_penalty.txt"),
        RuleKind::EdgeIndicator => include_str!("../../assets/prompts/task_edge_indicator.txt"),
        RuleKind::BinScore => include_str!("../../assets/prompts/task_bin_score.txt"),
    }
}

pub fn problem_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::ConstructiveTsp => "TSP_constructive",
        TaskKind::GlsTsp => "TSP_GLS",
        TaskKind::KglsTsp => "TSP_KGLS",
        TaskKind::OnlineBpp => "BPP_online",
    }
}

/// Function skeleton the generated code must follow.
pub fn formula(kind: RuleKind) -> &'static str {
    match kind {
        RuleKind::NextNode => {
            "\nimport numpy as np\ndef select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    return next_node\n"
        }
        RuleKind::EdgePenaltyUpdate => {
            "\nimport numpy as np\ndef update_edge_distance(edge_distance, local_opt_tour, edge_n_used):\n    return updated_edge_distance\n"
        }
        RuleKind::EdgeIndicator => "\nimport numpy as np\ndef adaptive_indicators(distance_matrix):\n    return indicators\n",
        RuleKind::BinScore => "\nimport numpy as np\ndef score(item, bins):\n    return scores\n",
    }
}

/// The format prompt handed to optimizers for a heuristic task.
pub fn subtask_prompt(kind: TaskKind, size: usize) -> String {
    render(task_template(kind.rule_kind()), &[("problem", problem_name(kind)), ("size", &size.to_string())])
}

pub fn init_directions(kind: TaskKind, size: usize) -> String {
    let desc = subtask_prompt(kind, size);
    render(INIT_DIRECTIONS, &[("problem", problem_name(kind)), ("size", &size.to_string()), ("task_description", &desc)])
}

pub fn code_by_idea(kind: TaskKind, size: usize, direction: Option<&str>) -> String {
    let clause = direction
        .map(|d| format!("You are encouraged to develop the algorithm that follows the direction: {d}."))
        .unwrap_or_default();
    let out = render(
        CODE_BY_IDEA,
        &[
            ("problem", problem_name(kind)),
            ("size", &size.to_string()),
            ("formula", formula(kind.rule_kind())),
            ("direction_clause", &clause),
        ],
    );
    format!(
        "{}\nFirst, describe the key idea in one sentence inside a brace and marked as a comment, then give the code.",
        out.trim_end()
    )
}

pub fn inference_insights(kind: TaskKind, size: usize, solutions: &str) -> String {
    render(INFERENCE_INSIGHTS, &[("problem", problem_name(kind)), ("size", &size.to_string()), ("solution", solutions)])
}

/// `str(float)` as Python prints it, so prompts built here and in a worker agree.
pub fn py_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..16).contains(&exp) {
        let s = format!("{x}");
        if s.contains('.') { s } else { format!("{s}.0") }
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_float_repr() {
        for (x, s) in [
            (0.1, "0.1"),
            (10.0, "10.0"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1.5e16, "1.5e+16"),
            (1e16, "1e+16"),
            (123456789012345.0, "123456789012345.0"),
            (-0.25, "-0.25"),
            (0.0, "0.0"),
            (0.23456789, "0.23456789"),
            (2.5e-7, "2.5e-07"),
        ] {
            assert_eq!(py_float(x), s, "{x}");
        }
    }

    #[test]
    fn templates_render() {
        let p = subtask_prompt(TaskKind::OnlineBpp, 5000);
        assert!(p.contains("\"score\"") && p.contains("BPP_online with problem size 5000."));
        assert!(!p.contains("${"));
        for k in [TaskKind::ConstructiveTsp, TaskKind::GlsTsp, TaskKind::KglsTsp, TaskKind::OnlineBpp] {
            let rk = k.rule_kind();
            assert!(subtask_prompt(k, 10).contains(rk.entry_symbol()));
            assert!(formula(rk).contains(rk.entry_symbol()));
            assert!(!init_directions(k, 10).contains("${"));
            assert!(!code_by_idea(k, 10, Some("x")).contains("${"));
            assert!(!inference_insights(k, 10, "s").contains("${"));
        }
        assert!(code_by_idea(TaskKind::GlsTsp, 10, Some("use usage counts")).contains("direction: use usage counts."));
        assert!(!code_by_idea(TaskKind::GlsTsp, 10, None).contains("direction:"));
    }
}
