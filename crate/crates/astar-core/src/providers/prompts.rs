//! Fixed prompt text for HTTP-backed providers, one prompt per action.

use crate::action::Action;
use crate::trajectory::ANSWER_MARKER;

pub const SYSTEM_PROMPT: &str = "You are a careful step-by-step reasoner. \
Perform exactly the reasoning move you are asked for, nothing more. \
When a move concludes the problem, end your reply with a line that starts \
with `FINAL ANSWER:` followed by the answer alone.";

/// Instruction for one reasoning action.
pub fn action_prompt(action: Action) -> &'static str {
    match action {
        Action::VisualParsing => {
            "Visual Parsing: describe exactly what the attached image shows that is \
relevant to the question. List concrete objects, quantities, labels, and spatial \
relations. Do not solve the problem yet."
        }
        Action::SystemAnalysis => {
            "System Analysis: restate the known conditions and the quantity the \
question asks for. Identify which given facts matter and how they relate. Do not \
solve the problem yet."
        }
        Action::OneStepThought => {
            "One-Step Thought: advance the solution by exactly one step of reasoning \
or calculation, building on the work so far. Stop after that single step."
        }
        Action::ChainOfThought => {
            "Chain-of-Thought: reason through the remaining work to completion, then \
commit to the answer on a final line starting with `FINAL ANSWER:`."
        }
        Action::DivideAndConquer => {
            "Divide and Conquer: split the problem into smaller subproblems, solve \
each in turn, and combine the partial results. If this completes the problem, end \
with a `FINAL ANSWER:` line."
        }
        Action::SelfReflection => {
            "Self-Reflection: re-examine the reasoning so far for arithmetic slips, \
misread conditions, or unjustified leaps. Correct anything wrong; otherwise confirm \
the work is sound."
        }
    }
}

/// Prompt for an independent single-pass answer sample.
pub fn direct_answer_prompt() -> String {
    format!(
        "Answer the question directly. Think briefly if needed, then give your \
answer on a final line starting with `{ANSWER_MARKER}`."
    )
}

/// Prompt asking the model to count a query's known conditions.
pub fn complexity_prompt(question: &str) -> String {
    format!(
        "Count how many distinct known conditions (given facts, stated quantities, \
constraints) the following question provides. Reply with that count as a single \
number and nothing else.\n\nQuestion: {question}"
    )
}

/// Prompt asking the model to grade a finished solution.
pub fn outcome_prompt(question: &str, transcript: &str, answer: &str) -> String {
    format!(
        "Grade the following solution for correctness and soundness of reasoning. \
Reply with a single number between 0 and 1 and nothing else, where 1 means fully \
correct.\n\nQuestion: {question}\n\nSolution steps:\n{transcript}\n\nProposed \
answer: {answer}"
    )
}
