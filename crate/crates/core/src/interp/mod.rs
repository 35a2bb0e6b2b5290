//! Interpreter for closed DSL programs and behavioral comparison of tasks.

pub mod eval;
pub mod value;

use serde::{Deserialize, Serialize};

pub use eval::{eval, program_value, ErrorKind, EvalError, Evaluator, Outcome, ProgramError, DEFAULT_FUEL};
pub use value::{parse_inputs, parse_value, render_inputs, render_value, Side, Style, Value, ValueParseError};

use crate::datagen::TaskInstance;
use crate::lang::Ty;

/// One rendered input/output example.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IoPair {
    pub input: String,
    pub output: String,
}

/// `Right (<value>)` on success, `Left <kind>` on a runtime error.
pub fn render_outcome(outcome: &Outcome, ty: &Ty) -> String {
    match outcome {
        Ok(v) => format!("Right ({})", render_value(v, ty, Style::Output)),
        Err(e) => format!("Left {}", e.kind.name()),
    }
}

/// Canonical digest of a behavior: the rendered pairs sorted and joined.
pub fn behavior_fingerprint(io: &[IoPair]) -> String {
    let mut lines: Vec<String> = io
        .iter()
        .map(|p| format!("{}\t{}", p.input, p.output))
        .collect();
    lines.sort();
    lines.join("\n")
}

/// Same instantiated parameter types and identical io behavior.
pub fn behaviors_equal(a: &TaskInstance, b: &TaskInstance) -> bool {
    a.param_tys == b.param_tys && behavior_fingerprint(&a.ios) == behavior_fingerprint(&b.ios)
}
