use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::lang::Builtin;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

/// Dataset generation knobs; recorded verbatim in every dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub operators: Vec<String>,
    pub max_nodes: usize,
    pub max_type_instances: usize,
    pub max_inputs_per_instance: usize,
    pub int_range: (i64, i64),
    pub char_range: (char, char),
    pub container_len_range: (usize, usize),
    pub type_nesting_limit: usize,
    pub max_monotypes: usize,
    pub ratios: SplitRatios,
    pub train_sample_cap: usize,
    pub io_pairs_fixed: usize,
    /// io pairs whose input or output text exceeds this many chars are dropped.
    pub max_render_len: usize,
    pub fuel: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            operators: Builtin::EXPERIMENT.iter().map(|b| b.name().to_string()).collect(),
            max_nodes: 3,
            max_type_instances: 5,
            max_inputs_per_instance: 10,
            int_range: (-20, 20),
            char_range: ('0', '9'),
            container_len_range: (0, 5),
            type_nesting_limit: 1,
            max_monotypes: 16,
            ratios: SplitRatios {
                train: 0.35,
                val: 0.35,
                test: 0.30,
            },
            train_sample_cap: 1000,
            io_pairs_fixed: 8,
            max_render_len: 64,
            fuel: crate::interp::DEFAULT_FUEL,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::InvalidConfig(m.to_string()));
        let r = &self.ratios;
        if [r.train, r.val, r.test].iter().any(|x| !(0.0..=1.0).contains(x)) {
            return bad("split ratios must lie in [0, 1]");
        }
        if (r.train + r.val + r.test - 1.0).abs() > 1e-9 {
            return bad("split ratios must sum to 1");
        }
        if self.int_range.0 > self.int_range.1 {
            return bad("int_range is empty");
        }
        if self.char_range.0 > self.char_range.1 {
            return bad("char_range is empty");
        }
        if self.container_len_range.0 > self.container_len_range.1 {
            return bad("container_len_range is empty");
        }
        if self.operators.is_empty() {
            return bad("operator list is empty");
        }
        if self.max_inputs_per_instance == 0 || self.max_type_instances == 0 {
            return bad("instance and input counts must be positive");
        }
        if self.io_pairs_fixed == 0 {
            return bad("io_pairs_fixed must be positive");
        }
        Ok(())
    }
}
