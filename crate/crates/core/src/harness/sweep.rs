use rayon::prelude::*;

use crate::error::Result;

use super::trace::RunTrace;
use super::{run_tracking, PolicyKind, Scenario};

/// One cell of a run matrix.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Key under which the result is reported.
    pub id: String,
    pub scenario: Scenario,
    pub policy: PolicyKind,
    pub seed: u64,
}

pub struct SweepResult {
    pub id: String,
    pub trace: Result<RunTrace>,
}

/// Runs every spec, in parallel across runs, returning results in the order
/// of `specs` regardless of completion order.
pub fn run_sweep(specs: &[RunSpec]) -> Vec<SweepResult> {
    specs
        .par_iter()
        .map(|spec| {
            let trace = spec.scenario.truth(spec.seed).and_then(|truth| {
                let scatterers = spec.scenario.scatterers(spec.seed);
                run_tracking(&truth, &spec.scenario, &scatterers, spec.policy, spec.seed)
            });
            if let Err(e) = &trace {
                log::warn!("run {} failed: {e}", spec.id);
            }
            SweepResult { id: spec.id.clone(), trace }
        })
        .collect()
}
