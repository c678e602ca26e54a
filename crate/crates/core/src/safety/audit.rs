use super::FilterConfig;
use serde::Serialize;

/// Constraint violations found in an executed maintenance trace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ScheduleAudit {
    pub steps: usize,
    /// Steps with more than `M` units in maintenance.
    pub cap_violations: usize,
    /// Maximal runs shorter than `D_i` that ended before the trace did.
    pub block_violations: usize,
    /// Steps `e >= W` where some unit has fewer than `H_i` maintenance
    /// steps in the window `[e - W + 1, e]`.
    pub coverage_violations: usize,
    /// Largest number of units in maintenance at one step.
    pub max_concurrent: usize,
}

impl ScheduleAudit {
    pub fn is_clean(&self) -> bool {
        self.cap_violations == 0 && self.block_violations == 0 && self.coverage_violations == 0
    }
}

/// Audits a trace of applied decisions starting at step 1 (`trace[0]`).
pub fn audit_schedule(trace: &[Vec<bool>], cfg: &FilterConfig) -> ScheduleAudit {
    let n = cfg.n_units();
    let w = cfg.window;
    let mut audit = ScheduleAudit {
        steps: trace.len(),
        ..Default::default()
    };
    for row in trace {
        let on = row.iter().filter(|&&b| b).count();
        audit.max_concurrent = audit.max_concurrent.max(on);
        if on > cfg.max_concurrent {
            audit.cap_violations += 1;
        }
    }
    for i in 0..n {
        let mut run = 0;
        for row in trace {
            if row[i] {
                run += 1;
            } else {
                if run > 0 && run < cfg.blocks[i] {
                    audit.block_violations += 1;
                }
                run = 0;
            }
        }
    }
    let mut window_count = vec![0usize; n];
    for (k, row) in trace.iter().enumerate() {
        for i in 0..n {
            window_count[i] += row[i] as usize;
            if k >= w {
                window_count[i] -= trace[k - w][i] as usize;
            }
        }
        if k + 1 >= w && (0..n).any(|i| window_count[i] < cfg.required[i]) {
            audit.coverage_violations += 1;
        }
    }
    audit
}
