//! Central finite-difference check of reverse-mode gradients.

use crate::error::Result;
use crate::numerics::params::ParamSet;
use crate::numerics::tape::{Tape, Var};

/// Denominator floor of the relative error, so that entries whose true
/// gradient is ~0 are judged on absolute error instead of amplified noise.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// `max |g_rev − g_fd| / max(|g_rev|, |g_fd|, REL_ERROR_FLOOR)` over checked entries.
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries whose ±eps perturbation moves some ReLU input across 0.
    pub skipped: Vec<(usize, usize)>,
}

fn evaluate<F>(objective: &F, params: &ParamSet) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::tracking_relu();
    let vars = params.bind(&mut tape);
    let out = objective(&mut tape, &vars)?;
    tape.check()?;
    Ok((tape.scalar(out), tape.relu_pattern().to_vec()))
}

pub fn fd_check<F>(objective: F, params: &ParamSet, eps: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::tracking_relu();
    let vars = params.bind(&mut tape);
    let out = objective(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let base_pattern = tape.relu_pattern().to_vec();
    let analytic: Vec<_> = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();

    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: Vec::new(),
    };
    let mut probe = params.clone();
    for p in 0..params.len() {
        for e in 0..params.get(p).data().len() {
            let orig = params.get(p).data()[e];
            probe.get_mut(p).data_mut()[e] = orig + eps;
            let (f_plus, pat_plus) = evaluate(&objective, &probe)?;
            probe.get_mut(p).data_mut()[e] = orig - eps;
            let (f_minus, pat_minus) = evaluate(&objective, &probe)?;
            probe.get_mut(p).data_mut()[e] = orig;

            if pat_plus != base_pattern || pat_minus != base_pattern {
                report.skipped.push((p, e));
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let rev = analytic[p].data()[e];
            let denom = rev.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            let rel = (rev - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p, e));
            }
        }
    }
    Ok(report)
}
