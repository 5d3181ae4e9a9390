//! Shared run outcomes and resource-bound arithmetic.

use crate::alphabet::Symbol;

/// How a bounded run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    Reject,
    SpaceExceeded,
    StepBoundExceeded,
    Diverged,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::SpaceExceeded => "space-exceeded",
            Verdict::StepBoundExceeded => "step-bound-exceeded",
            Verdict::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Complete record of a bounded machine run. The trace always starts with the
/// initial configuration; `output` is empty for pure acceptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult<C> {
    pub verdict: Verdict,
    pub trace: Vec<C>,
    pub output: Vec<Symbol>,
    pub steps: u64,
    pub space: usize,
}

/// `ceil(log2(x))` for `x >= 1`.
pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Step budget `c^(ceil(log2(max(n, 2))) + k)` for input length `n` and space
/// bound `k`, saturating instead of overflowing.
pub fn step_bound(c: u32, n: usize, k: usize) -> u64 {
    let exp = ceil_log2(n.max(2)) + k as u32;
    (c as u64).saturating_pow(exp)
}
