//! Thread-local floating-point-operation counter.
//!
//! Only matrix products are counted (2·m·k·n per call); they dominate every
//! code path we care about. The counter backs the linear-scaling checks.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn flops_add(n: u64) {
    FLOPS.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Reset the counter for the current thread.
pub fn flops_reset() {
    FLOPS.with(|c| c.set(0));
}

/// Total matmul FLOPs recorded on the current thread since the last reset.
pub fn flops_total() -> u64 {
    FLOPS.with(|c| c.get())
}
