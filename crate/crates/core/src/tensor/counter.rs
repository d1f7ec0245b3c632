//! Multiply-accumulate counter.
//!
//! Every contraction (matmul and the lowered convolutions, forward and
//! backward) adds its exact MAC count here. Element-wise arithmetic and
//! nonlinearities are not counted. The counter is per thread so concurrent
//! tests cannot see each other's work.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record(macs: u64) {
    MACS.with(|c| c.set(c.get() + macs));
}

/// MACs recorded on this thread since the last [`reset`].
pub fn mul_adds() -> u64 {
    MACS.with(Cell::get)
}

pub fn reset() {
    MACS.with(|c| c.set(0));
}

/// Runs `f` and returns its result together with the MACs it performed.
/// The surrounding count is preserved.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = mul_adds();
    reset();
    let out = f();
    let used = mul_adds();
    MACS.with(|c| c.set(before + used));
    (out, used)
}
