//! Per-thread count of top-level linear solves.
//!
//! Every public solve entry point records exactly one solve, however many
//! iterations it runs. Callers measure the delta around an operation.

use std::cell::Cell;

thread_local! {
    static LINEAR_SOLVES: Cell<u64> = const { Cell::new(0) };
}

pub fn linear_solves() -> u64 {
    LINEAR_SOLVES.with(Cell::get)
}

pub(crate) fn record_linear_solve() {
    LINEAR_SOLVES.with(|c| c.set(c.get() + 1));
}

/// Runs `f` and returns its output with the number of linear solves it made.
pub fn count_linear_solves<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = linear_solves();
    let out = f();
    (out, linear_solves() - before)
}
