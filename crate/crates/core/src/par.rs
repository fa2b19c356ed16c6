//! Data-parallel helpers.
//!
//! With the `parallel` feature the per-cell loops and matrix-vector products
//! run on the rayon pool. Results are collected in index order and reduced
//! serially, so output is bitwise identical to the sequential path.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

thread_local! {
    static MODE: Cell<Execution> = const { Cell::new(Execution::Parallel) };
}

/// Below this many items the sequential path is always taken.
const MIN_PARALLEL_LEN: usize = 2048;

/// Runs `f` with the given execution mode on the current thread.
pub fn with_execution<R>(mode: Execution, f: impl FnOnce() -> R) -> R {
    let prev = MODE.with(|m| m.replace(mode));
    let out = f();
    MODE.with(|m| m.set(prev));
    out
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") {
        MODE.with(|m| m.get())
    } else {
        Execution::Sequential
    }
}

#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
fn go_parallel(len: usize) -> bool {
    len >= MIN_PARALLEL_LEN && execution() == Execution::Parallel
}

/// `(0..len).map(f).collect()`, possibly in parallel, always in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(len) {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Fills `out[i] = f(i)`, possibly in parallel.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(out.len()) {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}
