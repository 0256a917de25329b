//! Chunked Monte Carlo execution.
//!
//! Work of `n` items is cut into chunks of [`CHUNK_SIZE`]. Chunk `c` draws
//! from `substream(seed, base + c)` and produces a partial result; partials
//! are merged strictly in chunk order. With the `parallel` feature the
//! chunks run on rayon, otherwise sequentially, and both give bit-identical
//! results.

use std::ops::Range;

use crate::rng::{substream, Stream};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Items per chunk.
pub const CHUNK_SIZE: usize = 4096;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "UNDERLAY_THREADS";

/// Partial results that can absorb a later partial result.
pub trait Merge: Send {
    fn merge(&mut self, other: Self);
}

impl Merge for f64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl Merge for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl<T: Send> Merge for Vec<T> {
    fn merge(&mut self, mut other: Self) {
        self.append(&mut other);
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

fn chunk_range(n: usize, c: usize) -> Range<usize> {
    let start = c * CHUNK_SIZE;
    start..(start + CHUNK_SIZE).min(n)
}

fn num_chunks(n: usize) -> usize {
    n.div_ceil(CHUNK_SIZE)
}

fn fold_in_order<A: Merge>(parts: Vec<A>, init: A) -> A {
    parts.into_iter().fold(init, |mut acc, p| {
        acc.merge(p);
        acc
    })
}

/// Runs `body` over `n` items in seeded chunks and merges the partials.
///
/// `body` receives the chunk's stream, the item range and a fresh
/// accumulator from `init`.
pub fn reduce_chunks<A, I, F>(n: usize, seed: u64, base: u64, init: I, body: F) -> A
where
    A: Merge,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut Stream, Range<usize>, &mut A) + Sync + Send,
{
    let run = |c: usize| {
        let mut rng = substream(seed, base + c as u64);
        let mut acc = init();
        body(&mut rng, chunk_range(n, c), &mut acc);
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<A> = (0..num_chunks(n)).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<A> = (0..num_chunks(n)).map(run).collect();
    fold_in_order(parts, init())
}

/// Generates `n` items, one seeded chunk at a time, preserving order.
pub fn generate<T, F>(n: usize, seed: u64, base: u64, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Stream) -> T + Sync + Send,
{
    reduce_chunks(n, seed, base, Vec::new, |rng, range, out: &mut Vec<T>| {
        out.reserve(range.len());
        out.extend(range.map(|_| draw(rng)));
    })
}

/// Order-preserving map over a slice with a deterministic chunked merge.
pub fn reduce_slice<T, A, I, F>(items: &[T], init: I, body: F) -> A
where
    T: Sync,
    A: Merge,
    I: Fn() -> A + Sync + Send,
    F: Fn(&T, &mut A) + Sync + Send,
{
    let run = |chunk: &[T]| {
        let mut acc = init();
        chunk.iter().for_each(|x| body(x, &mut acc));
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<A> = items.par_chunks(CHUNK_SIZE).map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<A> = items.chunks(CHUNK_SIZE).map(run).collect();
    fold_in_order(parts, init())
}

/// Order-preserving map over `0..n`, used for independent sweep points.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Number of workers the current context would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with a dedicated pool of `threads` workers. Without the
/// `parallel` feature this simply calls `f`.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Reads [`THREADS_ENV`] and, if set to a positive integer, sizes the
/// global pool accordingly. Returns the requested count when applied.
pub fn configure_from_env() -> Option<usize> {
    let requested: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
    if requested == 0 {
        return None;
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global()
            .ok()?;
    }
    Some(requested)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sum_uniforms(n: usize) -> f64 {
        reduce_chunks(
            n,
            9,
            0,
            || 0.0,
            |rng, range, acc: &mut f64| {
                for _ in range {
                    *acc += rng.random::<f64>();
                }
            },
        )
    }

    #[test]
    fn result_is_independent_of_worker_count() {
        let n = 10 * CHUNK_SIZE + 17;
        let one = with_threads(1, || sum_uniforms(n));
        let four = with_threads(4, || sum_uniforms(n));
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn generate_preserves_length_and_order() {
        let n = 3 * CHUNK_SIZE + 5;
        let a = with_threads(1, || generate(n, 1, 0, |r| r.random::<u32>()));
        let b = with_threads(3, || generate(n, 1, 0, |r| r.random::<u32>()));
        assert_eq!(a.len(), n);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_work_returns_init() {
        let s: f64 = reduce_chunks(0, 1, 0, || 0.0, |_, _, _| unreachable!());
        assert_eq!(s, 0.0);
    }

    #[test]
    fn map_indexed_keeps_order() {
        assert_eq!(map_indexed(5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
