//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers run on the ambient rayon pool;
//! without it they are plain iterator loops. Every helper returns results in input
//! order, so callers that reduce sequentially stay bit-identical across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the parallel path is not worth the scheduling overhead.
pub const MIN_PARALLEL_LEN: usize = 256;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() >= MIN_PARALLEL_LEN {
            return items.par_iter().with_min_len(64).map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_PARALLEL_LEN {
            return (0..n).into_par_iter().with_min_len(64).map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Fills `out[i] = f(i)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= MIN_PARALLEL_LEN {
            out.par_iter_mut()
                .with_min_len(128)
                .enumerate()
                .for_each(|(i, o)| *o = f(i));
            return;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Runs independent jobs, possibly concurrently, returning results in input order.
pub fn run_all<T, R, F>(jobs: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        jobs.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<usize> = (0..1000).collect();
        let ys = map(&xs, |x| x * 2);
        assert!(ys.iter().enumerate().all(|(i, &y)| y == 2 * i));
        let zs = map_range(1000, |i| i + 1);
        assert_eq!(zs[999], 1000);
    }

    #[test]
    fn fill_matches_sequential() {
        let mut out = vec![0.0; 700];
        fill(&mut out, |i| (i as f64).sqrt());
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, (i as f64).sqrt());
        }
    }

    #[test]
    fn run_all_keeps_order() {
        let r = run_all(vec![3, 1, 2], |x| x * 10);
        assert_eq!(r, vec![30, 10, 20]);
    }
}
