//! Path-parallel helpers. With the `parallel` feature these fan out over
//! rayon's pool; without it they run the same closures sequentially.
//! Results are always returned in index order, and reductions are summed
//! over fixed-size chunks in a fixed order, so output bytes never depend on
//! the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk length for deterministic reductions.
pub const CHUNK: usize = 1024;

pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

pub fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sum of `f(i)` over `0..len`, vector valued, accumulated chunk by chunk.
pub fn sum_vec<F>(len: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partials = map_indexed(chunks, |c| {
        let mut acc = vec![0.0; width];
        let end = ((c + 1) * CHUNK).min(len);
        for i in c * CHUNK..end {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; width];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

/// Scalar sum of `f(i)` over `0..len`.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    sum_vec(len, 1, |i, acc| acc[0] += f(i))[0]
}

/// Mean of `f(i)` over `0..len`; zero for an empty range.
pub fn mean<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if len == 0 {
        return 0.0;
    }
    sum(len, f) / len as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order() {
        let v = map_indexed(5000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn chunked_sum_matches_closed_form() {
        let s = sum(10_001, |i| i as f64);
        assert_eq!(s, 10_000.0 * 10_001.0 / 2.0);
        assert_eq!(mean(0, |_| 1.0), 0.0);
    }
}
