//! Order-preserving map helpers.
//!
//! With the `parallel` feature the work is spread over the current rayon pool;
//! without it the same calls run sequentially. Output order always matches
//! input order, so results never depend on the worker count.

use crate::Result;

/// Execution strategy for batch evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Uses rayon when compiled with the `parallel` feature, otherwise sequential.
    #[default]
    Rayon,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

pub fn map<T, U, F>(par: Parallelism, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = par;
    items.iter().map(f).collect()
}

pub fn try_map<T, U, F>(par: Parallelism, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = par;
    items.iter().map(f).collect()
}

pub fn try_map_range<U, F>(par: Parallelism, n: usize, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Parallelism::Rayon, &xs, |x| x * x);
        let b = map(Parallelism::Sequential, &xs, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_in_order_wins_sequentially() {
        let r = try_map_range(Parallelism::Sequential, 10, |i| {
            if i >= 3 {
                Err(crate::Error::Model(format!("bad {i}")))
            } else {
                Ok(i)
            }
        });
        assert!(r.unwrap_err().to_string().contains("bad 3"));
    }
}
