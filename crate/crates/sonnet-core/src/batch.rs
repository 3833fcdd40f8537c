//! Indexed map over a slice with two lanes: a rayon thread pool behind the
//! `parallel` feature, and a plain loop. Output order always follows input
//! order, so both lanes produce identical results for pure `f` and callers
//! can hand each item its own pre-derived rng stream.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Always sequential. The benchmark baseline, and the only lane in builds
/// without the `parallel` feature.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Thread-pooled when the `parallel` feature is on, otherwise sequential.
#[cfg(feature = "parallel")]
pub fn map_items<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    map_sequential(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lanes_agree_and_keep_order() {
        let items: Vec<u64> = (0..200).collect();
        let work = |&x: &u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(x);
            (x, rng.next_u64())
        };
        let a = map_items(&items, work);
        let b = map_sequential(&items, work);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].0 + 1 == w[1].0));
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let items: Vec<u64> = Vec::new();
        assert!(map_items(&items, |&x| x).is_empty());
    }
}
