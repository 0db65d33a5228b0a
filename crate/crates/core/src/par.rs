//! Execution schedule for data-parallel loops.
//!
//! Every parallel loop in the crate maps an index range to independent
//! results and collects them in index order, so output never depends on the
//! schedule or the number of worker threads.

/// How index-parallel work is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    /// Uses the rayon global pool; identical to `Sequential` when the
    /// `parallel` feature is disabled.
    Parallel,
}

impl Default for Schedule {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Schedule::Parallel
        } else {
            Schedule::Sequential
        }
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indexed<T, F>(schedule: Schedule, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match schedule {
        #[cfg(feature = "parallel")]
        Schedule::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(schedule: Schedule, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(schedule, n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(
            map_indexed(Schedule::Sequential, 1000, f),
            map_indexed(Schedule::Parallel, 1000, f)
        );
    }

    #[test]
    fn first_error_in_order() {
        let r: Result<Vec<usize>, usize> = try_map_indexed(Schedule::Parallel, 50, |i| {
            if i % 7 == 3 {
                Err(i)
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(3));
    }
}
