use crate::error::Result;

/// How independent replays are scheduled. Results are always assembled in
/// task order, so both strategies give identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on; otherwise the
    /// same as `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub(crate) fn map<T, F>(self, tasks: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Self::Parallel => {
                use rayon::prelude::*;
                (0..tasks).into_par_iter().map(f).collect()
            }
            _ => (0..tasks).map(f).collect(),
        }
    }
}
