//! A scoped thread pool implementing the core [`Executor`] contract.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hopforge_core::sampler::Executor;

/// Runs jobs on `workers` scoped threads. Results come back in index order,
/// so output never depends on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl Executor for ThreadPool {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if self.workers == 1 || n <= 1 {
            return (0..n).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..self.workers.min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = job(i);
                    slots.lock().expect("worker panicked while holding results")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("worker panicked while holding results")
            .into_iter()
            .map(|s| s.expect("every index is claimed exactly once"))
            .collect()
    }
}
