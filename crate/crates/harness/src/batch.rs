//! Fixed-size worker pool over scoped threads. Results come back in input
//! order regardless of completion order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `f` over `items` on `workers` threads.
pub fn run_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    run_until(items, workers, f, |_| false).into_iter().map(|r| r.expect("no early stop")).collect()
}

/// Like [`run_ordered`], but once some result satisfies `stop` no new item
/// is started. Items never started come back as `None`; everything before
/// the first stopping item (in input order) is always present.
pub fn run_until<T, R, F, S>(items: &[T], workers: usize, f: F, stop: S) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
    S: Fn(&R) -> bool + Sync,
{
    let next = AtomicUsize::new(0);
    // Lowest index whose result asked to stop; items above it are skipped.
    let stop_at = AtomicUsize::new(usize::MAX);
    let stopped = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() || (stopped.load(Ordering::SeqCst) && i > stop_at.load(Ordering::SeqCst)) {
                    break;
                }
                let r = f(&items[i]);
                if stop(&r) {
                    stop_at.fetch_min(i, Ordering::SeqCst);
                    stopped.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap()).collect()
}
