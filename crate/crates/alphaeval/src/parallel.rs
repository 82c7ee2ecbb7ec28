//! Minimal worker pool for embarrassingly parallel maps.
//!
//! Items are claimed from a shared atomic counter, so output order is
//! restored by index and results are identical to a sequential run for
//! any worker count (the closures must be pure).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Apply `f` to every item, using up to `workers` OS threads.
///
/// Output order matches input order regardless of scheduling.
pub fn map_indexed<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let workers = workers.max(1).min(items.len());
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                // The receiver outlives the scope; send cannot fail here.
                let _ = tx.send((i, f(i, &items[i])));
            });
        }
        drop(tx);
        let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
        for (i, r) in rx {
            slots[i] = Some(r);
        }
        slots.into_iter().map(|s| s.expect("worker died")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_worker_count() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_indexed(&items, 1, |_, x| x * x);
        for workers in [2, 4, 7] {
            assert_eq!(seq, map_indexed(&items, workers, |_, x| x * x));
        }
    }

    #[test]
    fn empty_input_yields_empty_output() {
        let out: Vec<i32> = map_indexed(&[] as &[i32], 4, |_, x| *x);
        assert!(out.is_empty());
    }
}
