//! Multi-threaded scanning. Results never depend on the worker count: work items are
//! fixed up front and merged in their original order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mdi_core::search::{prepare, PreparedDetector};
use mdi_core::{DataTensor, Detection, DetectorConfig};

/// Applies `f` to every item on up to `workers` threads; output is in item order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every item processed")).collect()
}

/// Scores the chunks of a prepared detector on `workers` threads.
pub fn run_prepared(det: &PreparedDetector, workers: usize) -> mdi_core::Result<Vec<Detection>> {
    let chunks: Vec<usize> = (0..det.chunk_count()).collect();
    let results = map_ordered(&chunks, workers, |&c| det.score_chunk(c));
    Ok(det.finish(results.into_iter().collect::<mdi_core::Result<Vec<_>>>()?))
}

/// [`mdi_core::detect`] with the scan spread over `workers` threads.
pub fn detect_parallel(tensor: &DataTensor, config: &DetectorConfig, workers: usize) -> mdi_core::Result<Vec<Detection>> {
    run_prepared(&prepare(tensor, config)?, workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..100).collect();
        let out = map_ordered(&items, 4, |x| x * x);
        assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(map_ordered(&[] as &[u8], 3, |x| *x).is_empty());
    }
}
