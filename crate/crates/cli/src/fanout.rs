//! Running one operation per host with bounded parallelism.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

/// Applies `f` to every item using at most `limit` threads. Results come
/// back in input order, and a failure for one item never stops the others.
pub fn fan_out<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let workers = limit.max(1).min(items.len());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every item ran"))
        .collect()
}

/// 0 when everything succeeded, 2 when nothing did, 1 otherwise.
pub fn exit_code(succeeded: usize, total: usize) -> u8 {
    if succeeded == total {
        0
    } else if succeeded == 0 {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::time::Duration;

    #[test]
    fn keeps_order_and_bounds_concurrency() {
        let running = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let items: Vec<u32> = (0..40).collect();
        let out = fan_out(&items, 4, |&i| {
            let now = running.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(2));
            running.fetch_sub(1, Ordering::SeqCst);
            i * 2
        });
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 4);
    }

    #[test]
    fn one_failure_does_not_stop_the_rest() {
        let out = fan_out(&[1, 0, 3], 16, |&d| if d == 0 { Err("zero") } else { Ok(6 / d) });
        assert_eq!(out, vec![Ok(6), Err("zero"), Ok(2)]);
        assert_eq!(exit_code(2, 3), 1);
        assert_eq!(exit_code(3, 3), 0);
        assert_eq!(exit_code(0, 3), 2);
        assert!(fan_out(&[] as &[u8], 16, |_| ()).is_empty());
    }
}
