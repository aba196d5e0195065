//! Ordered fan-out over independent work items.
//!
//! Items are split into contiguous chunks, one scoped thread per chunk, and
//! results are concatenated in item order — so the output is identical for
//! any worker count.

pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let workers = workers.min(items.len());
    let chunk_size = items.len().div_ceil(workers);
    let mut results: Vec<Vec<R>> = Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for (c, chunk) in items.chunks(chunk_size).enumerate() {
            let f = &f;
            handles.push(scope.spawn(move || {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, t)| f(c * chunk_size + i, t))
                    .collect::<Vec<R>>()
            }));
        }
        for h in handles {
            results.push(h.join().expect("worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}
