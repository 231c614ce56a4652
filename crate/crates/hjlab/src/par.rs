//! Data-parallel helpers that fall back to sequential iteration when the
//! `parallel` feature is off. Results are always returned in input order.

/// Maps `f` over `items`, in parallel when enabled.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Fills `out[i] = f(i)` for every index.
#[cfg(feature = "parallel")]
pub fn fill_indexed<U, F>(out: &mut [U], f: F)
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    // Chunks keep per-task overhead small for cheap stencils.
    const CHUNK: usize = 2048;
    if out.len() <= CHUNK || rayon::current_num_threads() == 1 {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
        return;
    }
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k);
            }
        });
}

#[cfg(not(feature = "parallel"))]
pub fn fill_indexed<U, F>(out: &mut [U], f: F)
where
    F: Fn(usize) -> U,
{
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// Calls `f(offset, chunk)` over consecutive chunks of `out`.
#[cfg(feature = "parallel")]
pub fn for_chunks<U, F>(out: &mut [U], chunk: usize, f: F)
where
    U: Send,
    F: Fn(usize, &mut [U]) + Sync + Send,
{
    use rayon::prelude::*;
    if out.len() <= chunk || rayon::current_num_threads() == 1 {
        f(0, out);
        return;
    }
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, part)| f(c * chunk, part));
}

#[cfg(not(feature = "parallel"))]
pub fn for_chunks<U, F>(out: &mut [U], _chunk: usize, f: F)
where
    F: Fn(usize, &mut [U]),
{
    f(0, out)
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f` inside a pool with `workers` threads (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R>(_workers: usize, f: impl FnOnce() -> R) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(&v, |x| x * x);
        assert!(out.iter().enumerate().all(|(i, &y)| y == (i * i) as u64));
    }

    #[test]
    fn fill_indexed_covers_all_slots() {
        let mut out = vec![0usize; 5000];
        fill_indexed(&mut out, |i| i + 1);
        assert!(out.iter().enumerate().all(|(i, &y)| y == i + 1));
    }
}
