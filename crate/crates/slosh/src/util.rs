//! Small shared helpers: worker pool sizing and a deterministic PRNG for
//! solver start vectors.

/// Worker count for embarrassingly parallel column loops. `SLOSH_THREADS`
/// caps it; results never depend on the count because every column is an
/// independent computation written to its own slot.
pub fn worker_threads() -> usize {
    if let Ok(s) = std::env::var("SLOSH_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            return n.clamp(1, 64);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .clamp(1, 16)
}

/// Compute `ncols` independent columns, possibly on several threads.
pub fn par_columns<F>(ncols: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let nt = worker_threads().min(ncols.max(1));
    if nt <= 1 || ncols < 4 {
        return (0..ncols).map(f).collect();
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    let chunk = ncols.div_ceil(nt);
    std::thread::scope(|scope| {
        for (t, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = t * chunk;
                for (k, dst) in slot.iter_mut().enumerate() {
                    *dst = f(base + k);
                }
            });
        }
    });
    out
}

/// SplitMix64; fixed seeds give reproducible solver start vectors.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_pm1(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_columns_matches_serial() {
        let f = |i: usize| vec![i as f64, 2.0 * i as f64];
        let a = par_columns(9, f);
        let b: Vec<Vec<f64>> = (0..9).map(f).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn splitmix_is_reproducible() {
        let mut a = SplitMix64::new(123);
        let mut b = SplitMix64::new(123);
        for _ in 0..100 {
            let x = a.next_pm1();
            assert_eq!(x, b.next_pm1());
            assert!((-1.0..1.0).contains(&x));
        }
    }
}
