//! Frequency grids.

/// `n` points from `lo` to `hi` inclusive, evenly spaced in log frequency.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln();
            let mut v: Vec<f64> = (0..n).map(|i| lo * (r * i as f64 / (n - 1) as f64).exp()).collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn stepped(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Inserts `f` into an ascending grid unless already present.
pub fn with_point(mut grid: Vec<f64>, f: f64) -> Vec<f64> {
    match grid.binary_search_by(|x| x.total_cmp(&f)) {
        Ok(_) => {}
        Err(i) => grid.insert(i, f),
    }
    grid
}
