//! Graded one-dimensional grids clustering toward a degenerate boundary.

/// Strictly increasing station set on `[0, length]` whose cell widths grow
/// geometrically away from 0 by `ratio`, with the width contrast capped at
/// `max_contrast`. The first station is 0, the last is `length`.
pub fn graded(length: f64, n_cells: usize, ratio: f64, max_contrast: f64) -> Vec<f64> {
    assert!(length > 0.0 && n_cells >= 2 && ratio >= 1.0 && max_contrast >= 1.0);
    // unit cell widths w_k = min(ratio^k, max_contrast), rescaled to sum to length
    let mut w = Vec::with_capacity(n_cells);
    let mut cur = 1.0;
    for _ in 0..n_cells {
        w.push(cur);
        cur = (cur * ratio).min(max_contrast);
    }
    let total: f64 = w.iter().sum();
    let mut x = Vec::with_capacity(n_cells + 1);
    let mut acc = 0.0;
    x.push(0.0);
    for v in &w {
        acc += v / total * length;
        x.push(acc);
    }
    *x.last_mut().unwrap() = length;
    x
}

/// Uniform station set on `[0, length]`.
pub fn uniform(length: f64, n_cells: usize) -> Vec<f64> {
    (0..=n_cells)
        .map(|i| length * i as f64 / n_cells as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_covers_interval() {
        let g = graded(0.3, 64, 1.1, 1e4);
        assert_eq!(g.len(), 65);
        assert_eq!(g[0], 0.0);
        assert!((g[64] - 0.3).abs() < 1e-15);
        for i in 1..g.len() {
            assert!(g[i] > g[i - 1]);
        }
        // clustering: first cell much smaller than last
        assert!((g[1] - g[0]) < (g[64] - g[63]) / 50.0);
    }

    #[test]
    fn contrast_cap_respected() {
        let g = graded(1.0, 200, 1.2, 100.0);
        let first = g[1] - g[0];
        let last = g[200] - g[199];
        assert!(last / first < 100.0 + 1e-9);
    }
}
