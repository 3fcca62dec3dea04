//! Small numeric helpers shared across modules.

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub(crate) fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Median; averages the two middle elements for even lengths. Reorders `xs`.
pub(crate) fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (_, hi, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = xs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    median_in_place(&mut xs.to_vec())
}

/// Median absolute deviation around `center` (unscaled).
pub(crate) fn mad(xs: &[f64], center: f64) -> f64 {
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - center).abs()).collect();
    median_in_place(&mut dev)
}

/// Scale factor turning a MAD into a normal-consistent sigma.
pub(crate) const MAD_SCALE: f64 = 1.4826;

/// Least-squares slope and intercept of `ys` against their index.
pub(crate) fn linear_fit(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return (0.0, ys.first().copied().unwrap_or(0.0));
    }
    let mx = (n - 1.0) / 2.0;
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Sorted multiset supporting O(log n) search and O(n) insert/remove.
struct SortedWindow {
    buf: Vec<f64>,
}

impl SortedWindow {
    fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    fn insert(&mut self, x: f64) {
        let at = self.buf.partition_point(|v| v.total_cmp(&x).is_lt());
        self.buf.insert(at, x);
    }

    fn remove(&mut self, x: f64) {
        let at = self.buf.partition_point(|v| v.total_cmp(&x).is_lt());
        debug_assert!(at < self.buf.len() && self.buf[at].total_cmp(&x).is_eq());
        self.buf.remove(at);
    }

    fn median(&self) -> f64 {
        let n = self.buf.len();
        if n % 2 == 1 {
            self.buf[n / 2]
        } else {
            0.5 * (self.buf[n / 2 - 1] + self.buf[n / 2])
        }
    }
}

/// Centered moving average of width `width`; near the edges the nearest
/// full window is reused.
pub(crate) fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    let n = xs.len();
    let width = width.clamp(1, n);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for x in xs {
        prefix.push(prefix.last().unwrap() + x);
    }
    let back = width / 2;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(back).min(n - width);
            (prefix[lo + width] - prefix[lo]) / width as f64
        })
        .collect()
}

/// Centered moving median with half-width `half`. Near the edges the window
/// is cut at the series boundary, so the first and last `half` outputs use
/// fewer samples on one side.
pub(crate) fn moving_median(xs: &[f64], half: usize) -> Vec<f64> {
    let n = xs.len();
    let mut out = Vec::with_capacity(n);
    let mut window = SortedWindow::with_capacity(2 * half + 1);
    // current window is xs[lo..hi]
    let (mut lo, mut hi) = (0usize, 0usize);
    for t in 0..n {
        let (new_lo, new_hi) = (t.saturating_sub(half), (t + half + 1).min(n));
        while hi < new_hi {
            window.insert(xs[hi]);
            hi += 1;
        }
        while lo < new_lo {
            window.remove(xs[lo]);
            lo += 1;
        }
        out.push(window.median());
    }
    out
}

/// Nearest-rank empirical quantile: the `ceil(q * n)`-th order statistic.
pub(crate) fn nearest_rank_quantile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_moving_median(xs: &[f64], half: usize) -> Vec<f64> {
        let n = xs.len();
        (0..n)
            .map(|t| median(&xs[t.saturating_sub(half)..(t + half + 1).min(n)]))
            .collect()
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn moving_median_matches_brute_force() {
        let xs: Vec<f64> = (0..97).map(|i| ((i * 37) % 23) as f64 - (i % 5) as f64).collect();
        for half in [0, 1, 2, 5, 20, 48, 60] {
            assert_eq!(moving_median(&xs, half), brute_moving_median(&xs, half), "half={half}");
        }
    }

    #[test]
    fn quantile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank_quantile(&xs, 0.95), 95.0);
        assert_eq!(nearest_rank_quantile(&xs, 0.001), 1.0);
    }

    #[test]
    fn linear_fit_exact_line() {
        let ys: Vec<f64> = (0..10).map(|i| 3.0 + 0.5 * i as f64).collect();
        let (slope, icpt) = linear_fit(&ys);
        assert!((slope - 0.5).abs() < 1e-12 && (icpt - 3.0).abs() < 1e-12);
    }
}
