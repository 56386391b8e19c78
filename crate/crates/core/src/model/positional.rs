//! Sinusoidal time codes.

/// Base of the geometric wavelength progression for an `n`-channel code.
///
/// Each sin/cos pair resolves two bits of position, so the base is `2^n`:
/// pair `i` turns at angular frequency `4^−i` and the slowest pair of an
/// `n`-wide code completes one turn only after about `2^n` frames. Widths
/// above 16 keep the base at `2^16`, a period already far beyond any clip.
pub fn positional_base(n: usize) -> f64 {
    2f64.powi(n.min(16) as i32)
}

/// Interleaved `(sin, cos)` code of frame `t` over `n` channels.
///
/// Channel `2i` is `sin(t · base^(−2i/n))` and channel `2i+1` the matching
/// cosine. `n` must be even; an odd width drops the trailing cosine.
pub fn positional_code(t: usize, n: usize) -> Vec<f64> {
    let base = positional_base(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n.div_ceil(2) {
        let freq = base.powf(-((2 * i) as f64) / n as f64);
        let angle = t as f64 * freq;
        out.push(angle.sin());
        if out.len() < n {
            out.push(angle.cos());
        }
    }
    out
}

/// Row-stacked codes for a list of frames, `times.len() × n`, row-major.
pub fn positional_rows(times: &[usize], n: usize) -> Vec<f64> {
    times.iter().flat_map(|&t| positional_code(t, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_alternates() {
        let code = positional_code(0, 16);
        for (i, v) in code.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn components_bounded() {
        for t in [0, 1, 7, 100, 4095, 65535] {
            for n in [4, 16, 64] {
                assert!(positional_code(t, n).iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn frequencies_follow_the_base() {
        let code = positional_code(3, 4);
        // base 16: pairs turn at 1 and 1/4.
        assert!((code[0] - 3f64.sin()).abs() < 1e-15);
        assert!((code[3] - 0.75f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn sixteen_channels_separate_4096_frames() {
        let codes: Vec<Vec<f64>> = (0..4096).map(|t| positional_code(t, 16)).collect();
        let mut min_gap = f64::INFINITY;
        for a in 0..codes.len() {
            for b in a + 1..codes.len() {
                let gap = codes[a]
                    .iter()
                    .zip(&codes[b])
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                min_gap = min_gap.min(gap);
            }
        }
        assert!(min_gap > 1e-6, "min gap {min_gap}");
    }
}
