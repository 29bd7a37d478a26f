//! Least-squares line fits shared by the splitting and growth probes.

/// Slope, intercept, and (for three or more points) the 95% half-width of
/// the slope estimate.
pub(crate) fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, Option<f64>) {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let half_width = if xs.len() >= 3 {
        let sse: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();
        Some(1.96 * se)
    } else {
        None
    };
    (slope, intercept, half_width)
}
