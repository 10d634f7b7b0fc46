use super::Parameters;

/// `|a − n| / max(1e−8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` gradients and central finite
/// differences of `loss` around `params`, over every scalar parameter.
pub fn grad_check<P, L>(params: &P, analytic: &P, loss: L, h: f64) -> f64
where
    P: Parameters<f64>,
    L: Fn(&P) -> f64,
{
    let grads = analytic.flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut k = 0;
    let n_tensors = probe.tensors().len();
    for ti in 0..n_tensors {
        let len = probe.tensors()[ti].1.len();
        for i in 0..len {
            let orig = nth(&mut probe, ti, i, None);
            nth(&mut probe, ti, i, Some(orig + h));
            let up = loss(&probe);
            nth(&mut probe, ti, i, Some(orig - h));
            let down = loss(&probe);
            nth(&mut probe, ti, i, Some(orig));
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[k], numeric));
            k += 1;
        }
    }
    worst
}

/// Reads, and optionally overwrites, the `i`-th scalar of tensor `ti`.
fn nth<P: Parameters<f64>>(p: &mut P, ti: usize, i: usize, value: Option<f64>) -> f64 {
    let mut tensors = p.tensors_mut();
    let t = &mut tensors[ti].1;
    let slot = t.iter_mut().nth(i).expect("index in range");
    let old = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    old
}
