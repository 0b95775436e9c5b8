//! Bounded Nelder-Mead simplex minimization. Vertices are clamped into the
//! control box after every move.

use crate::operator::ControlBox;

pub(crate) struct SimplexOptions {
    pub max_iter: usize,
    /// Stop once the best value drops to this level.
    pub f_target: f64,
    /// Stop once every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
}

pub(crate) fn nelder_mead<F>(f: F, start: &[f64], bounds: &ControlBox, opts: &SimplexOptions) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let m = start.len();
    let widths = bounds.widths();
    let eval = |x: &mut Vec<f64>| {
        bounds.clamp(x);
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    let mut x0 = start.to_vec();
    let f0 = eval(&mut x0);
    simplex.push((x0.clone(), f0));
    for l in 0..m {
        let mut x = x0.clone();
        let step = opts.initial_step * widths[l];
        // step away from the nearer face so the vertex stays distinct after clamping
        let [lo, hi] = bounds.bounds()[l];
        x[l] += if hi - x[l] >= x[l] - lo { step } else { -step };
        let fx = eval(&mut x);
        simplex.push((x, fx));
    }

    let centroid = |s: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let mut c = vec![0.0; m];
        for (x, _) in &s[..m] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / m as f64;
            }
        }
        c
    };
    let along = |c: &[f64], x: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(x).map(|(ci, xi)| ci + t * (xi - ci)).collect()
    };

    for _ in 0..opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        if best <= opts.f_target {
            break;
        }
        let spread = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.x_tol {
            break;
        }

        let c = centroid(&simplex);
        let worst = simplex[m].clone();
        let mut xr = along(&c, &worst.0, -1.0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(&c, &worst.0, -2.0);
            let fe = eval(&mut xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let (mut xc, t) = if fr < worst.1 {
                (along(&c, &worst.0, -0.5), fr)
            } else {
                (along(&c, &worst.0, 0.5), worst.1)
            };
            let fc = eval(&mut xc);
            if fc < t {
                simplex[m] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut xs = along(&x_best, &v.0, 0.5);
                    let fs = eval(&mut xs);
                    *v = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}
