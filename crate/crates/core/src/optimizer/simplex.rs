//! Derivative-free local minimizers: Nelder-Mead for the full probe space and
//! a scan-then-golden-section search for one-parameter families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Converged when every vertex lies within this (max-norm) distance of the best.
    pub x_tol: f64,
    /// ...and the objective spread over the simplex is below this.
    pub f_tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-5,
            f_tol: 1e-10,
            max_evals: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder-Mead with the standard coefficients (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). The objective may fail; failures abort the
/// search.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: &SimplexOptions,
) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one initial step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Optimization(format!("objective is not finite at {x:?}")))
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)?));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = eval(&x, &mut evals)?;
        simplex.push((x, fx));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.x_tol && (worst - best).abs() < opts.f_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < best {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = vertex
                .0
                .iter()
                .zip(&x_best)
                .map(|(xi, bi)| bi + 0.5 * (xi - bi))
                .collect();
            let fx = eval(&x, &mut evals)?;
            *vertex = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Ok(SimplexResult {
        x,
        f,
        evals,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineResult {
    pub x: f64,
    pub f: f64,
    pub evals: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search on `[a, b]` assuming a single minimum inside.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<LineResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut evals = 0;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    evals += 2;
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok(LineResult { x, f: fx, evals })
}

/// Minimizes `f` over `[lo, hi]` by a uniform scan of `n_scan` points
/// followed by golden-section refinement between the neighbours of the best
/// scan point. With `periodic`, `hi` is identified with `lo` and the bracket
/// may wrap around.
pub fn scan_and_refine<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    n_scan: usize,
    periodic: bool,
    tol: f64,
) -> Result<LineResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if n_scan < 3 || !(hi > lo) {
        return Err(Error::Optimization(format!(
            "cannot bracket on [{lo}, {hi}] with {n_scan} scan points"
        )));
    }
    let h = if periodic {
        (hi - lo) / n_scan as f64
    } else {
        (hi - lo) / (n_scan - 1) as f64
    };
    let mut values = Vec::with_capacity(n_scan);
    for i in 0..n_scan {
        let v = f(lo + i as f64 * h)?;
        if !v.is_finite() {
            return Err(Error::Optimization(format!(
                "objective is not finite at {}",
                lo + i as f64 * h
            )));
        }
        values.push(v);
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    let centre = lo + best as f64 * h;
    let (a, b) = if periodic {
        (centre - h, centre + h)
    } else {
        ((centre - h).max(lo), (centre + h).min(hi))
    };
    let refined = golden_section(&mut f, a, b, tol)?;
    let mut out = if refined.f <= values[best] {
        refined
    } else {
        LineResult {
            x: centre,
            f: values[best],
            evals: refined.evals,
        }
    };
    // boundary minima: golden section never evaluates the endpoints themselves
    if !periodic && (best == 0 || best == n_scan - 1) && values[best] <= out.f {
        out.x = centre;
        out.f = values[best];
    }
    out.evals += n_scan;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opts = SimplexOptions {
            x_tol: 1e-8,
            f_tol: 1e-14,
            max_evals: 5000,
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], &opts).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_reports_non_convergence_and_errors() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + x[1] * x[1]);
        let opts = SimplexOptions {
            max_evals: 10,
            ..Default::default()
        };
        let r = nelder_mead(f, &[3.0, 3.0], &[0.1, 0.1], &opts).unwrap();
        assert!(!r.converged);
        let bad = |_: &[f64]| Ok(f64::NAN);
        assert!(nelder_mead(bad, &[0.0], &[0.1], &opts).is_err());
    }

    #[test]
    fn line_search_interior_boundary_and_periodic() {
        let r = scan_and_refine(|x| Ok((x - 0.37).powi(2)), 0.0, 1.0, 11, false, 1e-9).unwrap();
        assert!((r.x - 0.37).abs() < 1e-8);
        let r = scan_and_refine(|x| Ok(-x), 0.0, 1.0, 11, false, 1e-9).unwrap();
        assert_eq!(r.x, 1.0);
        let tau = std::f64::consts::TAU;
        let r = scan_and_refine(|x| Ok(-(x - 0.05).cos()), 0.0, tau, 16, true, 1e-9).unwrap();
        assert!((crate::gaussian::wrap_pi(r.x) - 0.05).abs() < 1e-6);
        let r = scan_and_refine(|x| Ok(-(x + 0.05).cos()), 0.0, tau, 16, true, 1e-9).unwrap();
        assert!((crate::gaussian::wrap_pi(r.x) + 0.05).abs() < 1e-6);
        assert!(scan_and_refine(|x| Ok(x), 1.0, 0.0, 11, false, 1e-9).is_err());
    }
}
