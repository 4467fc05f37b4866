//! Derivative-free minimization by the Nelder-Mead simplex method.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Relative spread of objective values across the simplex at which the
    /// search stops.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            ftol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0`, building the initial simplex by offsetting
    /// each coordinate by the matching entry of `steps`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum {
        let n = x0.len();
        assert_eq!(n, steps.len(), "one step per coordinate");
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        pts.push(x0.to_vec());
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += steps[i];
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter().map(|p| eval(&mut f, p)).collect();
        let mut order: Vec<usize> = (0..=n).collect();

        let mut iterations = 0;
        let mut converged = false;
        loop {
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let best = order[0];
            let worst = order[n];
            let second = order[n.saturating_sub(1)];
            let (fl, fh) = (vals[best], vals[worst]);
            if fl.is_finite() && fh.is_finite() && 2.0 * (fh - fl).abs() <= self.ftol * (fl.abs() + fh.abs()) + 1e-300 {
                converged = true;
                break;
            }
            if iterations >= self.max_iter {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for &k in &order[..n] {
                for (c, x) in centroid.iter_mut().zip(&pts[k]) {
                    *c += x / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&pts[worst]).map(|(c, w)| c + t * (c - w)).collect()
            };

            let xr = along(1.0);
            let fr = eval(&mut f, &xr);
            if fr < fl {
                let xe = along(2.0);
                let fe = eval(&mut f, &xe);
                if fe < fr {
                    pts[worst] = xe;
                    vals[worst] = fe;
                } else {
                    pts[worst] = xr;
                    vals[worst] = fr;
                }
                continue;
            }
            if fr < vals[second] {
                pts[worst] = xr;
                vals[worst] = fr;
                continue;
            }
            let (xc, fc) = if fr < fh {
                let xc = along(0.5);
                let fc = eval(&mut f, &xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&mut f, &xc);
                (xc, fc)
            };
            if fc < fh.min(fr) {
                pts[worst] = xc;
                vals[worst] = fc;
                continue;
            }
            let anchor = pts[best].clone();
            for k in 0..=n {
                if k == best {
                    continue;
                }
                let shrunk: Vec<f64> = anchor.iter().zip(&pts[k]).map(|(a, x)| a + 0.5 * (x - a)).collect();
                vals[k] = eval(&mut f, &shrunk);
                pts[k] = shrunk;
            }
        }
        let best = order[0];
        Minimum {
            x: pts[best].clone(),
            fx: vals[best],
            iterations,
            converged,
        }
    }
}
