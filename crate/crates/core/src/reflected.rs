//! Reflected diffusions `(X, k)` by the Euler-projection scheme, the exact
//! one-dimensional Skorokhod map, and moment diagnostics.

use std::path::Path;

use rayon::prelude::*;

use crate::calculus::PathBundle;
use crate::coefficients::CoefficientSet;
use crate::domain::{Location, SmoothDomain};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{Motion, Stream};
use crate::stats::mean_se;

/// One scenario of the pair `(X, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectedPath {
    pub grid: TimeGrid,
    /// `(N+1) * n` values.
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub on_boundary: Vec<bool>,
}

/// All scenarios of a reflected simulation, stored time-major so that the
/// backward solvers can read a whole time slice at once.
#[derive(Clone, Debug)]
pub struct ReflectedEnsemble {
    grid: TimeGrid,
    start_step: usize,
    n: usize,
    ids: Vec<usize>,
    x: Vec<f64>,
    k: Vec<f64>,
    on_boundary: Vec<bool>,
    excluded: usize,
}

impl ReflectedEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn start_step(&self) -> usize {
        self.start_step
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    /// Number of kept scenarios.
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
    /// Bundle scenario id of member `j`.
    pub fn id(&self, j: usize) -> usize {
        self.ids[j]
    }
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn x(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.ids.len() + j) * self.n;
        &self.x[o..o + self.n]
    }

    /// Whole time slice `i`, `len * n` values.
    pub fn x_slice(&self, i: usize) -> &[f64] {
        let m = self.ids.len() * self.n;
        &self.x[i * m..(i + 1) * m]
    }

    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.ids.len() + j]
    }

    pub fn k_slice(&self, i: usize) -> &[f64] {
        let m = self.ids.len();
        &self.k[i * m..(i + 1) * m]
    }

    pub fn on_boundary(&self, i: usize, j: usize) -> bool {
        self.on_boundary[i * self.ids.len() + j]
    }

    pub fn path(&self, j: usize) -> ReflectedPath {
        let steps = self.grid.steps();
        ReflectedPath {
            grid: self.grid,
            x: (0..=steps).flat_map(|i| self.x(i, j).to_vec()).collect(),
            k: (0..=steps).map(|i| self.k(i, j)).collect(),
            on_boundary: (0..=steps).map(|i| self.on_boundary(i, j)).collect(),
        }
    }

    /// Boundary process as a `(step, member) -> k` function.
    pub fn k_fn(&self) -> impl Fn(usize, usize) -> f64 + Sync + '_ {
        move |i, j| self.k(i, j)
    }

    pub fn write_csv(&self, path: &Path, max_scenarios: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["scenario".to_string(), "t".to_string()];
        header.extend((0..self.n).map(|i| format!("x{i}")));
        header.push("k".into());
        header.push("on_boundary".into());
        w.write_record(&header)?;
        for j in 0..self.len().min(max_scenarios) {
            for i in 0..=self.grid.steps() {
                let mut rec = vec![self.ids[j].to_string(), format!("{:e}", self.grid.time(i))];
                rec.extend(self.x(i, j).iter().map(|v| format!("{v:.12e}")));
                rec.push(format!("{:.12e}", self.k(i, j)));
                rec.push((self.on_boundary(i, j) as u8).to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulate from `x0` at `start_time` for every scenario of the bundle.
pub fn simulate_reflected(
    coeffs: &CoefficientSet,
    domain: &SmoothDomain,
    start_time: f64,
    x0: &[f64],
    bundle: &PathBundle,
) -> Result<ReflectedEnsemble> {
    simulate_reflected_with(coeffs, domain, start_time, |_| x0, bundle)
}

/// Like [`simulate_reflected`] with a per-scenario starting point.
pub fn simulate_reflected_with<'a>(
    coeffs: &CoefficientSet,
    domain: &SmoothDomain,
    start_time: f64,
    start: impl Fn(usize) -> &'a [f64] + Sync,
    bundle: &PathBundle,
) -> Result<ReflectedEnsemble> {
    let n = coeffs.n();
    let d = coeffs.d();
    if domain.dim() != n {
        return Err(Error::Dimension(format!("domain has dimension {}, state has n = {n}", domain.dim())));
    }
    if bundle.dim() != d {
        return Err(Error::Dimension(format!("bundle has d = {}, coefficients d = {d}", bundle.dim())));
    }
    let grid = *bundle.grid();
    let start_step = grid
        .index_of(start_time)
        .ok_or_else(|| Error::InvalidInput(format!("start time {start_time} is not on the grid")))?;
    let m = bundle.scenarios();
    for s in 0..m {
        let x0 = start(s);
        if x0.len() != n || !domain.contains_closure(x0) {
            return Err(Error::InvalidInput(format!("start point {x0:?} is not in the closed domain")));
        }
    }
    let steps = grid.steps();
    let dt = grid.dt();

    struct Scenario {
        x: Vec<f64>,
        k: Vec<f64>,
        flags: Vec<bool>,
        ok: bool,
    }
    let sims: Vec<Scenario> = (0..m)
        .into_par_iter()
        .map(|s| {
            let x0 = start(s);
            let mut x = vec![0.0; (steps + 1) * n];
            let mut k = vec![0.0; steps + 1];
            let mut flags = vec![false; steps + 1];
            for i in 0..=start_step {
                x[i * n..(i + 1) * n].copy_from_slice(x0);
                flags[i] = domain.classify(x0) == Location::Boundary;
            }
            let (mut b, mut sig, mut p) = (vec![0.0; n], vec![0.0; n * d], vec![0.0; n]);
            for i in start_step..steps {
                let cur = &x[i * n..(i + 1) * n];
                coeffs.b_into(cur, &mut b);
                coeffs.sigma_into(cur, &mut sig);
                for a in 0..n {
                    p[a] = cur[a] + b[a] * dt + (0..d).map(|c| sig[a * d + c] * bundle.dw(s, i, c)).sum::<f64>();
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Scenario { x, k, flags, ok: false };
                }
                let moved = domain.project(&mut p);
                debug_assert!(domain.contains_closure(&p));
                x[(i + 1) * n..(i + 2) * n].copy_from_slice(&p);
                k[i + 1] = k[i] + moved;
                flags[i + 1] = moved > 0.0 || domain.classify(&p) == Location::Boundary;
            }
            Scenario { x, k, flags, ok: true }
        })
        .collect();

    let ids: Vec<usize> = (0..m).filter(|&s| sims[s].ok).collect();
    let excluded = m - ids.len();
    if excluded * 1000 > m {
        return Err(Error::TooManyExclusions { excluded, total: m });
    }
    let kept = ids.len();
    let mut xs = vec![0.0; (steps + 1) * kept * n];
    let mut ks = vec![0.0; (steps + 1) * kept];
    let mut fl = vec![false; (steps + 1) * kept];
    for (j, &s) in ids.iter().enumerate() {
        let sc = &sims[s];
        for i in 0..=steps {
            let o = (i * kept + j) * n;
            xs[o..o + n].copy_from_slice(&sc.x[i * n..(i + 1) * n]);
            ks[i * kept + j] = sc.k[i];
            fl[i * kept + j] = sc.flags[i];
        }
    }
    Ok(ReflectedEnsemble {
        grid,
        start_step,
        n,
        ids,
        x: xs,
        k: ks,
        on_boundary: fl,
        excluded,
    })
}

/// Exact Skorokhod map on the half line `[0, inf)` at the grid points:
/// `k_t = max(0, max_{s<=t}(-x0 - W_s))`, `X = x0 + W + k`.
pub fn skorokhod_oracle_1d(x0: f64, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut k = Vec::with_capacity(w.len());
    let mut run = 0.0f64;
    for &v in w {
        run = run.max(-x0 - v);
        k.push(run);
    }
    let x = w.iter().zip(&k).map(|(wi, ki)| x0 + wi + ki).collect();
    (x, k)
}

/// Skorokhod map of the continuous Brownian path, evaluated at the grid
/// points: the minimum of `W` over each step is drawn exactly from the
/// Brownian bridge between the observed endpoints. The bridge uniforms
/// come from the scenario's dedicated stream.
pub fn skorokhod_oracle_bridge(x0: f64, w: &[f64], dt: f64, seed: u64, scenario: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Stream::new(seed, scenario, Motion::Bridge);
    let mut k = Vec::with_capacity(w.len());
    let mut min_w = w[0];
    k.push((-x0 - min_w).max(0.0));
    for pair in w.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let u = rng.uniform();
        let m = 0.5 * (a + b - ((b - a).powi(2) - 2.0 * dt * u.ln()).sqrt());
        min_w = min_w.min(m);
        k.push((-x0 - min_w).max(0.0));
    }
    let x = w.iter().zip(&k).map(|(wi, ki)| x0 + wi + ki).collect();
    (x, k)
}

/// Moment estimates for one pair of starting points.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMoments {
    pub first: usize,
    pub second: usize,
    pub separation: f64,
    /// `E sup_t |X^x - X^x'|^4 / |x - x'|^4`.
    pub ratio_x: f64,
    pub se_x: f64,
    /// `E sup_t |k^x - k^x'|^4 / |x - x'|^4`.
    pub ratio_k: f64,
    pub se_k: f64,
}

#[derive(Clone, Debug)]
pub struct MomentReport {
    pub pairs: Vec<PairMoments>,
    /// `(mean, se)` of `e^{mu k_T}` per start.
    pub exp_moments: Vec<(f64, f64)>,
    pub max_ratio_x: f64,
    pub max_ratio_k: f64,
}

/// Fourth-moment ratio of two coupled paths; coincident starts give the
/// trivially satisfied value 0.
pub fn pair_moment_ratio(a: &ReflectedEnsemble, b: &ReflectedEnsemble, sep: f64) -> ((f64, f64), (f64, f64)) {
    if sep == 0.0 {
        return ((0.0, 0.0), (0.0, 0.0));
    }
    let n = a.dim();
    let steps = a.grid().steps();
    let m = a.len().min(b.len());
    let mut sx = Vec::with_capacity(m);
    let mut sk = Vec::with_capacity(m);
    for j in 0..m {
        let (mut mx, mut mk) = (0.0f64, 0.0f64);
        for i in a.start_step()..=steps {
            let dx: f64 = (0..n).map(|c| (a.x(i, j)[c] - b.x(i, j)[c]).powi(2)).sum::<f64>();
            mx = mx.max(dx * dx);
            mk = mk.max((a.k(i, j) - b.k(i, j)).powi(4));
        }
        sx.push(mx);
        sk.push(mk);
    }
    let s4 = sep.powi(4);
    let (mx, ex) = mean_se(&sx);
    let (mk, ek) = mean_se(&sk);
    ((mx / s4, ex / s4), (mk / s4, ek / s4))
}

/// Estimates of the Lipschitz-type moment bounds in the starting point and
/// of exponential moments of `k`, under common random numbers.
pub fn moment_diagnostics(
    domain: &SmoothDomain,
    coeffs: &CoefficientSet,
    starts: &[Vec<f64>],
    mu: f64,
    bundle: &PathBundle,
) -> Result<MomentReport> {
    for i in 0..starts.len() {
        for j in 0..i {
            if starts[i] == starts[j] {
                return Err(Error::InvalidInput(format!("starting points {j} and {i} coincide")));
            }
        }
    }
    let t0 = bundle.grid().t_start();
    let ens: Vec<ReflectedEnsemble> = starts
        .iter()
        .map(|x| simulate_reflected(coeffs, domain, t0, x, bundle))
        .collect::<Result<_>>()?;
    let steps = bundle.grid().steps();
    let exp_moments = ens
        .iter()
        .map(|e| mean_se(&e.k_slice(steps).iter().map(|k| (mu * k).exp()).collect::<Vec<_>>()))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..starts.len() {
        for j in i + 1..starts.len() {
            let sep = starts[i].iter().zip(&starts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let ((rx, ex), (rk, ek)) = pair_moment_ratio(&ens[i], &ens[j], sep);
            pairs.push(PairMoments { first: i, second: j, separation: sep, ratio_x: rx, se_x: ex, ratio_k: rk, se_k: ek });
        }
    }
    let max_ratio_x = pairs.iter().map(|p| p.ratio_x).fold(0.0, f64::max);
    let max_ratio_k = pairs.iter().map(|p| p.ratio_k).fold(0.0, f64::max);
    Ok(MomentReport { pairs, exp_moments, max_ratio_x, max_ratio_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn oracle_example() {
        let (x, k) = skorokhod_oracle_1d(0.0, &[0.0, -1.0, -0.5]);
        assert_eq!(k, vec![0.0, 1.0, 1.0]);
        assert_eq!(x, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn projection_step_arithmetic() {
        // X = 0.9 with increment +0.3 on (0,1) lands at 1 with dk = 0.2
        let d = SmoothDomain::interval(0.0, 1.0).unwrap();
        let mut p = [1.2];
        let moved = d.project(&mut p);
        assert_eq!(p[0], 1.0);
        assert!((moved - 0.2).abs() < 1e-15);
        assert_eq!(d.classify(&p), Location::Boundary);
    }

    #[test]
    fn motionless_without_coefficients() {
        let c = CoefficientSet::builder(1, 1).b(vec![Expr::zero()]).build().unwrap();
        let d = SmoothDomain::interval(0.0, 1.0).unwrap();
        let b = PathBundle::sample(TimeGrid::new(0.0, 1.0, 10).unwrap(), 1, 1, 4, None).unwrap();
        let e = simulate_reflected(&c, &d, 0.0, &[0.3], &b).unwrap();
        for i in 0..=10 {
            for j in 0..4 {
                assert_eq!(e.x(i, j), &[0.3]);
                assert_eq!(e.k(i, j), 0.0);
            }
        }
    }
}
