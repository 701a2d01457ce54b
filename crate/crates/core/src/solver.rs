//! Least-squares Monte Carlo solvers for generalized BDSDEs: the
//! simple-coefficient equation, the Picard iteration and the Markovian
//! equation driven by a reflected diffusion.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{BoundaryFn, PathBundle};
use crate::coefficients::{CoefficientSet, Generator, StatePoint};
use crate::domain::SmoothDomain;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::reflected::{simulate_reflected, ReflectedEnsemble};
use crate::regression::{RegressionBasis, Regressor};
use crate::stats::mean_se;

/// `E sup |Y|^2`, `E int ||Z||^2 dt` and `E int |Y|^2 dk`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NormDiagnostics {
    pub s2: f64,
    pub m2: f64,
    pub k2: f64,
}

/// Weights of the norm `E[sup e^{mu t + lambda k}|Y|^2 + int e^{..}||Z||^2 dt
/// + c int e^{..}|Y|^2 dk + cbar int e^{..}|Y|^2 dt]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormWeights {
    pub mu: f64,
    pub lambda: f64,
    pub c: f64,
    pub cbar: f64,
}

impl Default for NormWeights {
    fn default() -> Self {
        NormWeights { mu: 1.0, lambda: 1.0, c: 1.0, cbar: 1.0 }
    }
}

/// Scenario means of the four pieces of the weighted norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormParts {
    pub sup: f64,
    pub z: f64,
    pub dk: f64,
    pub dt: f64,
}

impl NormParts {
    pub fn total(&self, w: &NormWeights) -> f64 {
        self.sup + self.z + w.c * self.dk + w.cbar * self.dt
    }
}

/// `(Y, Z)` on every (time, member) pair, time-major.
#[derive(Clone, Debug)]
pub struct BdsdeSolution {
    grid: TimeGrid,
    start: usize,
    m: usize,
    d: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    /// Pathwise sums `Y_T + sum(f dt + h dk + g dB)` down to the start step.
    realized: Vec<f64>,
    /// Per member, the time average of the raw (unprojected) `Z` targets.
    z_raw: Vec<f64>,
    picard_trace: Vec<f64>,
    norms: NormDiagnostics,
}

impl BdsdeSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn start_step(&self) -> usize {
        self.start
    }
    pub fn members(&self) -> usize {
        self.m
    }
    pub fn noise_dim(&self) -> usize {
        self.d
    }
    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.y[i * self.m + j]
    }
    pub fn y_slice(&self, i: usize) -> &[f64] {
        &self.y[i * self.m..(i + 1) * self.m]
    }
    pub fn z(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.m + j) * self.d;
        &self.z[o..o + self.d]
    }
    pub fn picard_trace(&self) -> &[f64] {
        &self.picard_trace
    }
    /// Number of Picard iterations performed (1 for direct solves).
    pub fn picard_iterations(&self) -> usize {
        self.picard_trace.len().max(1)
    }
    pub fn norms(&self) -> NormDiagnostics {
        self.norms
    }

    /// Estimate of `Y` at the start step with the standard error of the
    /// pathwise sums.
    pub fn start_value(&self) -> (f64, f64) {
        let (mean, _) = mean_se(self.y_slice(self.start));
        (mean, mean_se(&self.realized).1)
    }

    /// Mean of `Z` over time steps `[start, N)` and members, per noise
    /// coordinate, with the standard error of the raw regression targets.
    pub fn z_average(&self) -> Vec<(f64, f64)> {
        let steps = self.grid.steps() - self.start;
        (0..self.d)
            .map(|k| {
                let mut total = 0.0;
                for i in self.start..self.grid.steps() {
                    total += (0..self.m).map(|j| self.z(i, j)[k]).sum::<f64>();
                }
                let raw: Vec<f64> = (0..self.m).map(|j| self.z_raw[j * self.d + k]).collect();
                (total / (steps * self.m) as f64, mean_se(&raw).1)
            })
            .collect()
    }

    /// Scenario means of the weighted norm pieces of `(Y, Z)` itself.
    pub fn weighted_parts(&self, k: Option<BoundaryFn>, mu: f64, lambda: f64) -> NormParts {
        weighted_parts(&self.grid, self.start, self.m, self.d, &self.y, &self.z, k, mu, lambda)
    }

    /// Columns `t, mean_Y, se_Y, mean_Z..., picard_iter, trace`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "mean_Y".into(), "se_Y".into()];
        header.extend((0..self.d).map(|k| format!("mean_Z{k}")));
        header.push("picard_iter".into());
        header.push("trace".into());
        w.write_record(&header)?;
        let last_trace = self.picard_trace.last().copied().unwrap_or(0.0);
        for i in self.start..=self.grid.steps() {
            let (mean, mut se) = mean_se(self.y_slice(i));
            if i == self.start {
                se = self.start_value().1;
            }
            let mut rec = vec![format!("{:e}", self.grid.time(i)), format!("{mean:.12e}"), format!("{se:.12e}")];
            for k in 0..self.d {
                let zk = (0..self.m).map(|j| self.z(i, j)[k]).sum::<f64>() / self.m as f64;
                rec.push(format!("{zk:.12e}"));
            }
            rec.push(self.picard_iterations().to_string());
            rec.push(format!("{last_trace:.12e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn weighted_parts(
    grid: &TimeGrid,
    start: usize,
    m: usize,
    d: usize,
    y: &[f64],
    z: &[f64],
    k: Option<BoundaryFn>,
    mu: f64,
    lambda: f64,
) -> NormParts {
    let n = grid.steps();
    let dt = grid.dt();
    let kk = |i: usize, j: usize| k.map_or(0.0, |f| f(i, j));
    let per: Vec<[f64; 4]> = (0..m)
        .into_par_iter()
        .map(|j| {
            let wt = |i: usize| (mu * grid.time(i) + lambda * kk(i, j)).exp();
            let mut p = [0.0; 4];
            for i in start..=n {
                let y2 = y[i * m + j].powi(2);
                p[0] = f64::max(p[0], wt(i) * y2);
                if i < n {
                    let zn: f64 = z[(i * m + j) * d..(i * m + j + 1) * d].iter().map(|v| v * v).sum();
                    p[1] += wt(i) * zn * dt;
                    p[3] += wt(i) * y2 * dt;
                    let ynext = y[(i + 1) * m + j].powi(2);
                    p[2] += wt(i + 1) * ynext * (kk(i + 1, j) - kk(i, j));
                }
            }
            p
        })
        .collect();
    let mean = |c: usize| per.iter().map(|p| p[c]).sum::<f64>() / m as f64;
    NormParts { sup: mean(0), z: mean(1), dk: mean(2), dt: mean(3) }
}

fn plain_norms(sol: &BdsdeSolution, k: Option<BoundaryFn>) -> NormDiagnostics {
    let p = sol.weighted_parts(k, 0.0, 0.0);
    NormDiagnostics { s2: p.sup, m2: p.z, k2: p.dk }
}

/// One backward step's coefficient evaluations.
trait StepRule: Sync {
    /// `h(t_{i+1}) dk_i + <g(t_{i+1}), dB_i>` for member `j`.
    fn backward_terms(&self, i: usize, j: usize, y_next: f64, z_next: &[f64]) -> Result<f64>;
    /// `f` at `(t_i, member j)`; explicit rules ignore `y` and `z`.
    fn driver(&self, i: usize, j: usize, y: f64, z: &[f64]) -> Result<f64>;
    fn implicit(&self) -> bool;
}

struct Sweep<'a> {
    grid: TimeGrid,
    start: usize,
    m: usize,
    d: usize,
    dw: &'a (dyn Fn(usize, usize, usize) -> f64 + Sync),
    /// Row-major feature matrix at step `i` and its width.
    features: &'a (dyn Fn(usize) -> (Vec<f64>, usize) + Sync),
    basis: RegressionBasis,
    inner_sweeps: usize,
}

struct Raw {
    y: Vec<f64>,
    z: Vec<f64>,
    realized: Vec<f64>,
    z_raw: Vec<f64>,
}

impl Sweep<'_> {
    fn run(&self, rule: &dyn StepRule, y_terminal: Vec<f64>, z_terminal: Option<Vec<f64>>) -> Result<Raw> {
        let (m, d, n) = (self.m, self.d, self.grid.steps());
        let dt = self.grid.dt();
        if y_terminal.len() != m {
            return Err(Error::Dimension(format!("{} terminal values for {m} scenarios", y_terminal.len())));
        }
        let mut y = vec![0.0; (n + 1) * m];
        let mut z = vec![0.0; (n + 1) * m * d];
        y[n * m..].copy_from_slice(&y_terminal);
        if let Some(zt) = &z_terminal {
            z[n * m * d..].copy_from_slice(zt);
        }
        let mut realized = y_terminal;
        let mut z_raw = vec![0.0; m * d];
        let count = (n - self.start).max(1) as f64;

        for i in (self.start..n).rev() {
            let (ynext, znext) = (&y[(i + 1) * m..(i + 2) * m], &z[(i + 1) * m * d..(i + 2) * m * d]);
            let explicit = !rule.implicit();
            let pieces: Vec<(f64, f64)> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let back = rule.backward_terms(i, j, ynext[j], &znext[j * d..(j + 1) * d])?;
                    let f = if explicit { rule.driver(i, j, f64::NAN, &[])? } else { 0.0 };
                    Ok((back, f))
                })
                .collect::<Result<_>>()?;
            let tgt: Vec<f64> = (0..m).map(|j| ynext[j] + pieces[j].0 + pieces[j].1 * dt).collect();
            if tgt.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("regression target at step {i}")));
            }
            let (feats, dim) = (self.features)(i);
            let reg = Regressor::fit(&feats, dim, self.basis)?;
            let yhat = reg.project(&tgt);
            let mut zi = vec![0.0; m * d];
            for k in 0..d {
                let zt: Vec<f64> = (0..m).map(|j| (tgt[j] - yhat[j]) * (self.dw)(i, j, k) / dt).collect();
                for j in 0..m {
                    z_raw[j * d + k] += zt[j] / count;
                }
                for (j, v) in reg.project(&zt).into_iter().enumerate() {
                    zi[j * d + k] = v;
                }
            }
            let mut yi = yhat.clone();
            let mut fin: Vec<f64> = pieces.iter().map(|p| p.1).collect();
            if !explicit {
                for _ in 0..self.inner_sweeps {
                    yi = (0..m)
                        .into_par_iter()
                        .map(|j| Ok(yhat[j] + rule.driver(i, j, yi[j], &zi[j * d..(j + 1) * d])? * dt))
                        .collect::<Result<_>>()?;
                }
                fin = (0..m)
                    .into_par_iter()
                    .map(|j| rule.driver(i, j, yi[j], &zi[j * d..(j + 1) * d]))
                    .collect::<Result<_>>()?;
            }
            for j in 0..m {
                realized[j] += pieces[j].0 + fin[j] * dt;
            }
            y[i * m..(i + 1) * m].copy_from_slice(&yi);
            z[i * m * d..(i + 1) * m * d].copy_from_slice(&zi);
        }
        if z_terminal.is_none() && n > self.start {
            z.copy_within((n - 1) * m * d..n * m * d, n * m * d);
        }
        // before the start the solution is frozen at its start value
        for i in 0..self.start {
            y.copy_within(self.start * m..(self.start + 1) * m, i * m);
            z.copy_within(self.start * m * d..(self.start + 1) * m * d, i * m * d);
        }
        Ok(Raw { y, z, realized, z_raw })
    }
}

/// Regression features for the path-functional solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    /// `W_{t_i}`.
    pub forward: bool,
    /// `B_T - B_{t_i}`.
    pub backward: bool,
    /// `k_{t_i}` (ignored without a boundary process).
    pub boundary: bool,
}

impl Default for Features {
    fn default() -> Self {
        Features { forward: true, backward: true, boundary: false }
    }
}

impl Features {
    fn build(&self, bundle: &PathBundle, k: Option<BoundaryFn>, i: usize) -> (Vec<f64>, usize) {
        let d = bundle.dim();
        let n = bundle.grid().steps();
        let use_k = self.boundary && k.is_some();
        let dim = d * (self.forward as usize + self.backward as usize) + use_k as usize;
        let mut out = Vec::with_capacity(bundle.scenarios() * dim);
        for s in 0..bundle.scenarios() {
            if self.forward {
                out.extend_from_slice(bundle.w(s, i));
            }
            if self.backward {
                let (bt, bi) = (bundle.b(s, n), bundle.b(s, i));
                out.extend(bt.iter().zip(bi).map(|(a, b)| a - b));
            }
            if use_k {
                out.push(k.unwrap()(i, s));
            }
        }
        (out, dim)
    }
}

/// Coefficient sample paths for the simple equation, all time-major over
/// the bundle's scenarios: `f` and `h` have `(N+1) * M` values, `g` has
/// `(N+1) * M * d`.
#[derive(Clone, Debug, Default)]
pub struct SimpleData {
    pub xi: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl SimpleData {
    /// Terminal value only; all coefficients zero.
    pub fn terminal(xi: Vec<f64>, steps: usize, d: usize) -> Self {
        let m = xi.len();
        SimpleData { xi, f: vec![0.0; (steps + 1) * m], g: vec![0.0; (steps + 1) * m * d], h: vec![0.0; (steps + 1) * m] }
    }
}

struct SimpleRule<'a> {
    data: &'a SimpleData,
    bundle: &'a PathBundle,
    k: Option<BoundaryFn<'a>>,
    m: usize,
}

impl StepRule for SimpleRule<'_> {
    fn backward_terms(&self, i: usize, j: usize, _: f64, _: &[f64]) -> Result<f64> {
        let d = self.bundle.dim();
        let o = (i + 1) * self.m + j;
        let mut v: f64 = (0..d).map(|k| self.data.g[o * d + k] * self.bundle.db(j, i, k)).sum();
        if let Some(kf) = self.k {
            v += self.data.h[o] * (kf(i + 1, j) - kf(i, j));
        }
        Ok(v)
    }
    fn driver(&self, i: usize, j: usize, _: f64, _: &[f64]) -> Result<f64> {
        Ok(self.data.f[i * self.m + j])
    }
    fn implicit(&self) -> bool {
        false
    }
}

fn check_boundary(k: Option<BoundaryFn>, bundle: &PathBundle) -> Result<()> {
    if let Some(kf) = k {
        for s in 0..bundle.scenarios() {
            if kf(0, s) != 0.0 {
                return Err(Error::InvalidInput(format!("boundary process of scenario {s} does not start at 0")));
            }
            for i in 0..bundle.grid().steps() {
                if kf(i + 1, s) < kf(i, s) {
                    return Err(Error::InvalidInput(format!("boundary process of scenario {s} decreases at step {i}")));
                }
            }
        }
    }
    Ok(())
}

fn path_sweep<'a>(
    bundle: &'a PathBundle,
    dw: &'a (dyn Fn(usize, usize, usize) -> f64 + Sync),
    features: &'a (dyn Fn(usize) -> (Vec<f64>, usize) + Sync),
    basis: RegressionBasis,
) -> Sweep<'a> {
    Sweep {
        grid: *bundle.grid(),
        start: 0,
        m: bundle.scenarios(),
        d: bundle.dim(),
        dw,
        features,
        basis,
        inner_sweeps: 0,
    }
}

/// Solve the equation whose coefficients are given sample paths, not
/// depending on the unknowns.
pub fn solve_simple(
    data: &SimpleData,
    k: Option<BoundaryFn>,
    bundle: &PathBundle,
    features: Features,
    basis: RegressionBasis,
) -> Result<BdsdeSolution> {
    let (m, d, n) = (bundle.scenarios(), bundle.dim(), bundle.grid().steps());
    if data.xi.len() != m || data.f.len() != (n + 1) * m || data.h.len() != (n + 1) * m || data.g.len() != (n + 1) * m * d {
        return Err(Error::Dimension("simple-equation data does not match the path bundle".into()));
    }
    check_boundary(k, bundle)?;
    let dw = |i: usize, j: usize, c: usize| bundle.dw(j, i, c);
    let feats = |i: usize| features.build(bundle, k, i);
    let rule = SimpleRule { data, bundle, k, m };
    let raw = path_sweep(bundle, &dw, &feats, basis).run(&rule, data.xi.clone(), None)?;
    Ok(finish(*bundle.grid(), 0, m, d, raw, Vec::new(), k))
}

fn finish(grid: TimeGrid, start: usize, m: usize, d: usize, raw: Raw, trace: Vec<f64>, k: Option<BoundaryFn>) -> BdsdeSolution {
    let mut sol = BdsdeSolution {
        grid,
        start,
        m,
        d,
        y: raw.y,
        z: raw.z,
        realized: raw.realized,
        z_raw: raw.z_raw,
        picard_trace: trace,
        norms: NormDiagnostics::default(),
    };
    sol.norms = plain_norms(&sol, k);
    sol
}

/// Settings of the Picard iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub basis: RegressionBasis,
    pub features: Features,
    /// Stop once the weighted norm of successive differences is `<= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub weights: NormWeights,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            basis: RegressionBasis::default(),
            features: Features::default(),
            tol: 1e-12,
            max_iter: 50,
            weights: NormWeights::default(),
        }
    }
}

/// Coefficients frozen at the previous iterate.
struct Frozen<'a, G: Generator> {
    gen: &'a G,
    prev: Option<&'a Raw>,
    bundle: &'a PathBundle,
    k: Option<BoundaryFn<'a>>,
    m: usize,
}

impl<G: Generator> Frozen<'_, G> {
    fn point(&self, i: usize, j: usize) -> (f64, &[f64]) {
        let d = self.bundle.dim();
        match self.prev {
            Some(p) => (p.y[i * self.m + j], &p.z[(i * self.m + j) * d..(i * self.m + j + 1) * d]),
            None => (0.0, &ZEROS[..d]),
        }
    }
    fn kv(&self, i: usize, j: usize) -> f64 {
        self.k.map_or(0.0, |f| f(i, j))
    }
}

const ZEROS: [f64; 64] = [0.0; 64];

impl<G: Generator> StepRule for Frozen<'_, G> {
    fn backward_terms(&self, i: usize, j: usize, _: f64, _: &[f64]) -> Result<f64> {
        let d = self.bundle.dim();
        let t = self.bundle.grid().time(i + 1);
        let (y, z) = self.point(i + 1, j);
        let p = StatePoint { step: i + 1, t, x: &[], k: self.kv(i + 1, j), y, z };
        let mut v = 0.0;
        if self.gen.has_backward_noise() {
            let mut g = [0.0; 64];
            self.gen.g(&p, &mut g[..d])?;
            v += (0..d).map(|c| g[c] * self.bundle.db(j, i, c)).sum::<f64>();
        }
        if self.k.is_some() {
            v += self.gen.h(&p)? * (self.kv(i + 1, j) - self.kv(i, j));
        }
        Ok(v)
    }
    fn driver(&self, i: usize, j: usize, _: f64, _: &[f64]) -> Result<f64> {
        let (y, z) = self.point(i, j);
        let t = self.bundle.grid().time(i);
        self.gen.f(&StatePoint { step: i, t, x: &[], k: self.kv(i, j), y, z })
    }
    fn implicit(&self) -> bool {
        false
    }
}

/// Picard iteration: freeze the previous iterate inside `f`, `g` and `h`,
/// solve the resulting simple equation, repeat. `picard_trace` holds the
/// weighted norm of each successive difference.
pub fn picard_solve<G: Generator>(
    gen: &G,
    xi: &[f64],
    k: Option<BoundaryFn>,
    bundle: &PathBundle,
    opts: &PicardOptions,
) -> Result<BdsdeSolution> {
    let (m, d) = (bundle.scenarios(), bundle.dim());
    if gen.state_dim() != 0 {
        return Err(Error::InvalidInput("the Picard solver takes coefficients without a forward state (n = 0)".into()));
    }
    if gen.noise_dim() != d || d > ZEROS.len() {
        return Err(Error::Dimension(format!("coefficients have d = {}, paths d = {d}", gen.noise_dim())));
    }
    if xi.len() != m {
        return Err(Error::Dimension(format!("{} terminal values for {m} scenarios", xi.len())));
    }
    check_boundary(k, bundle)?;
    let dw = |i: usize, j: usize, c: usize| bundle.dw(j, i, c);
    let feats = |i: usize| opts.features.build(bundle, k, i);
    let sweep = path_sweep(bundle, &dw, &feats, opts.basis);
    let grid = *bundle.grid();
    let w = opts.weights;

    let mut prev: Option<Raw> = None;
    let mut trace = Vec::new();
    let mut rises = 0;
    for _ in 0..opts.max_iter.max(1) {
        let rule = Frozen { gen, prev: prev.as_ref(), bundle, k, m };
        let next = sweep.run(&rule, xi.to_vec(), None)?;
        let (dy, dz): (Vec<f64>, Vec<f64>) = match &prev {
            Some(p) => (
                next.y.iter().zip(&p.y).map(|(a, b)| a - b).collect(),
                next.z.iter().zip(&p.z).map(|(a, b)| a - b).collect(),
            ),
            None => (next.y.clone(), next.z.clone()),
        };
        let norm = weighted_parts(&grid, 0, m, d, &dy, &dz, k, w.mu, w.lambda).total(&w);
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!("Picard difference norm at iteration {}", trace.len() + 1)));
        }
        if trace.last().is_some_and(|&last| norm > last) {
            rises += 1;
        } else {
            rises = 0;
        }
        trace.push(norm);
        prev = Some(next);
        if rises >= 3 {
            return Err(Error::NonContraction { trace });
        }
        if norm <= opts.tol {
            break;
        }
    }
    Ok(finish(grid, 0, m, d, prev.unwrap(), trace, k))
}

/// Settings of the Markovian solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovOptions {
    pub basis: RegressionBasis,
    /// Fixed-point sweeps resolving the implicit driver.
    pub inner_sweeps: usize,
}

impl Default for MarkovOptions {
    fn default() -> Self {
        MarkovOptions { basis: RegressionBasis::default(), inner_sweeps: 2 }
    }
}

struct MarkovRule<'a, G: Generator> {
    gen: &'a G,
    ens: &'a ReflectedEnsemble,
    bundle: &'a PathBundle,
}

impl<G: Generator> StepRule for MarkovRule<'_, G> {
    fn backward_terms(&self, i: usize, j: usize, y_next: f64, z_next: &[f64]) -> Result<f64> {
        let d = self.bundle.dim();
        let (k0, k1) = (self.ens.k(i, j), self.ens.k(i + 1, j));
        let p = StatePoint { step: i + 1, t: self.ens.grid().time(i + 1), x: self.ens.x(i + 1, j), k: k1, y: y_next, z: z_next };
        let mut v = 0.0;
        if self.gen.has_backward_noise() {
            let mut g = [0.0; 64];
            self.gen.g(&p, &mut g[..d])?;
            let s = self.ens.id(j);
            v += (0..d).map(|c| g[c] * self.bundle.db(s, i, c)).sum::<f64>();
        }
        if k1 > k0 {
            v += self.gen.h(&p)? * (k1 - k0);
        }
        Ok(v)
    }
    fn driver(&self, i: usize, j: usize, y: f64, z: &[f64]) -> Result<f64> {
        let p = StatePoint { step: i, t: self.ens.grid().time(i), x: self.ens.x(i, j), k: self.ens.k(i, j), y, z };
        self.gen.f(&p)
    }
    fn implicit(&self) -> bool {
        true
    }
}

/// Markovian solve on an already simulated reflected ensemble. The
/// terminal condition and terminal `Z = sigma^T grad l` come from
/// `terminal`; the driver coefficients from `gen`.
pub fn solve_markov<G: Generator>(
    gen: &G,
    terminal: &CoefficientSet,
    ens: &ReflectedEnsemble,
    bundle: &PathBundle,
    opts: &MarkovOptions,
) -> Result<BdsdeSolution> {
    let (n, d, m) = (ens.dim(), bundle.dim(), ens.len());
    if gen.noise_dim() != d || terminal.d() != d || terminal.n() != n || d > ZEROS.len() {
        return Err(Error::Dimension("coefficients, paths and ensemble disagree".into()));
    }
    if ens.grid() != bundle.grid() {
        return Err(Error::Dimension("ensemble and bundle grids differ".into()));
    }
    let steps = ens.grid().steps();
    let y_t: Vec<f64> = (0..m).map(|j| terminal.l(ens.x(steps, j))).collect();
    let mut z_t = vec![0.0; m * d];
    for j in 0..m {
        terminal.terminal_z(ens.x(steps, j), &mut z_t[j * d..(j + 1) * d]);
    }
    let b_feat = gen.has_backward_noise() && bundle.shared_b().is_none();
    let feats = |i: usize| {
        let dim = n + if b_feat { d } else { 0 };
        let mut out = Vec::with_capacity(m * dim);
        for j in 0..m {
            out.extend_from_slice(ens.x(i, j));
            if b_feat {
                let s = ens.id(j);
                out.extend(bundle.b(s, steps).iter().zip(bundle.b(s, i)).map(|(a, b)| a - b));
            }
        }
        (out, dim)
    };
    let dw = |i: usize, j: usize, c: usize| bundle.dw(ens.id(j), i, c);
    let sweep = Sweep {
        grid: *ens.grid(),
        start: ens.start_step(),
        m,
        d,
        dw: &dw,
        features: &feats,
        basis: opts.basis,
        inner_sweeps: opts.inner_sweeps,
    };
    let raw = sweep.run(&MarkovRule { gen, ens, bundle }, y_t, Some(z_t))?;
    let kf = ens.k_fn();
    Ok(finish(*ens.grid(), ens.start_step(), m, d, raw, Vec::new(), Some(&kf)))
}

/// Simulate the reflected diffusion from `(t, x)` and solve the Markovian
/// equation along it.
pub fn solve_bdsde_markov(
    coeffs: &CoefficientSet,
    domain: &SmoothDomain,
    t: f64,
    x: &[f64],
    bundle: &PathBundle,
    basis: RegressionBasis,
) -> Result<BdsdeSolution> {
    let ens = simulate_reflected(coeffs, domain, t, x, bundle)?;
    solve_markov(coeffs, coeffs, &ens, bundle, &MarkovOptions { basis, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sample_paths;
    use crate::expr::{Expr, Var};

    fn bundle(steps: usize, count: usize) -> PathBundle {
        sample_paths(TimeGrid::new(0.0, 1.0, steps).unwrap(), 1, 11, count).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_after_one_iteration() {
        let b = bundle(10, 500);
        let gen = CoefficientSet::builder(0, 1).build().unwrap();
        let sol = picard_solve(&gen, &vec![0.0; 500], None, &b, &PicardOptions::default()).unwrap();
        assert_eq!(sol.picard_trace(), &[0.0]);
        assert!((0..=10).all(|i| sol.y_slice(i).iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn linear_ode_is_reproduced() {
        let b = bundle(1000, 200);
        let gen = CoefficientSet::builder(0, 1).f(Expr::scale(-1.0, Expr::var(Var::Y))).build().unwrap();
        let sol = picard_solve(&gen, &vec![1.0; 200], None, &b, &PicardOptions::default()).unwrap();
        let err = (0..=1000)
            .map(|i| (sol.y(i, 0) - (-(1.0 - b.grid().time(i))).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn terminal_row_is_exact() {
        let b = bundle(20, 400);
        let xi: Vec<f64> = (0..400).map(|s| b.w(s, 20)[0].sin()).collect();
        let sol = solve_simple(&SimpleData::terminal(xi.clone(), 20, 1), None, &b, Features::default(), RegressionBasis::default()).unwrap();
        assert_eq!(sol.y_slice(20), &xi[..]);
    }
}
