//! Brownian path generation, discrete stochastic integrals and residual
//! checkers for the generalized Itô and Itô–Ventzell formulas.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Args, Expr, Var};
use crate::grid::TimeGrid;
use crate::rng::{Motion, Stream};

/// Sampled paths of the forward motion `W` and the backward motion `B`.
///
/// Storage is scenario-major: `w[(s * (N+1) + i) * d + k]`. `B` is either
/// sampled per scenario or shared by every scenario (one fixed `B` path,
/// as needed for pathwise SPDE evaluation).
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    d: usize,
    seed: u64,
    count: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    shared_b: Option<u64>,
}

fn brownian_path(seed: u64, id: u64, motion: Motion, steps: usize, d: usize, dt: f64, out: &mut [f64]) {
    let mut s = Stream::new(seed, id, motion);
    let sd = dt.sqrt();
    out[..d].iter_mut().for_each(|v| *v = 0.0);
    for i in 0..steps {
        for k in 0..d {
            out[(i + 1) * d + k] = out[i * d + k] + sd * s.normal();
        }
    }
}

/// Independent `W` and `B` per scenario.
pub fn sample_paths(grid: TimeGrid, d: usize, seed: u64, count: usize) -> Result<PathBundle> {
    PathBundle::sample(grid, d, seed, count, None)
}

impl PathBundle {
    /// `shared_b = Some(id)` uses the single `B` path with scenario id `id`
    /// for every scenario.
    pub fn sample(grid: TimeGrid, d: usize, seed: u64, count: usize, shared_b: Option<u64>) -> Result<Self> {
        if count == 0 || d == 0 {
            return Err(Error::InvalidInput("path bundle needs count >= 1 and d >= 1".into()));
        }
        let (n, dt) = (grid.steps(), grid.dt());
        let len = (n + 1) * d;
        let mut w = vec![0.0; count * len];
        w.par_chunks_mut(len)
            .enumerate()
            .for_each(|(s, out)| brownian_path(seed, s as u64, Motion::W, n, d, dt, out));
        let b = match shared_b {
            Some(id) => {
                let mut b = vec![0.0; len];
                brownian_path(seed, id, Motion::B, n, d, dt, &mut b);
                b
            }
            None => {
                let mut b = vec![0.0; count * len];
                b.par_chunks_mut(len)
                    .enumerate()
                    .for_each(|(s, out)| brownian_path(seed, s as u64, Motion::B, n, d, dt, out));
                b
            }
        };
        Ok(PathBundle { grid, d, seed, count, w, b, shared_b })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn scenarios(&self) -> usize {
        self.count
    }
    pub fn shared_b(&self) -> Option<u64> {
        self.shared_b
    }

    fn len(&self) -> usize {
        (self.grid.steps() + 1) * self.d
    }

    fn b_offset(&self, s: usize) -> usize {
        if self.shared_b.is_some() {
            0
        } else {
            s * self.len()
        }
    }

    /// `W` at step `i` of scenario `s` (d components).
    pub fn w(&self, s: usize, i: usize) -> &[f64] {
        let o = s * self.len() + i * self.d;
        &self.w[o..o + self.d]
    }

    pub fn b(&self, s: usize, i: usize) -> &[f64] {
        let o = self.b_offset(s) + i * self.d;
        &self.b[o..o + self.d]
    }

    pub fn dw(&self, s: usize, i: usize, k: usize) -> f64 {
        let o = s * self.len() + i * self.d + k;
        self.w[o + self.d] - self.w[o]
    }

    pub fn db(&self, s: usize, i: usize, k: usize) -> f64 {
        let o = self.b_offset(s) + i * self.d + k;
        self.b[o + self.d] - self.b[o]
    }

    /// Full path of `W`, `(N+1) * d` values.
    pub fn w_path(&self, s: usize) -> &[f64] {
        &self.w[s * self.len()..(s + 1) * self.len()]
    }

    pub fn b_path(&self, s: usize) -> &[f64] {
        let o = self.b_offset(s);
        &self.b[o..o + self.len()]
    }

    /// Scalar path of one coordinate of `W`.
    pub fn w_coord(&self, s: usize, k: usize) -> Vec<f64> {
        (0..=self.grid.steps()).map(|i| self.w(s, i)[k]).collect()
    }

    pub fn b_coord(&self, s: usize, k: usize) -> Vec<f64> {
        (0..=self.grid.steps()).map(|i| self.b(s, i)[k]).collect()
    }

    /// Same paths observed on a grid with `factor` times fewer steps; the
    /// coarse increments are exact sums of the fine ones.
    pub fn coarsen(&self, factor: usize) -> Result<PathBundle> {
        let grid = self.grid.coarsen(factor)?;
        let d = self.d;
        let take = |src: &[f64], paths: usize| -> Vec<f64> {
            let fine = self.len();
            let mut out = Vec::with_capacity(paths * (grid.steps() + 1) * d);
            for s in 0..paths {
                for i in 0..=grid.steps() {
                    let o = s * fine + i * factor * d;
                    out.extend_from_slice(&src[o..o + d]);
                }
            }
            out
        };
        let b_paths = if self.shared_b.is_some() { 1 } else { self.count };
        Ok(PathBundle {
            grid,
            d,
            seed: self.seed,
            count: self.count,
            w: take(&self.w, self.count),
            b: take(&self.b, b_paths),
            shared_b: self.shared_b,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegralConvention {
    ForwardIto,
    BackwardIto,
    Stratonovich,
}

/// Discrete integral of grid values `values` against the scalar path
/// `driver` between grid indices `from <= to`.
pub fn integrate(values: &[f64], driver: &[f64], convention: IntegralConvention, from: usize, to: usize) -> Result<f64> {
    let len = values.len().min(driver.len());
    if to >= len {
        return Err(Error::OutOfRange { index: to, len });
    }
    if from > to {
        return Err(Error::InvalidInput(format!("integration range {from}..{to} is reversed")));
    }
    let mut acc = 0.0;
    for i in from..to {
        let db = driver[i + 1] - driver[i];
        let phi = match convention {
            IntegralConvention::ForwardIto => values[i],
            IntegralConvention::BackwardIto => values[i + 1],
            IntegralConvention::Stratonovich => 0.5 * (values[i] + values[i + 1]),
        };
        acc += phi * db;
    }
    Ok(acc)
}

/// A process component sampled on the grid: `fill(step, scenario, out)`.
pub enum Component {
    Zero,
    Constant(Vec<f64>),
    Fn(Box<dyn Fn(usize, usize, &mut [f64]) + Sync>),
}

impl Component {
    fn fill(&self, step: usize, scenario: usize, out: &mut [f64]) {
        match self {
            Component::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Component::Constant(c) => out.copy_from_slice(c),
            Component::Fn(f) => f(step, scenario, out),
        }
    }

    fn check(&self, len: usize, name: &str) -> Result<()> {
        match self {
            Component::Constant(c) if c.len() != len => Err(Error::Dimension(format!(
                "{name} has {} entries, expected {len}",
                c.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Boundary process along each scenario: `k(step, scenario)`.
pub type BoundaryFn<'a> = &'a (dyn Fn(usize, usize) -> f64 + Sync);

/// `alpha_t = alpha_0 + int beta ds + int theta dk + int gamma <-dB + int delta dW`.
/// `gamma`, `delta` are row-major `n x d`.
pub struct ItoProcess {
    pub alpha0: Vec<f64>,
    pub beta: Component,
    pub theta: Component,
    pub gamma: Component,
    pub delta: Component,
}

/// Deliberate corruptions of the checked identities, used to confirm the
/// checkers have power.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Lemma-type identity: flip the sign of the `int |gamma|^2 ds` term.
    FlipGammaSquare,
    /// Composite formula: flip the sign of the `int tr(D_x H gamma^*) ds` term.
    FlipHCross,
    /// Composite formula: drop the `int tr(D_x H gamma^*) ds` term.
    OmitHCross,
}

/// Residual per time step: RMS and max over scenarios.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    pub rms: Vec<f64>,
    pub max: Vec<f64>,
    pub scenarios: usize,
}

impl ResidualReport {
    fn from_matrix(grid: &TimeGrid, res: &[f64], scenarios: usize) -> Self {
        let n = grid.steps() + 1;
        let mut rms = vec![0.0; n];
        let mut max = vec![0.0f64; n];
        for s in 0..scenarios {
            for i in 0..n {
                let r = res[s * n + i];
                rms[i] += r * r;
                max[i] = max[i].max(r.abs());
            }
        }
        rms.iter_mut().for_each(|v| *v = (*v / scenarios as f64).sqrt());
        ResidualReport { times: grid.times(), rms, max, scenarios }
    }

    /// RMS over all (time, scenario) pairs.
    pub fn overall_rms(&self) -> f64 {
        (self.rms.iter().map(|v| v * v).sum::<f64>() / self.rms.len() as f64).sqrt()
    }

    pub fn overall_max(&self) -> f64 {
        self.max.iter().fold(0.0f64, |a, b| a.max(*b))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `v = m dX` for row-major `n x d` matrix `m` and increments `dx` (len d).
fn mat_vec(m: &[f64], dx: &[f64], n: usize, out: &mut [f64]) {
    let d = dx.len();
    for i in 0..n {
        out[i] = (0..d).map(|k| m[i * d + k] * dx[k]).sum();
    }
}

/// Residual of the discrete `|alpha_t|^2` identity.
pub fn ito_formula_residual(
    process: &ItoProcess,
    k_path: Option<BoundaryFn>,
    bundle: &PathBundle,
    mutation: Mutation,
) -> Result<ResidualReport> {
    let n = process.alpha0.len();
    let d = bundle.dim();
    process.beta.check(n, "beta")?;
    process.theta.check(n, "theta")?;
    process.gamma.check(n * d, "gamma")?;
    process.delta.check(n * d, "delta")?;
    let grid = *bundle.grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    let gamma_sign = if mutation == Mutation::FlipGammaSquare { -1.0 } else { 1.0 };
    let mut res = vec![0.0; bundle.scenarios() * (steps + 1)];
    res.par_chunks_mut(steps + 1).enumerate().for_each(|(s, out)| {
        let mut a = process.alpha0.clone();
        let mut next = vec![0.0; n];
        let (mut beta, mut theta, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut gamma, mut delta) = (vec![0.0; n * d], vec![0.0; n * d]);
        let (mut db, mut dw) = (vec![0.0; d], vec![0.0; d]);
        let mut rhs = dot(&a, &a);
        out[0] = 0.0;
        for i in 0..steps {
            process.beta.fill(i, s, &mut beta);
            process.theta.fill(i, s, &mut theta);
            process.delta.fill(i, s, &mut delta);
            process.gamma.fill(i + 1, s, &mut gamma);
            let dk = k_path.map_or(0.0, |k| k(i + 1, s) - k(i, s));
            for k in 0..d {
                db[k] = bundle.db(s, i, k);
                dw[k] = bundle.dw(s, i, k);
            }
            let mut inc = 0.0;
            for j in 0..n {
                next[j] = a[j] + beta[j] * dt + theta[j] * dk;
            }
            mat_vec(&gamma, &db, n, &mut tmp);
            for j in 0..n {
                next[j] += tmp[j];
            }
            let gamma_db = tmp.clone();
            mat_vec(&delta, &dw, n, &mut tmp);
            for j in 0..n {
                next[j] += tmp[j];
            }
            inc += 2.0 * dot(&a, &beta) * dt + 2.0 * dot(&a, &theta) * dk;
            inc += 2.0 * dot(&next, &gamma_db) + 2.0 * dot(&a, &tmp);
            inc -= gamma_sign * dot(&gamma, &gamma) * dt;
            inc += dot(&delta, &delta) * dt;
            rhs += inc;
            a.copy_from_slice(&next);
            out[i + 1] = dot(&a, &a) - rhs;
        }
    });
    Ok(ResidualReport::from_matrix(&grid, &res, bundle.scenarios()))
}

/// `time(t) * space(x)`.
#[derive(Clone, Debug)]
pub struct SeparableTerm {
    pub time: Expr,
    pub space: Expr,
}

impl SeparableTerm {
    pub fn new(time: Expr, space: Expr) -> Self {
        SeparableTerm { time, space }
    }
}

/// Random field `M(t,x) = M0(x) + int G ds + int <H, <-dB> + int <K, dW>`
/// with every component a finite sum of separable terms.
#[derive(Clone, Debug)]
pub struct FieldSpec {
    pub n: usize,
    pub m0: Expr,
    pub g: Vec<SeparableTerm>,
    /// One list of terms per Brownian coordinate.
    pub h: Vec<Vec<SeparableTerm>>,
    pub k: Vec<Vec<SeparableTerm>>,
}

/// Value, gradient and Hessian of a spatial function.
struct Jet2 {
    value: Expr,
    grad: Vec<Expr>,
    hess: Vec<Expr>,
}

impl Jet2 {
    fn new(e: &Expr, n: usize) -> Self {
        let grad: Vec<Expr> = (0..n).map(|i| e.partial(Var::X(i))).collect();
        let hess = (0..n * n).map(|ij| grad[ij / n].partial(Var::X(ij % n))).collect();
        Jet2 { value: e.clone(), grad, hess }
    }

    fn eval(&self, x: &[f64], scale: f64, v: &mut f64, g: &mut [f64], h: &mut [f64]) {
        let a = Args::new(0.0, x, 0.0, &[]);
        *v += scale * self.value.eval(&a);
        for (o, e) in g.iter_mut().zip(&self.grad) {
            *o += scale * e.eval(&a);
        }
        for (o, e) in h.iter_mut().zip(&self.hess) {
            *o += scale * e.eval(&a);
        }
    }
}

struct PreparedField {
    m0: Jet2,
    g: Vec<(Expr, Jet2)>,
    h: Vec<Vec<(Expr, Jet2)>>,
    k: Vec<Vec<(Expr, Jet2)>>,
}

/// Per-scenario running state of `M(t_i, .)`: the stochastic time factors.
struct FieldState {
    g: Vec<f64>,
    h: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
}

impl PreparedField {
    fn new(f: &FieldSpec) -> Self {
        let prep = |v: &[SeparableTerm]| v.iter().map(|t| (t.time.clone(), Jet2::new(&t.space, f.n))).collect::<Vec<_>>();
        PreparedField {
            m0: Jet2::new(&f.m0, f.n),
            g: prep(&f.g),
            h: f.h.iter().map(|v| prep(v)).collect(),
            k: f.k.iter().map(|v| prep(v)).collect(),
        }
    }

    fn state(&self) -> FieldState {
        FieldState {
            g: vec![0.0; self.g.len()],
            h: self.h.iter().map(|v| vec![0.0; v.len()]).collect(),
            k: self.k.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    fn time(e: &Expr, t: f64) -> f64 {
        e.eval(&Args::new(t, &[], 0.0, &[]))
    }

    /// `M(t, x)` with its spatial gradient and Hessian.
    fn m(&self, st: &FieldState, x: &[f64], v: &mut f64, g: &mut [f64], h: &mut [f64]) {
        *v = 0.0;
        g.iter_mut().for_each(|a| *a = 0.0);
        h.iter_mut().for_each(|a| *a = 0.0);
        self.m0.eval(x, 1.0, v, g, h);
        for ((_, j), a) in self.g.iter().zip(&st.g) {
            j.eval(x, *a, v, g, h);
        }
        for (terms, acc) in self.h.iter().zip(&st.h).chain(self.k.iter().zip(&st.k)) {
            for ((_, j), a) in terms.iter().zip(acc) {
                j.eval(x, *a, v, g, h);
            }
        }
    }

    /// Component field `sum_terms time(t) space(x)` with its gradient.
    fn component(terms: &[(Expr, Jet2)], t: f64, x: &[f64], v: &mut f64, g: &mut [f64]) {
        *v = 0.0;
        g.iter_mut().for_each(|a| *a = 0.0);
        for (te, j) in terms {
            let c = Self::time(te, t);
            let a = Args::new(0.0, x, 0.0, &[]);
            *v += c * j.value.eval(&a);
            for (o, e) in g.iter_mut().zip(&j.grad) {
                *o += c * e.eval(&a);
            }
        }
    }
}

/// `alpha_t = alpha_0 + int beta dk + int gamma <-dB + int delta dW`.
pub struct VentzellProcess {
    pub alpha0: Vec<f64>,
    pub beta: Component,
    pub gamma: Component,
    pub delta: Component,
}

/// Residual of the discrete composite (Itô–Ventzell) formula for
/// `M(t, alpha_t)`.
pub fn ito_ventzell_residual(
    field: &FieldSpec,
    process: &VentzellProcess,
    k_path: Option<BoundaryFn>,
    bundle: &PathBundle,
    mutation: Mutation,
) -> Result<ResidualReport> {
    let n = field.n;
    let d = bundle.dim();
    if process.alpha0.len() != n {
        return Err(Error::Dimension(format!("alpha0 has {} entries, field has n = {n}", process.alpha0.len())));
    }
    if field.h.len() != d || field.k.len() != d {
        return Err(Error::Dimension(format!("H and K need {d} components")));
    }
    process.beta.check(n, "beta")?;
    process.gamma.check(n * d, "gamma")?;
    process.delta.check(n * d, "delta")?;
    let pf = PreparedField::new(field);
    let grid = *bundle.grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    let h_sign = match mutation {
        Mutation::FlipHCross => -1.0,
        Mutation::OmitHCross => 0.0,
        _ => 1.0,
    };
    let mut res = vec![0.0; bundle.scenarios() * (steps + 1)];
    let failed = std::sync::atomic::AtomicBool::new(false);
    res.par_chunks_mut(steps + 1).enumerate().for_each(|(s, out)| {
        let mut st = pf.state();
        let mut a = process.alpha0.clone();
        let mut next = vec![0.0; n];
        let (mut beta, mut gamma, mut delta) = (vec![0.0; n], vec![0.0; n * d], vec![0.0; n * d]);
        let (mut db, mut dw) = (vec![0.0; d], vec![0.0; d]);
        let (mut m, mut gm, mut hm) = (0.0, vec![0.0; n], vec![0.0; n * n]);
        let (mut m1, mut gm1, mut hm1) = (0.0, vec![0.0; n], vec![0.0; n * n]);
        let (mut cv, mut cg) = (0.0, vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        pf.m(&st, &a, &mut m, &mut gm, &mut hm);
        let mut rhs = m;
        out[0] = 0.0;
        for i in 0..steps {
            let (t0, t1) = (grid.time(i), grid.time(i + 1));
            process.beta.fill(i, s, &mut beta);
            process.delta.fill(i, s, &mut delta);
            process.gamma.fill(i + 1, s, &mut gamma);
            let dk = k_path.map_or(0.0, |k| k(i + 1, s) - k(i, s));
            for k in 0..d {
                db[k] = bundle.db(s, i, k);
                dw[k] = bundle.dw(s, i, k);
            }
            // left-point quantities at (t_i, alpha_i); gm, hm hold D M(t_i, alpha_i)
            let mut inc = 0.0;
            PreparedField::component(&pf.g, t0, &a, &mut cv, &mut cg);
            inc += cv * dt;
            for k in 0..d {
                PreparedField::component(&pf.k[k], t0, &a, &mut cv, &mut cg);
                inc += cv * dw[k];
                // tr(D_x K delta^*): column k of delta against grad K_k
                inc += (0..n).map(|j| cg[j] * delta[j * d + k]).sum::<f64>() * dt;
            }
            inc += dot(&gm, &beta) * dk;
            mat_vec(&delta, &dw, n, &mut tmp);
            inc += dot(&gm, &tmp);
            inc += 0.5 * trace_quad(&hm, &delta, n, d) * dt;

            // advance alpha and the field to t_{i+1}
            for j in 0..n {
                next[j] = a[j] + beta[j] * dk + tmp[j];
            }
            mat_vec(&gamma, &db, n, &mut tmp);
            for j in 0..n {
                next[j] += tmp[j];
            }
            for (acc, (te, _)) in st.g.iter_mut().zip(&pf.g) {
                *acc += PreparedField::time(te, t0) * dt;
            }
            for k in 0..d {
                for (acc, (te, _)) in st.h[k].iter_mut().zip(&pf.h[k]) {
                    *acc += PreparedField::time(te, t1) * db[k];
                }
                for (acc, (te, _)) in st.k[k].iter_mut().zip(&pf.k[k]) {
                    *acc += PreparedField::time(te, t0) * dw[k];
                }
            }
            pf.m(&st, &next, &mut m1, &mut gm1, &mut hm1);

            // right-point (backward) quantities at (t_{i+1}, alpha_{i+1})
            for k in 0..d {
                PreparedField::component(&pf.h[k], t1, &next, &mut cv, &mut cg);
                inc += cv * db[k];
                inc -= h_sign * (0..n).map(|j| cg[j] * gamma[j * d + k]).sum::<f64>() * dt;
            }
            inc += dot(&gm1, &tmp);
            inc -= 0.5 * trace_quad(&hm1, &gamma, n, d) * dt;

            rhs += inc;
            a.copy_from_slice(&next);
            m = m1;
            gm.copy_from_slice(&gm1);
            hm.copy_from_slice(&hm1);
            out[i + 1] = m - rhs;
            if !out[i + 1].is_finite() {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
            }
        }
    });
    if failed.into_inner() {
        return Err(Error::NonFinite("field evaluation".into()));
    }
    Ok(ResidualReport::from_matrix(&grid, &res, bundle.scenarios()))
}

/// `tr(H s s^*)` for symmetric `n x n` H and row-major `n x d` s.
fn trace_quad(h: &[f64], s: &[f64], n: usize, d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let ss: f64 = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            acc += h[i * n + j] * ss;
        }
    }
    acc
}

/// One row of a residual refinement table.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementRow {
    pub dt: f64,
    pub rms_residual: f64,
    pub max_residual: f64,
    pub scenarios: usize,
}

/// Run a residual checker on `fine` and on coarsenings of it.
/// `factors` are coarsening factors (1 = the fine grid itself).
pub fn refinement_study(
    fine: &PathBundle,
    factors: &[usize],
    check: impl Fn(&PathBundle) -> Result<ResidualReport>,
) -> Result<Vec<RefinementRow>> {
    let mut rows = Vec::new();
    for &f in factors {
        let b = if f == 1 { fine.clone() } else { fine.coarsen(f)? };
        let r = check(&b)?;
        rows.push(RefinementRow {
            dt: b.grid().dt(),
            rms_residual: r.overall_rms(),
            max_residual: r.overall_max(),
            scenarios: r.scenarios,
        });
    }
    Ok(rows)
}

pub fn write_refinement_csv(rows: &[RefinementRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dt", "rms_residual", "max_residual", "scenarios"])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.dt),
            format!("{:.10e}", r.rms_residual),
            format!("{:.10e}", r.max_residual),
            r.scenarios.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Built-in test cases for the residual checkers.
pub mod cases {
    use super::*;

    /// `alpha = W` (delta = I, others zero), `n = d`.
    pub fn brownian(d: usize) -> ItoProcess {
        let mut delta = vec![0.0; d * d];
        (0..d).for_each(|i| delta[i * d + i] = 1.0);
        ItoProcess {
            alpha0: vec![0.0; d],
            beta: Component::Zero,
            theta: Component::Zero,
            gamma: Component::Zero,
            delta: Component::Constant(delta),
        }
    }

    /// `gamma = c`, others zero (`n = d = 1`).
    pub fn backward_constant(c: f64) -> ItoProcess {
        ItoProcess {
            alpha0: vec![0.0],
            beta: Component::Zero,
            theta: Component::Zero,
            gamma: Component::Constant(vec![c]),
            delta: Component::Zero,
        }
    }

    /// Mixed case with drift, boundary push, and both noises (`n = d = 1`).
    pub fn mixed() -> ItoProcess {
        ItoProcess {
            alpha0: vec![0.5],
            beta: Component::Constant(vec![0.3]),
            theta: Component::Constant(vec![1.0]),
            gamma: Component::Constant(vec![0.7]),
            delta: Component::Constant(vec![0.4]),
        }
    }

    /// `M(t,x) = (1+t) x^2` written as `M0 = x^2`, `G = x^2`; alpha = W.
    pub fn quadratic_field() -> (FieldSpec, VentzellProcess) {
        let x2 = Expr::product(vec![Expr::var(Var::X(0)), Expr::var(Var::X(0))]);
        let field = FieldSpec {
            n: 1,
            m0: x2.clone(),
            g: vec![SeparableTerm::new(Expr::constant(1.0), x2)],
            h: vec![vec![]],
            k: vec![vec![]],
        };
        let process = VentzellProcess {
            alpha0: vec![0.0],
            beta: Component::Zero,
            gamma: Component::Zero,
            delta: Component::Constant(vec![1.0]),
        };
        (field, process)
    }

    /// `H(s,x) = x`, `gamma = 1`: exercises the `tr(D_x H gamma^*)` term.
    pub fn backward_linear_field() -> (FieldSpec, VentzellProcess) {
        let field = FieldSpec {
            n: 1,
            m0: Expr::zero(),
            g: vec![],
            h: vec![vec![SeparableTerm::new(Expr::constant(1.0), Expr::var(Var::X(0)))]],
            k: vec![vec![]],
        };
        let process = VentzellProcess {
            alpha0: vec![0.0],
            beta: Component::Zero,
            gamma: Component::Constant(vec![1.0]),
            delta: Component::Zero,
        };
        (field, process)
    }

    /// Smooth field with all four components and both noises.
    pub fn smooth_field() -> (FieldSpec, VentzellProcess) {
        let x = Expr::var(Var::X(0));
        let field = FieldSpec {
            n: 1,
            m0: Expr::sin(x.clone()),
            g: vec![SeparableTerm::new(Expr::constant(0.5), Expr::cos(x.clone()))],
            h: vec![vec![SeparableTerm::new(
                Expr::cos(Expr::var(Var::T)),
                Expr::scale(0.3, Expr::sin(Expr::scale(2.0, x.clone()))),
            )]],
            k: vec![vec![SeparableTerm::new(Expr::constant(0.4), Expr::product(vec![x.clone(), x]))]],
        };
        let process = VentzellProcess {
            alpha0: vec![0.2],
            beta: Component::Zero,
            gamma: Component::Constant(vec![0.6]),
            delta: Component::Constant(vec![0.8]),
        };
        (field, process)
    }
}

/// Write a per-time residual report.
pub fn write_residual_csv(report: &ResidualReport, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,rms_residual,max_residual")?;
    for i in 0..report.times.len() {
        writeln!(f, "{:e},{:.10e},{:.10e}", report.times[i], report.rms[i], report.max[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(steps: usize, count: usize) -> PathBundle {
        sample_paths(TimeGrid::new(0.0, 1.0, steps).unwrap(), 1, 11, count).unwrap()
    }

    #[test]
    fn zero_process_has_zero_residual() {
        let b = bundle(50, 20);
        let p = ItoProcess {
            alpha0: vec![0.0],
            beta: Component::Zero,
            theta: Component::Zero,
            gamma: Component::Zero,
            delta: Component::Zero,
        };
        let r = ito_formula_residual(&p, None, &b, Mutation::None).unwrap();
        assert_eq!(r.overall_max(), 0.0);
    }

    #[test]
    fn constant_backward_residual_is_quadratic_variation_error() {
        // residual_t = c^2 (sum dB^2 - t) exactly
        let b = bundle(40, 5);
        let c = 0.7;
        let r = ito_formula_residual(&cases::backward_constant(c), None, &b, Mutation::None).unwrap();
        let bs = b.b_coord(0, 0);
        let qv: f64 = bs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        // max over scenarios bounds scenario 0
        assert!(r.max[40] + 1e-12 >= (c * c * (qv - 1.0)).abs());
    }

    #[test]
    fn coarsening_preserves_endpoints() {
        let b = bundle(100, 3);
        let c = b.coarsen(10).unwrap();
        assert_eq!(c.w(2, 10), b.w(2, 100));
        assert_eq!(c.b(1, 3), b.b(1, 30));
    }
}
