//! Pathwise stochastic flows: `eta(t, x, y)` solves
//! `eta = y + int_t^T <g(s, x, eta), o dB_s>` backward from `T` along one
//! fixed `B` path, and `eps` is its inverse in `y`.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::PathBundle;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::expr::{Args, Expr};
use crate::grid::TimeGrid;
use crate::rng::{Motion, Stream};

const MAX_D: usize = 16;

/// Value and first/second derivatives of a scalar field in `(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Jet {
    pub value: f64,
    pub dx: Vec<f64>,
    pub dy: f64,
    /// Row-major `n x n`.
    pub dxx: Vec<f64>,
    pub dxy: Vec<f64>,
    pub dyy: f64,
}

impl Jet {
    /// The identity map `(x, y) -> y`.
    pub fn identity(n: usize, y: f64) -> Jet {
        Jet { value: y, dx: vec![0.0; n], dy: 1.0, dxx: vec![0.0; n * n], dxy: vec![0.0; n], dyy: 0.0 }
    }
}

/// Central-difference jet of `f` at `(x, y)` with steps
/// `fd_step * (1 + |.|)` per coordinate.
pub fn fd_jet(x: &[f64], y: f64, fd_step: f64, mut f: impl FnMut(&[f64], f64) -> Result<f64>) -> Result<Jet> {
    let n = x.len();
    let hy = fd_step * (1.0 + y.abs());
    let hx: Vec<f64> = x.iter().map(|v| fd_step * (1.0 + v.abs())).collect();
    let mut p = x.to_vec();
    let f0 = f(x, y)?;
    let (yp, ym) = (f(x, y + hy)?, f(x, y - hy)?);
    let mut jet = Jet {
        value: f0,
        dx: vec![0.0; n],
        dy: (yp - ym) / (2.0 * hy),
        dxx: vec![0.0; n * n],
        dxy: vec![0.0; n],
        dyy: (yp - 2.0 * f0 + ym) / (hy * hy),
    };
    for k in 0..n {
        p[k] = x[k] + hx[k];
        let (xp, xpyp, xpym) = (f(&p, y)?, f(&p, y + hy)?, f(&p, y - hy)?);
        p[k] = x[k] - hx[k];
        let (xm, xmyp, xmym) = (f(&p, y)?, f(&p, y + hy)?, f(&p, y - hy)?);
        p[k] = x[k];
        jet.dx[k] = (xp - xm) / (2.0 * hx[k]);
        jet.dxx[k * n + k] = (xp - 2.0 * f0 + xm) / (hx[k] * hx[k]);
        jet.dxy[k] = (xpyp - xpym - xmyp + xmym) / (4.0 * hx[k] * hy);
        for l in 0..k {
            let mut corner = |sk: f64, sl: f64| {
                let mut q = x.to_vec();
                q[k] += sk * hx[k];
                q[l] += sl * hx[l];
                f(&q, y)
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hx[k] * hx[l]);
            jet.dxx[k * n + l] = v;
            jet.dxx[l * n + k] = v;
        }
    }
    Ok(jet)
}

/// Anything that can evaluate the flow `eta`, its jet and its inverse at
/// grid times.
pub trait FlowEval: Sync {
    fn state_dim(&self) -> usize;
    fn grid(&self) -> &TimeGrid;
    fn eta_jet(&self, i: usize, x: &[f64], y: f64) -> Result<Jet>;
    fn eps(&self, i: usize, x: &[f64], y: f64) -> Result<f64>;
}

/// The flow along one `B` path.
#[derive(Clone, Debug)]
pub struct FlowField {
    g: Vec<Expr>,
    dg: Vec<Expr>,
    n: usize,
    d: usize,
    grid: TimeGrid,
    b: Vec<f64>,
    fd_step: f64,
    guard: f64,
    x_dependent: bool,
}

impl FlowField {
    /// Flow for scenario `scenario` of the bundle's `B`.
    pub fn new(coeffs: &CoefficientSet, bundle: &PathBundle, scenario: usize) -> Result<Self> {
        if scenario >= bundle.scenarios() {
            return Err(Error::OutOfRange { index: scenario, len: bundle.scenarios() });
        }
        FlowField::from_path(coeffs, *bundle.grid(), bundle.b_path(scenario).to_vec())
    }

    /// `b_path` holds `(N+1) * d` values of `B` on `grid`.
    pub fn from_path(coeffs: &CoefficientSet, grid: TimeGrid, b_path: Vec<f64>) -> Result<Self> {
        let d = coeffs.d();
        if b_path.len() != (grid.steps() + 1) * d {
            return Err(Error::Dimension(format!("B path has {} values, expected {}", b_path.len(), (grid.steps() + 1) * d)));
        }
        if d > MAX_D {
            return Err(Error::Dimension(format!("flows support d <= {MAX_D}")));
        }
        if coeffs.g_expr().iter().any(Expr::depends_on_z) {
            return Err(Error::InvalidInput("flows need g independent of z".into()));
        }
        Ok(FlowField {
            g: coeffs.g_expr().to_vec(),
            dg: coeffs.dg_dy_expr().to_vec(),
            n: coeffs.n(),
            d,
            grid,
            b: b_path,
            fd_step: 1e-4,
            guard: 1e12,
            x_dependent: coeffs.g_expr().iter().any(Expr::depends_on_x),
        })
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    /// Whether `g` reads the forward state.
    pub fn x_dependent(&self) -> bool {
        self.x_dependent
    }

    pub fn is_trivial(&self) -> bool {
        self.g.iter().all(Expr::is_zero)
    }

    /// `B_T - B_{t_i}`.
    pub fn b_tail(&self, i: usize) -> Vec<f64> {
        let n = self.grid.steps();
        (0..self.d).map(|k| self.b[n * self.d + k] - self.b[i * self.d + k]).collect()
    }

    fn g_dot(&self, t: f64, x: &[f64], y: f64, db: &[f64]) -> (f64, f64) {
        let a = Args::new(t, x, y, &[]);
        let mut v = 0.0;
        let mut dv = 0.0;
        for k in 0..self.d {
            if db[k] != 0.0 {
                v += self.g[k].eval(&a) * db[k];
                dv += self.dg[k].eval(&a) * db[k];
            }
        }
        (v, dv)
    }

    /// One Heun step from `t1` back to `t0` with increment `db`;
    /// returns the new value and its derivative in the old one.
    fn heun(&self, t1: f64, t0: f64, x: &[f64], v: f64, db: &[f64]) -> (f64, f64) {
        let (g1, gy1) = self.g_dot(t1, x, v, db);
        let vs = v + g1;
        let (g2, gy2) = self.g_dot(t0, x, vs, db);
        (v + 0.5 * (g1 + g2), 1.0 + 0.5 * (gy1 + gy2 * (1.0 + gy1)))
    }

    /// Backward step over `[t_j, t_{j+1}]`, substepping when `|dB| Lip(g)`
    /// exceeds one half.
    fn step(&self, j: usize, x: &[f64], v: f64) -> (f64, f64) {
        let d = self.d;
        let mut db = [0.0; MAX_D];
        for k in 0..d {
            db[k] = self.b[(j + 1) * d + k] - self.b[j * d + k];
        }
        let (t0, t1) = (self.grid.time(j), self.grid.time(j + 1));
        let a = Args::new(t1, x, v, &[]);
        let lip = self.dg.iter().map(|e| e.eval(&a).powi(2)).sum::<f64>().sqrt();
        let size = db[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        let sub = ((size * lip / 0.5).ceil() as usize).clamp(1, 1000);
        if sub == 1 {
            return self.heun(t1, t0, x, v, &db[..d]);
        }
        let mut part = [0.0; MAX_D];
        for k in 0..d {
            part[k] = db[k] / sub as f64;
        }
        let (mut v, mut dv) = (v, 1.0);
        for s in (0..sub).rev() {
            let ta = t0 + (t1 - t0) * s as f64 / sub as f64;
            let tb = t0 + (t1 - t0) * (s + 1) as f64 / sub as f64;
            let (nv, nd) = self.heun(tb, ta, x, v, &part[..d]);
            v = nv;
            dv *= nd;
        }
        (v, dv)
    }

    /// `(eta(t_i, x, y), D_y eta(t_i, x, y))`.
    pub fn eta_with_dy(&self, i: usize, x: &[f64], y: f64) -> Result<(f64, f64)> {
        let n = self.grid.steps();
        if i > n {
            return Err(Error::OutOfRange { index: i, len: n + 1 });
        }
        let (mut v, mut dv) = (y, 1.0);
        for j in (i..n).rev() {
            let (nv, nd) = self.step(j, x, v);
            v = nv;
            dv *= nd;
            if !(v.abs() <= self.guard) {
                return Err(Error::FlowDivergence { step: j });
            }
        }
        Ok((v, dv))
    }

    pub fn eta(&self, i: usize, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.eta_with_dy(i, x, y)?.0)
    }

    /// `eta(t_i, x, y)` for every `i`, from one backward pass.
    pub fn trajectory(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        let mut out = vec![0.0; n + 1];
        out[n] = y;
        for j in (0..n).rev() {
            let v = self.step(j, x, out[j + 1]).0;
            if !(v.abs() <= self.guard) {
                return Err(Error::FlowDivergence { step: j });
            }
            out[j] = v;
        }
        Ok(out)
    }

    /// `eps(t_i, x, y)`: the `u` with `eta(t_i, x, u) = y`.
    pub fn eps(&self, i: usize, x: &[f64], y: f64) -> Result<f64> {
        self.eps_from(i, x, y, y)
    }

    /// Inverse with a starting guess; Newton first, bracketing fallback.
    pub fn eps_from(&self, i: usize, x: &[f64], y: f64, guess: f64) -> Result<f64> {
        let tight = 1e-13 * (1.0 + y.abs());
        let accept = 1e-10 * (1.0 + y.abs());
        let mut u = guess;
        let mut best = (f64::INFINITY, u);
        for _ in 0..8 {
            let (v, dv) = self.eta_with_dy(i, x, u)?;
            let r = v - y;
            if r.abs() < best.0 {
                best = (r.abs(), u);
            } else {
                break;
            }
            if r.abs() <= tight {
                return Ok(u);
            }
            if !(dv > 0.0) {
                return Err(Error::NonMonotoneFlow { value: dv });
            }
            let next = u - r / dv;
            if next == u {
                break;
            }
            u = next;
        }
        if best.0 <= accept {
            return Ok(best.1);
        }
        self.eps_bracketed(i, x, y, best.1)
    }

    fn eps_bracketed(&self, i: usize, x: &[f64], y: f64, guess: f64) -> Result<f64> {
        let f = |u: f64| self.eta_with_dy(i, x, u).map(|(v, dv)| (v - y, dv));
        let (mut lo, mut hi) = (y - 1.0, y + 1.0);
        let mut width = 1.0;
        let mut expansions = 0;
        while f(lo)?.0 > 0.0 {
            width *= 2.0;
            lo -= width;
            expansions += 1;
            if expansions > 60 {
                return Err(Error::BracketNotFound { y });
            }
        }
        width = 1.0;
        while f(hi)?.0 < 0.0 {
            width *= 2.0;
            hi += width;
            expansions += 1;
            if expansions > 120 {
                return Err(Error::BracketNotFound { y });
            }
        }
        let mut u = guess.clamp(lo, hi);
        let mut best = (f64::INFINITY, u);
        for _ in 0..200 {
            let (r, dv) = f(u)?;
            if r.abs() < best.0 {
                best = (r.abs(), u);
            }
            if r.abs() <= 1e-13 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + u.abs()) {
                break;
            }
            if r > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - r / dv;
            u = if dv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        if best.0 <= 1e-10 * (1.0 + y.abs()) {
            Ok(best.1)
        } else {
            Err(Error::BracketNotFound { y })
        }
    }

    pub fn eta_jet(&self, i: usize, x: &[f64], y: f64) -> Result<Jet> {
        if self.is_trivial() {
            return Ok(Jet::identity(self.n, y));
        }
        fd_jet(x, y, self.fd_step, |p, v| self.eta(i, p, v))
    }

    /// Jet of `eps` at `(x, eta(t_i, x, u))` given the `eta` jet at
    /// `(x, u)`: stencil inverses start from first-order guesses.
    pub fn eps_jet_at(&self, i: usize, x: &[f64], u: f64, eta: &Jet) -> Result<Jet> {
        if self.is_trivial() {
            return Ok(Jet::identity(self.n, u));
        }
        let y = eta.value;
        let mut first = true;
        fd_jet(x, y, self.fd_step, |p, v| {
            if first {
                first = false;
                return Ok(u);
            }
            let shift: f64 = p.iter().zip(x).zip(&eta.dx).map(|((a, b), g)| (a - b) * g).sum();
            let guess = u + (v - y - shift) / eta.dy;
            self.eps_from(i, p, v, guess)
        })
    }

    pub fn eps_jet(&self, i: usize, x: &[f64], y: f64) -> Result<Jet> {
        let u = self.eps(i, x, y)?;
        let eta = self.eta_jet(i, x, u)?;
        let mut jet = self.eps_jet_at(i, x, u, &eta)?;
        jet.value = u;
        Ok(jet)
    }
}

impl FlowEval for FlowField {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn eta_jet(&self, i: usize, x: &[f64], y: f64) -> Result<Jet> {
        FlowField::eta_jet(self, i, x, y)
    }
    fn eps(&self, i: usize, x: &[f64], y: f64) -> Result<f64> {
        FlowField::eps(self, i, x, y)
    }
}

/// Worst violations of the inverse-function identities, over samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `|eps(eta(y)) - y| / (1 + |y|)`.
    pub inverse: f64,
    /// `D_x eps + D_y eps D_x eta = 0`.
    pub first_x: f64,
    /// `D_y eps D_y eta = 1`.
    pub first_y: f64,
    /// Second order in `(x, x)`.
    pub second_xx: f64,
    /// Second order in `(x, y)`.
    pub second_xy: f64,
    /// `D_yy eps (D_y eta)^2 + D_y eps D_yy eta = 0`.
    pub second_yy: f64,
    pub samples: usize,
}

impl IdentityReport {
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("inverse", self.inverse),
            ("Dx_eps + Dy_eps Dx_eta", self.first_x),
            ("Dy_eps Dy_eta - 1", self.first_y),
            ("second order xx", self.second_xx),
            ("second order xy", self.second_xy),
            ("second order yy", self.second_yy),
        ]
    }

    pub fn worst_derivative(&self) -> f64 {
        self.rows()[1..].iter().map(|r| r.1).fold(0.0, f64::max)
    }

    fn merge(&mut self, o: &IdentityReport) {
        self.inverse = self.inverse.max(o.inverse);
        self.first_x = self.first_x.max(o.first_x);
        self.first_y = self.first_y.max(o.first_y);
        self.second_xx = self.second_xx.max(o.second_xx);
        self.second_xy = self.second_xy.max(o.second_xy);
        self.second_yy = self.second_yy.max(o.second_yy);
        self.samples += o.samples;
    }
}

/// A sample `(step, x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub step: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Uniform samples over grid steps and a box `[-half_width, half_width]`
/// in every coordinate.
pub fn flow_samples(grid: &TimeGrid, n: usize, half_width: f64, count: usize, seed: u64) -> Vec<FlowSample> {
    let mut rng = Stream::new(seed, 7, Motion::Aux);
    (0..count)
        .map(|_| {
            let step = ((rng.uniform() * grid.steps() as f64) as usize).min(grid.steps());
            let x = (0..n).map(|_| rng.uniform_in(-half_width, half_width)).collect();
            FlowSample { step, x, y: rng.uniform_in(-half_width, half_width) }
        })
        .collect()
}

/// Evaluate the inverse identity and all five derivative identities.
pub fn flow_derivative_identities(flow: &FlowField, samples: &[FlowSample]) -> Result<IdentityReport> {
    let parts: Vec<IdentityReport> = samples
        .par_iter()
        .map(|s| {
            let n = s.x.len();
            let e = flow.eta_jet(s.step, &s.x, s.y)?;
            let back = flow.eps(s.step, &s.x, e.value)?;
            let r = flow.eps_jet_at(s.step, &s.x, s.y, &e)?;
            let mut rep = IdentityReport { samples: 1, ..Default::default() };
            rep.inverse = (back - s.y).abs() / (1.0 + s.y.abs());
            rep.first_y = (r.dy * e.dy - 1.0).abs();
            rep.second_yy = (r.dyy * e.dy * e.dy + r.dy * e.dyy).abs();
            for k in 0..n {
                rep.first_x = rep.first_x.max((r.dx[k] + r.dy * e.dx[k]).abs());
                rep.second_xy =
                    rep.second_xy.max((r.dxy[k] * e.dy + r.dyy * e.dx[k] * e.dy + r.dy * e.dxy[k]).abs());
                for l in 0..n {
                    let v = r.dxx[k * n + l]
                        + r.dxy[k] * e.dx[l]
                        + r.dxy[l] * e.dx[k]
                        + r.dyy * e.dx[k] * e.dx[l]
                        + r.dy * e.dxx[k * n + l];
                    rep.second_xx = rep.second_xx.max(v.abs());
                }
            }
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    let mut out = IdentityReport::default();
    for p in &parts {
        out.merge(p);
    }
    Ok(out)
}

/// Smallest constants fitting `|zeta| <= |y| + C|B_T - B_t|` and
/// `|D zeta| <= C exp(C |B_T - B_t|)` for `zeta` in `{eta, eps}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub value_constant: f64,
    pub derivative_constant: f64,
    pub samples: usize,
    /// Both constants finite.
    pub pass: bool,
}

/// Smallest `C >= 0` with `C exp(C a) >= v`.
fn exp_constant(v: f64, a: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, v.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * (mid * a).exp() >= v {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn flow_growth_check(flow: &FlowField, samples: &[FlowSample]) -> Result<GrowthReport> {
    let per: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let a = flow.b_tail(s.step).iter().map(|v| v * v).sum::<f64>().sqrt();
            let e = flow.eta_jet(s.step, &s.x, s.y)?;
            let r = flow.eps_jet(s.step, &s.x, s.y)?;
            let mut cv: f64 = 0.0;
            let mut cd: f64 = 0.0;
            for z in [&e, &r] {
                let excess = z.value.abs() - s.y.abs();
                if excess > 1e-12 {
                    cv = cv.max(if a > 0.0 { excess / a } else { f64::INFINITY });
                }
                let derivs = z.dx.iter().chain(&z.dxx).chain(&z.dxy).chain([&z.dy, &z.dyy]);
                for dv in derivs {
                    cd = cd.max(exp_constant(dv.abs(), a));
                }
            }
            Ok((cv, cd))
        })
        .collect::<Result<_>>()?;
    let cv = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let cd = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GrowthReport { value_constant: cv, derivative_constant: cd, samples: samples.len(), pass: cv.is_finite() && cd.is_finite() })
}

/// Tabulated jets of `eta` on an `(x, y)` grid at every time step, with
/// Catmull–Rom interpolation. One-dimensional state only.
#[derive(Clone, Debug)]
pub struct FlowTable {
    grid: TimeGrid,
    x_dependent: bool,
    /// Node coordinates including one padding node on each side.
    xs: Vec<f64>,
    ys: Vec<f64>,
    x_range: (f64, f64),
    y_range: (f64, f64),
    /// `[eta, dx, dy, dxx, dxy, dyy]` per (step, x node, y node).
    data: Vec<[f64; 6]>,
}

fn nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let h = (hi - lo) / (count - 1) as f64;
    (0..count + 2).map(|i| lo + (i as f64 - 1.0) * h).collect()
}

/// Catmull–Rom weights for local coordinate `s in [0, 1]`.
fn cr_weights(s: f64) -> [f64; 4] {
    let (s2, s3) = (s * s, s * s * s);
    [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ]
}

impl FlowTable {
    /// `nx` nodes across `x_range` (ignored when `g` does not read `x`) and
    /// `ny` across `y_range`.
    pub fn build(flow: &FlowField, x_range: (f64, f64), nx: usize, y_range: (f64, f64), ny: usize) -> Result<Self> {
        if flow.n != 1 {
            return Err(Error::Dimension("flow tables support one-dimensional states".into()));
        }
        if nx < 2 || ny < 2 || !(x_range.0 < x_range.1) || !(y_range.0 < y_range.1) {
            return Err(Error::InvalidInput("flow table needs at least two nodes per axis and proper ranges".into()));
        }
        let xs = if flow.x_dependent { nodes(x_range.0, x_range.1, nx) } else { vec![0.5 * (x_range.0 + x_range.1)] };
        let ys = nodes(y_range.0, y_range.1, ny);
        let steps = flow.grid.steps() + 1;
        let h = flow.fd_step;
        let cols: Vec<Vec<[f64; 6]>> = xs
            .par_iter()
            .flat_map_iter(|&x| ys.iter().map(move |&y| (x, y)))
            .map(|(x, y)| -> Result<Vec<[f64; 6]>> {
                let hy = h * (1.0 + y.abs());
                let tr = |xx: f64, yy: f64| flow.trajectory(&[xx], yy);
                let c = tr(x, y)?;
                let (yp, ym) = (tr(x, y + hy)?, tr(x, y - hy)?);
                let mut out = vec![[0.0; 6]; steps];
                if flow.x_dependent {
                    let hx = h * (1.0 + x.abs());
                    let (xp, xm) = (tr(x + hx, y)?, tr(x - hx, y)?);
                    let (pp, pm, mp, mm) = (tr(x + hx, y + hy)?, tr(x + hx, y - hy)?, tr(x - hx, y + hy)?, tr(x - hx, y - hy)?);
                    for i in 0..steps {
                        out[i] = [
                            c[i],
                            (xp[i] - xm[i]) / (2.0 * hx),
                            (yp[i] - ym[i]) / (2.0 * hy),
                            (xp[i] - 2.0 * c[i] + xm[i]) / (hx * hx),
                            (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * hx * hy),
                            (yp[i] - 2.0 * c[i] + ym[i]) / (hy * hy),
                        ];
                    }
                } else {
                    for i in 0..steps {
                        out[i] = [c[i], 0.0, (yp[i] - ym[i]) / (2.0 * hy), 0.0, 0.0, (yp[i] - 2.0 * c[i] + ym[i]) / (hy * hy)];
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        // node-major -> step-major
        let (mx, my) = (xs.len(), ys.len());
        let mut data = vec![[0.0; 6]; steps * mx * my];
        for (node, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * mx * my + node] = *v;
            }
        }
        Ok(FlowTable { grid: flow.grid, x_dependent: flow.x_dependent, xs, ys, x_range, y_range, data })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn locate(nodes: &[f64], range: (f64, f64), v: f64, what: &str) -> Result<(usize, f64)> {
        let tol = 1e-9 * (range.1 - range.0);
        if !(v >= range.0 - tol && v <= range.1 + tol) {
            return Err(Error::OutOfTable(format!("{what} = {v} outside [{}, {}]", range.0, range.1)));
        }
        let h = nodes[1] - nodes[0];
        let inner = nodes.len() - 2;
        let pos = ((v - nodes[1]) / h).clamp(0.0, (inner - 1) as f64);
        let cell = (pos.floor() as usize).min(inner - 2);
        Ok((cell + 1, pos - cell as f64))
    }

    /// Interpolated `[eta, dx, dy, dxx, dxy, dyy]` at `(t_i, x, y)`.
    pub fn lookup(&self, i: usize, x: f64, y: f64) -> Result<[f64; 6]> {
        if i > self.grid.steps() {
            return Err(Error::OutOfRange { index: i, len: self.grid.steps() + 1 });
        }
        let my = self.ys.len();
        let base = i * self.xs.len() * my;
        let (cy, sy) = Self::locate(&self.ys, self.y_range, y, "y")?;
        let wy = cr_weights(sy);
        let row = |a: usize| {
            let mut acc = [0.0; 6];
            for (q, w) in wy.iter().enumerate() {
                let v = &self.data[base + a * my + cy - 1 + q];
                for c in 0..6 {
                    acc[c] += w * v[c];
                }
            }
            acc
        };
        if !self.x_dependent {
            return Ok(row(0));
        }
        let (cx, sx) = Self::locate(&self.xs, self.x_range, x, "x")?;
        let wx = cr_weights(sx);
        let mut out = [0.0; 6];
        for (p, w) in wx.iter().enumerate() {
            let r = row(cx - 1 + p);
            for c in 0..6 {
                out[c] += w * r[c];
            }
        }
        Ok(out)
    }
}

impl FlowEval for FlowTable {
    fn state_dim(&self) -> usize {
        1
    }
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn eta_jet(&self, i: usize, x: &[f64], y: f64) -> Result<Jet> {
        let v = self.lookup(i, x[0], y)?;
        Ok(Jet { value: v[0], dx: vec![v[1]], dy: v[2], dxx: vec![v[3]], dxy: vec![v[4]], dyy: v[5] })
    }
    /// Inverse of the interpolated flow, bracketed on the table's `y` range.
    fn eps(&self, i: usize, x: &[f64], y: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.y_range;
        let f = |u: f64| self.lookup(i, x[0], u).map(|v| (v[0] - y, v[2]));
        if f(lo)?.0 > 0.0 || f(hi)?.0 < 0.0 {
            return Err(Error::OutOfTable(format!("eta^-1({y}) outside the tabulated range")));
        }
        let mut u = y.clamp(lo, hi);
        for _ in 0..200 {
            let (r, dv) = f(u)?;
            if r.abs() <= 1e-13 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + u.abs()) {
                return Ok(u);
            }
            if r > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - r / dv;
            u = if dv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sample_paths;
    use crate::expr::Var;

    fn flow(g: Expr, steps: usize) -> FlowField {
        let coeffs = CoefficientSet::builder(1, 1).g(vec![g]).build().unwrap();
        let b = sample_paths(TimeGrid::new(0.0, 1.0, steps).unwrap(), 1, 5, 1).unwrap();
        FlowField::new(&coeffs, &b, 0).unwrap()
    }

    #[test]
    fn constant_g_shifts_by_the_increment() {
        let f = flow(Expr::constant(0.7), 100);
        let tail = f.b_tail(30)[0];
        assert!((f.eta(30, &[0.2], 1.5).unwrap() - (1.5 + 0.7 * tail)).abs() < 1e-12);
        assert!((f.eps(30, &[0.2], 1.5).unwrap() - (1.5 - 0.7 * tail)).abs() < 1e-12);
    }

    #[test]
    fn linear_g_is_exponential() {
        let f = flow(Expr::var(Var::Y), 10_000);
        let tail = f.b_tail(0)[0];
        let rel = (f.eta(0, &[0.0], 2.0).unwrap() / (2.0 * tail.exp()) - 1.0).abs();
        assert!(rel < 1e-3, "{rel}");
        let inv = f.eps(0, &[0.0], 2.0).unwrap();
        assert!((f.eta(0, &[0.0], inv).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn table_reproduces_direct_jets() {
        let g = Expr::product(vec![
            Expr::sin(Expr::var(Var::Y)),
            Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.25, Expr::cos(Expr::var(Var::X(0))))]),
        ]);
        let f = flow(Expr::scale(0.3, g), 50);
        let t = FlowTable::build(&f, (0.0, 1.0), 21, (-2.0, 2.0), 81).unwrap();
        let direct = f.eta_jet(10, &[0.33], 0.41).unwrap();
        let tab = t.eta_jet(10, &[0.33], 0.41).unwrap();
        assert!((direct.value - tab.value).abs() < 1e-5);
        assert!((direct.dy - tab.dy).abs() < 1e-4);
        assert!((direct.dx[0] - tab.dx[0]).abs() < 1e-4);
        assert!(t.eta_jet(10, &[1.5], 0.0).is_err());
    }
}
