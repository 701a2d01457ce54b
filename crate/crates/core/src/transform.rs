//! The pathwise change of variables `u = eps(t, x, y)` that removes the
//! backward integral: transformed coefficients, the operator `A_{f,g}`, and
//! numerical checks of the resulting identities.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::PathBundle;
use crate::coefficients::{CoefficientSet, Generator, StatePoint};
use crate::domain::{Location, SmoothDomain};
use crate::error::{Error, Result};
use crate::expr::{Args, Expr, Var};
use crate::flow::{fd_jet, FlowEval, FlowField, Jet};
use crate::reflected::ReflectedEnsemble;
use crate::rng::{Motion, Stream};
use crate::solver::{solve_markov, BdsdeSolution, MarkovOptions};

/// `b(x)` and row-major `sigma(x)`.
fn drift_diffusion(coeffs: &CoefficientSet, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (coeffs.n(), coeffs.d());
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n * d];
    coeffs.b_into(x, &mut b);
    coeffs.sigma_into(x, &mut s);
    (b, s)
}

/// `sigma^T v`.
fn sigma_t(s: &[f64], n: usize, d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|k| (0..n).map(|i| s[i * d + k] * v[i]).sum()).collect()
}

/// `L_x` applied to a jet: `<b, D_x> + tr(sigma sigma^T D_xx) / 2`.
fn generator_of(b: &[f64], s: &[f64], n: usize, d: usize, dx: &[f64], dxx: &[f64]) -> f64 {
    let mut v: f64 = b.iter().zip(dx).map(|(p, q)| p * q).sum();
    for i in 0..n {
        for j in 0..n {
            let a: f64 = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            v += 0.5 * a * dxx[i * n + j];
        }
    }
    v
}

/// `f~` from the `eta` jet at `(t, x, y)`:
/// `(1/D_y eta)[f(t, x, eta, sigma^T D_x eta + D_y eta z) - g D_y g (t, x, eta)/2
///  + L_x eta + <sigma^T D_xy eta, z> + D_yy eta |z|^2 / 2]`.
pub fn transformed_f_from_jet(coeffs: &CoefficientSet, t: f64, x: &[f64], jet: &Jet, z: &[f64]) -> Result<f64> {
    if !(jet.dy > 0.0) {
        return Err(Error::NonMonotoneFlow { value: jet.dy });
    }
    let (n, d) = (coeffs.n(), coeffs.d());
    let (b, s) = drift_diffusion(coeffs, x);
    let sx = sigma_t(&s, n, d, &jet.dx);
    let sxy = sigma_t(&s, n, d, &jet.dxy);
    let zz: Vec<f64> = sx.iter().zip(z).map(|(a, c)| a + jet.dy * c).collect();
    let z2: f64 = z.iter().map(|v| v * v).sum();
    let val = coeffs.f(t, x, jet.value, &zz) - 0.5 * coeffs.g_dg(t, x, jet.value)
        + generator_of(&b, &s, n, d, &jet.dx, &jet.dxx)
        + sxy.iter().zip(z).map(|(a, c)| a * c).sum::<f64>()
        + 0.5 * jet.dyy * z2;
    Ok(val / jet.dy)
}

/// `h~ = (h(t, x, eta) + <D_x eta, grad phi(x)>) / D_y eta`, without the
/// boundary check.
pub fn transformed_h_from_jet(coeffs: &CoefficientSet, domain: &SmoothDomain, t: f64, x: &[f64], jet: &Jet) -> Result<f64> {
    if !(jet.dy > 0.0) {
        return Err(Error::NonMonotoneFlow { value: jet.dy });
    }
    let mut grad = vec![0.0; x.len()];
    domain.grad_phi(x, &mut grad);
    let dot: f64 = jet.dx.iter().zip(&grad).map(|(a, b)| a * b).sum();
    Ok((coeffs.h(t, x, jet.value) + dot) / jet.dy)
}

pub fn transformed_f(coeffs: &CoefficientSet, flow: &dyn FlowEval, i: usize, x: &[f64], y: f64, z: &[f64]) -> Result<f64> {
    let jet = flow.eta_jet(i, x, y)?;
    transformed_f_from_jet(coeffs, flow.grid().time(i), x, &jet, z)
}

/// `h~` at a boundary point.
pub fn transformed_h(
    coeffs: &CoefficientSet,
    flow: &dyn FlowEval,
    domain: &SmoothDomain,
    i: usize,
    x: &[f64],
    y: f64,
) -> Result<f64> {
    if domain.classify(x) != Location::Boundary {
        return Err(Error::NotOnBoundary);
    }
    let jet = flow.eta_jet(i, x, y)?;
    transformed_h_from_jet(coeffs, domain, flow.grid().time(i), x, &jet)
}

/// A smooth deterministic test field `psi(t, x)` given symbolically
/// (`Var::T` and `Var::X(i)`).
#[derive(Clone, Debug)]
pub struct TestField {
    pub expr: Expr,
}

impl TestField {
    pub fn new(expr: Expr) -> Self {
        TestField { expr }
    }

    /// Exact jet in `x` (the `y` slots are unused).
    pub fn jet(&self, n: usize, t: f64, x: &[f64]) -> Jet {
        let a = Args::new(t, x, 0.0, &[]);
        let mut jet = Jet::identity(n, self.expr.eval(&a));
        jet.dy = 0.0;
        for i in 0..n {
            let di = self.expr.partial(Var::X(i));
            jet.dx[i] = di.eval(&a);
            for j in 0..n {
                jet.dxx[i * n + j] = di.partial(Var::X(j)).eval(&a);
            }
        }
        jet
    }
}

/// `A_{f,g}(psi) = -L psi - f(t, x, psi, sigma^T D_x psi) + <g, D_y g>(t, x, psi)/2`
/// from the value and `x`-derivatives of `psi` at `(t, x)`.
pub fn operator_afg(coeffs: &CoefficientSet, t: f64, x: &[f64], psi: &Jet, with_g: bool) -> f64 {
    let (n, d) = (coeffs.n(), coeffs.d());
    let (b, s) = drift_diffusion(coeffs, x);
    let z = sigma_t(&s, n, d, &psi.dx);
    let corr = if with_g { 0.5 * coeffs.g_dg(t, x, psi.value) } else { 0.0 };
    -generator_of(&b, &s, n, d, &psi.dx, &psi.dxx) - coeffs.f(t, x, psi.value, &z) + corr
}

/// One evaluation of the operator identity
/// `D_y eps(t, x, psi) A_{f,g}(psi) = A_{f~,0}(phi)` with
/// `psi = eta(t, x, phi(t, x))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|, 1)`.
    pub rel_error: f64,
}

/// `psi` derivatives come from finite differences of the composite
/// `x -> eta(t, x, phi(t, x))`, `D_y eps` from the inverse flow, and `f~`
/// from the `eta` jet: three separate numerical routes.
pub fn operator_identity(coeffs: &CoefficientSet, flow: &FlowField, phi: &TestField, i: usize, x: &[f64]) -> Result<OperatorCheck> {
    let n = coeffs.n();
    let t = flow.grid().time(i);
    let ph = phi.jet(n, t, x);
    let psi = fd_jet(x, 0.0, flow.fd_step(), |p, _| {
        let v = phi.expr.eval(&Args::new(t, p, 0.0, &[]));
        flow.eta(i, p, v)
    })?;
    let eps_jet = flow.eps_jet(i, x, psi.value)?;
    let lhs = eps_jet.dy * operator_afg(coeffs, t, x, &psi, true);

    // A_{f~,0}(phi) = -L phi - f~(t, x, phi, sigma^T D_x phi)
    let (b, s) = drift_diffusion(coeffs, x);
    let d = coeffs.d();
    let z = sigma_t(&s, n, d, &ph.dx);
    let eta = flow.eta_jet(i, x, ph.value)?;
    let rhs = -generator_of(&b, &s, n, d, &ph.dx, &ph.dxx) - transformed_f_from_jet(coeffs, t, x, &eta, &z)?;
    let rel_error = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
    Ok(OperatorCheck { lhs, rhs, rel_error })
}

/// Worst relative error of the operator identity over `count` random
/// `(t, x)` points in `[-half_width, half_width]^n`.
pub fn operator_identity_suite(
    coeffs: &CoefficientSet,
    flow: &FlowField,
    phi: &TestField,
    half_width: f64,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let n = coeffs.n();
    let steps = flow.grid().steps();
    let mut rng = Stream::new(seed, 11, Motion::Aux);
    let pts: Vec<(usize, Vec<f64>)> = (0..count)
        .map(|_| {
            let i = ((rng.uniform() * steps as f64) as usize).min(steps);
            (i, (0..n).map(|_| rng.uniform_in(-half_width, half_width)).collect())
        })
        .collect();
    let errs: Vec<f64> = pts
        .par_iter()
        .map(|(i, x)| operator_identity(coeffs, flow, phi, *i, x).map(|c| c.rel_error))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Coefficients `(f~, 0, h~)` as a generator for the forward-only solver.
pub struct TransformedCoefficients<'a> {
    pub coeffs: &'a CoefficientSet,
    pub flow: &'a dyn FlowEval,
    pub domain: &'a SmoothDomain,
}

impl Generator for TransformedCoefficients<'_> {
    fn state_dim(&self) -> usize {
        self.coeffs.n()
    }
    fn noise_dim(&self) -> usize {
        self.coeffs.d()
    }
    fn has_backward_noise(&self) -> bool {
        false
    }
    fn f(&self, p: &StatePoint) -> Result<f64> {
        let jet = self.flow.eta_jet(p.step, p.x, p.y)?;
        transformed_f_from_jet(self.coeffs, p.t, p.x, &jet, p.z)
    }
    fn g(&self, _: &StatePoint, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
    fn h(&self, p: &StatePoint) -> Result<f64> {
        let jet = self.flow.eta_jet(p.step, p.x, p.y)?;
        transformed_h_from_jet(self.coeffs, self.domain, p.t, p.x, &jet)
    }
}

/// Solve the forward-only equation with coefficients `(f~, h~)` along the
/// given reflected paths; the flow fixes the `B` scenario.
pub fn solve_transformed_gbsde(
    coeffs: &CoefficientSet,
    flow: &dyn FlowEval,
    domain: &SmoothDomain,
    ens: &ReflectedEnsemble,
    bundle: &PathBundle,
    opts: &MarkovOptions,
) -> Result<BdsdeSolution> {
    if flow.grid() != ens.grid() {
        return Err(Error::Dimension("flow and ensemble grids differ".into()));
    }
    let gen = TransformedCoefficients { coeffs, flow, domain };
    solve_markov(&gen, coeffs, ens, bundle, opts)
}

/// Worst `|F - f~|` and `|H - h~|` over sampled states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TransformIdentityReport {
    pub interior: f64,
    pub boundary: f64,
    pub samples: usize,
}

/// A state `(step, x, y, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformSample {
    pub step: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
}

/// `F` and `H` are built from `eps` derivatives at `(s, x, y)`; `f~` and
/// `h~` from `eta` derivatives at `(s, x, u)`, `u = eps(s, x, y)`,
/// `v = D_y eps z + sigma^T D_x eps`. `H` only at boundary samples.
pub fn verify_transform_identities(
    coeffs: &CoefficientSet,
    flow: &FlowField,
    domain: &SmoothDomain,
    samples: &[TransformSample],
) -> Result<TransformIdentityReport> {
    let (n, d) = (coeffs.n(), coeffs.d());
    let per: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|smp| {
            let t = flow.grid().time(smp.step);
            let x = &smp.x;
            let e = flow.eps_jet(smp.step, x, smp.y)?;
            let (b, s) = drift_diffusion(coeffs, x);
            let mut g = vec![0.0; d];
            coeffs.g_into(t, x, smp.y, &[], &mut g);
            let z2: f64 = smp.z.iter().map(|v| v * v).sum();
            let sxy = sigma_t(&s, n, d, &e.dxy);
            let big_f = -e.dx.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>()
                + e.dy * coeffs.f(t, x, smp.y, &smp.z)
                - 0.5 * e.dyy * z2
                - (generator_of(&vec![0.0; n], &s, n, d, &e.dx, &e.dxx))
                - sxy.iter().zip(&smp.z).map(|(p, q)| p * q).sum::<f64>()
                - 0.5 * e.dy * coeffs.g_dg(t, x, smp.y);
            let u = e.value;
            let sx = sigma_t(&s, n, d, &e.dx);
            let v: Vec<f64> = smp.z.iter().zip(&sx).map(|(zz, a)| e.dy * zz + a).collect();
            let eta = flow.eta_jet(smp.step, x, u)?;
            let interior = (big_f - transformed_f_from_jet(coeffs, t, x, &eta, &v)?).abs();
            let boundary = if domain.classify(x) == Location::Boundary {
                let mut grad = vec![0.0; n];
                domain.grad_phi(x, &mut grad);
                let big_h = -e.dx.iter().zip(&grad).map(|(p, q)| p * q).sum::<f64>() + e.dy * coeffs.h(t, x, smp.y);
                (big_h - transformed_h_from_jet(coeffs, domain, t, x, &eta)?).abs()
            } else {
                0.0
            };
            Ok((interior, boundary))
        })
        .collect::<Result<_>>()?;
    Ok(TransformIdentityReport {
        interior: per.iter().map(|p| p.0).fold(0.0, f64::max),
        boundary: per.iter().map(|p| p.1).fold(0.0, f64::max),
        samples: samples.len(),
    })
}

/// Gaps between the transformed solution `(U, V)` and the direct one
/// mapped through the flow: `U - eps(s, X, Y)` and
/// `V - (D_y eps Z + sigma^T D_x eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub u_rms: f64,
    pub u_points: usize,
    pub v_rms: f64,
    pub v_points: usize,
}

/// Both solutions must come from the same ensemble. `U` gaps are taken
/// at every `stride_t`-th step and `stride_m`-th member; `V` gaps at
/// `v_points` evenly spread (step, member) pairs before the terminal step.
#[allow(clippy::too_many_arguments)]
pub fn transform_consistency(
    coeffs: &CoefficientSet,
    flow: &FlowField,
    ens: &ReflectedEnsemble,
    direct: &BdsdeSolution,
    transformed: &BdsdeSolution,
    stride_t: usize,
    stride_m: usize,
    v_points: usize,
) -> Result<ConsistencyReport> {
    let (n, d) = (coeffs.n(), coeffs.d());
    let steps = ens.grid().steps();
    let start = ens.start_step();
    let m = ens.len();
    let pairs: Vec<(usize, usize)> = (start..=steps)
        .step_by(stride_t.max(1))
        .flat_map(|i| (0..m).step_by(stride_m.max(1)).map(move |j| (i, j)))
        .collect();
    let ugaps: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let u = flow.eps(i, ens.x(i, j), direct.y(i, j))?;
            Ok((transformed.y(i, j) - u).powi(2))
        })
        .collect::<Result<_>>()?;
    let total = (steps - start) * m;
    let vpairs: Vec<(usize, usize)> = (0..v_points)
        .map(|q| {
            let flat = (q * total) / v_points.max(1);
            (start + flat / m, flat % m)
        })
        .collect();
    let vgaps: Vec<f64> = vpairs
        .par_iter()
        .map(|&(i, j)| {
            let x = ens.x(i, j);
            let e = flow.eps_jet(i, x, direct.y(i, j))?;
            let (_, s) = drift_diffusion(coeffs, x);
            let sx = sigma_t(&s, n, d, &e.dx);
            let gap: f64 = (0..d)
                .map(|k| (transformed.z(i, j)[k] - (e.dy * direct.z(i, j)[k] + sx[k])).powi(2))
                .sum();
            Ok(gap)
        })
        .collect::<Result<_>>()?;
    let rms = |v: &[f64]| (v.iter().sum::<f64>() / v.len().max(1) as f64).sqrt();
    Ok(ConsistencyReport { u_rms: rms(&ugaps), u_points: ugaps.len(), v_rms: rms(&vgaps), v_points: vgaps.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sample_paths;
    use crate::grid::TimeGrid;

    #[test]
    fn operator_on_simple_fields() {
        let c = CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).build().unwrap();
        let psi = TestField::new(Expr::product(vec![Expr::var(Var::X(0)), Expr::var(Var::X(0))])).jet(1, 0.0, &[0.3]);
        assert!((operator_afg(&c, 0.0, &[0.3], &psi, true) + 1.0).abs() < 1e-14);
        let c1 = c.to_builder().f(Expr::constant(1.0)).build().unwrap();
        let zero = TestField::new(Expr::zero()).jet(1, 0.0, &[0.3]);
        assert_eq!(operator_afg(&c1, 0.0, &[0.3], &zero, true), -1.0);
    }

    #[test]
    fn constant_g_shifts_the_driver() {
        let c = CoefficientSet::builder(1, 1)
            .f(Expr::sin(Expr::var(Var::Y)))
            .g(vec![Expr::constant(0.5)])
            .sigma(vec![Expr::constant(1.0)])
            .build()
            .unwrap();
        let b = sample_paths(TimeGrid::new(0.0, 1.0, 100).unwrap(), 1, 3, 1).unwrap();
        let flow = FlowField::new(&c, &b, 0).unwrap();
        let tail = flow.b_tail(40)[0];
        let ft = transformed_f(&c, &flow, 40, &[0.2], 0.1, &[0.3]).unwrap();
        assert!((ft - (0.1 + 0.5 * tail).sin()).abs() < 1e-6, "{ft}");
    }
}
