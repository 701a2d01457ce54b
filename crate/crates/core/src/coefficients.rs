//! Problem data: generator, boundary term, backward noise coefficient,
//! terminal condition and the forward diffusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Args, Expr, Var};

/// Declared constants of the Lipschitz/monotonicity hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Growth/Lipschitz constant `K`.
    #[serde(rename = "K")]
    pub k: f64,
    /// Lipschitz constant `c` in the `y` variable.
    pub c: f64,
    /// Contraction constant of `g` in `z`, strictly inside (0, 1).
    pub alpha: f64,
    /// One-sided constant of `h`.
    pub beta1: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { k: 1.0, c: 1.0, alpha: 0.5, beta1: 1.0 }
    }
}

/// Growth envelopes `f_t, g_t, h_t`, functions of `t` only.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelopes {
    pub f: Expr,
    pub g: Expr,
    pub h: Expr,
}

impl Default for Envelopes {
    fn default() -> Self {
        Envelopes {
            f: Expr::constant(1.0),
            g: Expr::constant(1.0),
            h: Expr::constant(1.0),
        }
    }
}

/// Immutable coefficient record. Build with [`CoefficientSet::builder`].
///
/// The value process `Y` is scalar; the state `X` lives in `R^n` (`n = 0`
/// is allowed for problems without a forward diffusion) and both Brownian
/// motions are `d`-dimensional.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    n: usize,
    d: usize,
    f: Expr,
    g: Vec<Expr>,
    h: Expr,
    l: Expr,
    b: Vec<Expr>,
    sigma: Vec<Expr>,
    envelopes: Envelopes,
    constants: Constants,
    dg_dy: Vec<Expr>,
}

pub struct CoefficientBuilder {
    n: usize,
    d: usize,
    f: Expr,
    g: Option<Vec<Expr>>,
    h: Expr,
    l: Expr,
    b: Option<Vec<Expr>>,
    sigma: Option<Vec<Expr>>,
    envelopes: Envelopes,
    constants: Constants,
}

impl CoefficientBuilder {
    pub fn f(mut self, e: Expr) -> Self {
        self.f = e;
        self
    }
    pub fn g(mut self, e: Vec<Expr>) -> Self {
        self.g = Some(e);
        self
    }
    pub fn h(mut self, e: Expr) -> Self {
        self.h = e;
        self
    }
    pub fn l(mut self, e: Expr) -> Self {
        self.l = e;
        self
    }
    pub fn b(mut self, e: Vec<Expr>) -> Self {
        self.b = Some(e);
        self
    }
    /// Row-major `n x d` matrix.
    pub fn sigma(mut self, e: Vec<Expr>) -> Self {
        self.sigma = Some(e);
        self
    }
    pub fn envelopes(mut self, e: Envelopes) -> Self {
        self.envelopes = e;
        self
    }
    pub fn constants(mut self, c: Constants) -> Self {
        self.constants = c;
        self
    }

    pub fn build(self) -> Result<CoefficientSet> {
        let (n, d) = (self.n, self.d);
        if d == 0 {
            return Err(Error::Dimension("Brownian dimension d must be at least 1".into()));
        }
        let g = self.g.unwrap_or_else(|| vec![Expr::zero(); d]);
        let b = self.b.unwrap_or_else(|| vec![Expr::zero(); n]);
        let sigma = self.sigma.unwrap_or_else(|| vec![Expr::zero(); n * d]);
        if g.len() != d {
            return Err(Error::Dimension(format!("g has {} components, expected d = {d}", g.len())));
        }
        if b.len() != n {
            return Err(Error::Dimension(format!("b has {} components, expected n = {n}", b.len())));
        }
        if sigma.len() != n * d {
            return Err(Error::Dimension(format!(
                "sigma has {} entries, expected n*d = {}",
                sigma.len(),
                n * d
            )));
        }
        let check_vars = |name: &str, e: &Expr, allow_y: bool, allow_z: bool, allow_t: bool| -> Result<()> {
            let mut bad = None;
            e.visit_vars(&mut |v| {
                let ok = match v {
                    Var::T => allow_t,
                    Var::Y => allow_y,
                    Var::X(i) => i < n,
                    Var::Z(i) => allow_z && i < d,
                };
                if !ok {
                    bad = Some(v);
                }
            });
            match bad {
                Some(v) => Err(Error::Dimension(format!("{name} may not depend on {}", v.name()))),
                None => Ok(()),
            }
        };
        check_vars("f", &self.f, true, true, true)?;
        for e in &g {
            check_vars("g", e, true, true, true)?;
        }
        check_vars("h", &self.h, true, false, true)?;
        check_vars("l", &self.l, false, false, false)?;
        for e in b.iter().chain(sigma.iter()) {
            check_vars("b/sigma", e, false, false, false)?;
        }
        for (name, e) in [("f_t", &self.envelopes.f), ("g_t", &self.envelopes.g), ("h_t", &self.envelopes.h)] {
            let mut bad = false;
            e.visit_vars(&mut |v| bad |= v != Var::T);
            if bad {
                return Err(Error::Dimension(format!("envelope {name} may depend on t only")));
            }
        }
        let c = self.constants;
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {}", c.alpha)));
        }
        for (name, v) in [("K", c.k), ("c", c.c), ("beta1", c.beta1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("constant {name} must be finite and positive, got {v}")));
            }
        }
        let dg_dy = g.iter().map(|e| e.partial(Var::Y)).collect();
        Ok(CoefficientSet {
            n,
            d,
            f: self.f,
            g,
            h: self.h,
            l: self.l,
            b,
            sigma,
            envelopes: self.envelopes,
            constants: c,
            dg_dy,
        })
    }
}

impl CoefficientSet {
    pub fn builder(n: usize, d: usize) -> CoefficientBuilder {
        CoefficientBuilder {
            n,
            d,
            f: Expr::zero(),
            g: None,
            h: Expr::zero(),
            l: Expr::zero(),
            b: None,
            sigma: None,
            envelopes: Envelopes::default(),
            constants: Constants::default(),
        }
    }

    /// Rebuild with modified parts; used for perturbation studies.
    pub fn to_builder(&self) -> CoefficientBuilder {
        CoefficientBuilder {
            n: self.n,
            d: self.d,
            f: self.f.clone(),
            g: Some(self.g.clone()),
            h: self.h.clone(),
            l: self.l.clone(),
            b: Some(self.b.clone()),
            sigma: Some(self.sigma.clone()),
            envelopes: self.envelopes.clone(),
            constants: self.constants,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn f_expr(&self) -> &Expr {
        &self.f
    }
    pub fn g_expr(&self) -> &[Expr] {
        &self.g
    }
    pub fn h_expr(&self) -> &Expr {
        &self.h
    }
    pub fn l_expr(&self) -> &Expr {
        &self.l
    }
    pub fn b_expr(&self) -> &[Expr] {
        &self.b
    }
    pub fn sigma_expr(&self) -> &[Expr] {
        &self.sigma
    }
    pub fn dg_dy_expr(&self) -> &[Expr] {
        &self.dg_dy
    }
    pub fn envelopes(&self) -> &Envelopes {
        &self.envelopes
    }
    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn g_is_zero(&self) -> bool {
        self.g.iter().all(Expr::is_zero)
    }

    pub fn h_is_zero(&self) -> bool {
        self.h.is_zero()
    }

    pub fn f(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.f.eval(&Args::new(t, x, y, z))
    }

    pub fn g_into(&self, t: f64, x: &[f64], y: f64, z: &[f64], out: &mut [f64]) {
        let a = Args::new(t, x, y, z);
        for (o, e) in out.iter_mut().zip(&self.g) {
            *o = e.eval(&a);
        }
    }

    pub fn h(&self, t: f64, x: &[f64], y: f64) -> f64 {
        self.h.eval(&Args::new(t, x, y, &[]))
    }

    pub fn l(&self, x: &[f64]) -> f64 {
        self.l.eval(&Args::new(0.0, x, 0.0, &[]))
    }

    pub fn b_into(&self, x: &[f64], out: &mut [f64]) {
        let a = Args::new(0.0, x, 0.0, &[]);
        for (o, e) in out.iter_mut().zip(&self.b) {
            *o = e.eval(&a);
        }
    }

    /// Row-major `n x d`.
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let a = Args::new(0.0, x, 0.0, &[]);
        for (o, e) in out.iter_mut().zip(&self.sigma) {
            *o = e.eval(&a);
        }
    }

    /// `<g, D_y g>(t, x, y)` with `z = 0`.
    pub fn g_dg(&self, t: f64, x: &[f64], y: f64) -> f64 {
        let zero = vec![0.0; self.d];
        let a = Args::new(t, x, y, &zero);
        self.g.iter().zip(&self.dg_dy).map(|(g, dg)| g.eval(&a) * dg.eval(&a)).sum()
    }

    /// `sigma^T grad l (x)`, the natural terminal value of `Z`.
    pub fn terminal_z(&self, x: &[f64], out: &mut [f64]) {
        let a = Args::new(0.0, x, 0.0, &[]);
        let grad: Vec<f64> = (0..self.n).map(|i| self.l.partial(Var::X(i)).eval(&a)).collect();
        for k in 0..self.d {
            out[k] = (0..self.n).map(|i| self.sigma[i * self.d + k].eval(&a) * grad[i]).sum();
        }
    }
}

/// A point at which a generator is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct StatePoint<'a> {
    pub step: usize,
    pub t: f64,
    pub x: &'a [f64],
    pub k: f64,
    pub y: f64,
    pub z: &'a [f64],
}

/// Coefficients `(f, g, h)` as seen by the backward solvers. Implemented by
/// plain coefficient sets and by derived (shifted, transformed) ones.
pub trait Generator: Sync {
    /// Dimension of the forward state `x` the coefficients read.
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn has_backward_noise(&self) -> bool;
    fn f(&self, p: &StatePoint) -> Result<f64>;
    fn g(&self, p: &StatePoint, out: &mut [f64]) -> Result<()>;
    fn h(&self, p: &StatePoint) -> Result<f64>;
}

impl Generator for CoefficientSet {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn has_backward_noise(&self) -> bool {
        !self.g_is_zero()
    }
    fn f(&self, p: &StatePoint) -> Result<f64> {
        Ok(CoefficientSet::f(self, p.t, p.x, p.y, p.z))
    }
    fn g(&self, p: &StatePoint, out: &mut [f64]) -> Result<()> {
        self.g_into(p.t, p.x, p.y, p.z, out);
        Ok(())
    }
    fn h(&self, p: &StatePoint) -> Result<f64> {
        Ok(CoefficientSet::h(self, p.t, p.x, p.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_rejects_bad_dimensions_and_constants() {
        assert!(CoefficientSet::builder(1, 1).g(vec![]).build().is_err());
        assert!(CoefficientSet::builder(0, 1)
            .h(Expr::var(Var::Z(0)))
            .build()
            .is_err());
        let c = Constants { alpha: 1.0, ..Default::default() };
        assert!(CoefficientSet::builder(1, 1).constants(c).build().is_err());
        assert!(CoefficientSet::builder(1, 1)
            .l(Expr::var(Var::X(1)))
            .build()
            .is_err());
    }

    #[test]
    fn terminal_z_is_sigma_gradient() {
        let c = CoefficientSet::builder(1, 1)
            .l(Expr::product(vec![Expr::var(Var::X(0)), Expr::var(Var::X(0))]))
            .sigma(vec![Expr::constant(2.0)])
            .build()
            .unwrap();
        let mut z = [0.0];
        c.terminal_z(&[0.5], &mut z);
        assert_eq!(z[0], 2.0);
    }
}
