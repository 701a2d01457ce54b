//! Empirical falsification of the standing hypotheses, and the exponential
//! change of variables that makes the boundary coefficient strictly
//! dissipative.

use crate::coefficients::{CoefficientSet, Generator, StatePoint};
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::rng::{Motion, Stream};

/// Sampling plan for [`validate_hypotheses`].
#[derive(Clone, Debug)]
pub struct SamplePlan {
    /// Coordinates of `x`, `y`, `z` are drawn from `[-half_width, half_width]`.
    pub half_width: f64,
    /// `t` is drawn from `[0, t_end]`.
    pub t_end: f64,
    pub count: usize,
    pub seed: u64,
    /// Optional samples of the terminal boundary process `k_T`, used to
    /// check the exponential integrability condition for `mu_values`.
    pub k_terminal: Option<Vec<f64>>,
    pub mu_values: Vec<f64>,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            half_width: 5.0,
            t_end: 1.0,
            count: 10_000,
            seed: 0,
            k_terminal: None,
            mu_values: vec![1.0, 5.0, 10.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub first: SamplePoint,
    pub second: Option<SamplePoint>,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct HypothesisCheck {
    pub name: &'static str,
    /// The declared constant the ratio is compared against.
    pub bound: f64,
    pub worst_ratio: f64,
    pub pass: bool,
    /// Always present when `pass` is false.
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, Default)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    bound: f64,
    worst: f64,
    witness: Option<Witness>,
    broken: bool,
}

impl Tracker {
    fn new(name: &'static str, bound: f64) -> Self {
        Tracker { name, bound, worst: 0.0, witness: None, broken: false }
    }

    fn offer(&mut self, ratio: f64, a: &SamplePoint, b: Option<&SamplePoint>) {
        if !ratio.is_finite() {
            if !self.broken {
                self.broken = true;
                self.worst = f64::NAN;
                self.witness = Some(Witness { first: a.clone(), second: b.cloned(), ratio });
            }
            return;
        }
        if !self.broken && ratio > self.worst {
            self.worst = ratio;
            self.witness = Some(Witness { first: a.clone(), second: b.cloned(), ratio });
        }
    }

    fn finish(self) -> HypothesisCheck {
        let pass = !self.broken && self.worst <= self.bound + 1e-12 * (1.0 + self.bound.abs());
        HypothesisCheck {
            name: self.name,
            bound: self.bound,
            worst_ratio: self.worst,
            pass,
            witness: if pass { None } else { self.witness },
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Ratio `num / den` with `0/0 = 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sample random argument pairs and report, for every inequality of the
/// hypotheses, the worst empirical ratio against its declared constant.
pub fn validate_hypotheses(coeffs: &CoefficientSet, plan: &SamplePlan) -> Result<HypothesisReport> {
    if plan.count == 0 || !(plan.half_width > 0.0) {
        return Err(Error::InvalidInput("sample plan needs a positive count and box".into()));
    }
    let (n, d) = (coeffs.n(), coeffs.d());
    let c = *coeffs.constants();
    let env = coeffs.envelopes();
    let mut rng = Stream::new(plan.seed, 0, Motion::Aux);
    let w = plan.half_width;
    let mut draw = |t: Option<f64>, x: Option<&[f64]>| -> SamplePoint {
        let t = t.unwrap_or_else(|| rng.uniform_in(0.0, plan.t_end));
        let x = match x {
            Some(x) => x.to_vec(),
            None => (0..n).map(|_| rng.uniform_in(-w, w)).collect(),
        };
        let y = rng.uniform_in(-w, w);
        let z = (0..d).map(|_| rng.uniform_in(-w, w)).collect();
        SamplePoint { t, x, y, z }
    };

    let mut f_growth = Tracker::new("H1 f growth", c.k);
    let mut g_growth = Tracker::new("H1 g growth", c.k);
    let mut h_growth = Tracker::new("H1 h growth", c.k);
    let mut f_lip = Tracker::new("H2(i) f Lipschitz", c.c);
    let mut g_y = Tracker::new("H2(ii) g in y", c.c);
    let mut g_z = Tracker::new("H2(ii) g in z", c.alpha);
    let mut g_joint = Tracker::new("H2(ii) g joint", 1.0);
    let mut h_lip = Tracker::new("H2(iii) h Lipschitz", c.beta1);
    let mut f_lin = Tracker::new("H'1 f linear growth", c.k);
    let mut h_lin = Tracker::new("H'1 h linear growth", c.k);
    let mut b_lip = Tracker::new("H3 b Lipschitz", c.k);
    let mut s_lip = Tracker::new("H3 sigma Lipschitz", c.k);
    let mut l_lin = Tracker::new("H4 l linear growth", c.k);

    let mut g1 = vec![0.0; d];
    let mut g2 = vec![0.0; d];
    let mut v1 = vec![0.0; n.max(1) * d];
    let mut v2 = vec![0.0; n.max(1) * d];
    for _ in 0..plan.count {
        let p = draw(None, None);
        let q = draw(Some(p.t), Some(&p.x));
        let f = |s: &SamplePoint| coeffs.f(s.t, &s.x, s.y, &s.z);
        let h = |s: &SamplePoint| coeffs.h(s.t, &s.x, s.y);
        let ta = Args::new(p.t, &[], 0.0, &[]);
        let (ft, gt, ht) = (env.f.eval(&ta), env.g.eval(&ta), env.h.eval(&ta));
        let (fp, fq, hp, hq) = (f(&p), f(&q), h(&p), h(&q));
        coeffs.g_into(p.t, &p.x, p.y, &p.z, &mut g1);
        let yz = p.y.abs() + norm(&p.z);
        f_growth.offer(ratio((fp.abs() - ft).max(0.0), yz), &p, None);
        g_growth.offer(ratio((norm(&g1) - gt).max(0.0), yz), &p, None);
        h_growth.offer(ratio((hp.abs() - ht).max(0.0), p.y.abs()), &p, None);
        let dy = (p.y - q.y).abs();
        let dz = diff_norm(&p.z, &q.z);
        f_lip.offer(ratio((fp - fq).powi(2), dy * dy + dz * dz), &p, Some(&q));
        h_lip.offer(ratio((hp - hq).abs(), dy), &p, Some(&q));
        coeffs.g_into(q.t, &q.x, q.y, &q.z, &mut g2);
        let dg2 = diff_norm(&g1, &g2).powi(2);
        g_joint.offer(ratio(dg2, c.c * dy * dy + c.alpha * dz * dz), &p, Some(&q));
        // one-variable pairs isolate the y- and z-constants of g
        let qy = SamplePoint { y: q.y, ..p.clone() };
        coeffs.g_into(qy.t, &qy.x, qy.y, &qy.z, &mut g2);
        g_y.offer(ratio(diff_norm(&g1, &g2).powi(2), dy * dy), &p, Some(&qy));
        let qz = SamplePoint { z: q.z.clone(), ..p.clone() };
        coeffs.g_into(qz.t, &qz.x, qz.y, &qz.z, &mut g2);
        g_z.offer(ratio(diff_norm(&g1, &g2).powi(2), dz * dz), &p, Some(&qz));

        let xn = norm(&p.x);
        f_lin.offer(ratio(fp.abs(), 1.0 + p.y.abs() + xn + norm(&p.z)), &p, None);
        h_lin.offer(ratio(hp.abs(), 1.0 + p.y.abs() + xn), &p, None);
        l_lin.offer(ratio(coeffs.l(&p.x).abs(), 1.0 + xn), &p, None);
        if n > 0 {
            let r = draw(Some(p.t), None);
            let dx = diff_norm(&p.x, &r.x);
            coeffs.b_into(&p.x, &mut v1[..n]);
            coeffs.b_into(&r.x, &mut v2[..n]);
            b_lip.offer(ratio(diff_norm(&v1[..n], &v2[..n]), dx), &p, Some(&r));
            coeffs.sigma_into(&p.x, &mut v1[..n * d]);
            coeffs.sigma_into(&r.x, &mut v2[..n * d]);
            s_lip.offer(ratio(diff_norm(&v1[..n * d], &v2[..n * d]), dx), &p, Some(&r));
        }
    }

    let mut checks = vec![
        f_growth.finish(),
        g_growth.finish(),
        h_growth.finish(),
        f_lip.finish(),
        g_y.finish(),
        g_z.finish(),
        g_joint.finish(),
        h_lip.finish(),
        f_lin.finish(),
        h_lin.finish(),
        l_lin.finish(),
    ];
    if n > 0 {
        checks.push(b_lip.finish());
        checks.push(s_lip.finish());
    }
    if let Some(kt) = &plan.k_terminal {
        // E[ e^{mu k_T} ] * T * sup envelope^2 must be finite for each mu
        let grid: Vec<f64> = (0..=100).map(|i| plan.t_end * i as f64 / 100.0).collect();
        let sup_env = grid
            .iter()
            .map(|&t| {
                let a = Args::new(t, &[], 0.0, &[]);
                [env.f.eval(&a), env.g.eval(&a), env.h.eval(&a)]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v * v))
            })
            .fold(0.0f64, f64::max);
        for &mu in &plan.mu_values {
            let m = kt.iter().map(|k| (mu * k).exp()).sum::<f64>() / kt.len().max(1) as f64;
            let value = m * plan.t_end * sup_env;
            let mut tr = Tracker::new("H1 exponential integrability", f64::INFINITY);
            let p = SamplePoint { t: plan.t_end, x: vec![], y: mu, z: vec![] };
            tr.offer(value, &p, None);
            let mut chk = tr.finish();
            chk.pass = value.is_finite();
            if !chk.pass && chk.witness.is_none() {
                chk.witness = Some(Witness { first: p, second: None, ratio: value });
            }
            checks.push(chk);
        }
    }
    Ok(HypothesisReport { checks })
}

/// Shift rate giving the shifted boundary coefficient a one-sided constant
/// of exactly `-1`.
pub fn choose_shift_rate(beta1: f64) -> f64 {
    beta1 + 1.0
}

/// Coefficients after the change of variables
/// `(Y, Z) -> (e^{eta k} Y, e^{eta k} Z)`. The boundary process enters
/// through [`StatePoint::k`].
#[derive(Clone, Debug)]
pub struct ShiftedCoefficients {
    base: CoefficientSet,
    rate: f64,
}

/// Build the shifted coefficients; `k_path` is checked to be an admissible
/// boundary process (starts at 0, nondecreasing). Any number of paths may
/// later be fed through [`ShiftedCoefficients::forward`].
pub fn exponential_shift(coeffs: &CoefficientSet, eta_rate: f64, k_path: &[f64]) -> Result<ShiftedCoefficients> {
    if !(eta_rate > 0.0 && eta_rate.is_finite()) {
        return Err(Error::InvalidInput(format!("shift rate must be positive, got {eta_rate}")));
    }
    if let Some(&k0) = k_path.first() {
        if k0 != 0.0 {
            return Err(Error::InvalidInput("boundary process must start at 0".into()));
        }
    }
    if k_path.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("boundary process must be nondecreasing".into()));
    }
    Ok(ShiftedCoefficients { base: coeffs.clone(), rate: eta_rate })
}

impl ShiftedCoefficients {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn base(&self) -> &CoefficientSet {
        &self.base
    }

    /// One-sided constant of the shifted boundary coefficient.
    pub fn beta2(&self) -> f64 {
        self.base.constants().beta1 - self.rate
    }

    /// `(Y, Z) -> (e^{eta k} Y, e^{eta k} Z)`, in place.
    pub fn forward(&self, k: f64, y: &mut f64, z: &mut [f64]) {
        let e = (self.rate * k).exp();
        *y *= e;
        z.iter_mut().for_each(|v| *v *= e);
    }

    /// Inverse of [`ShiftedCoefficients::forward`].
    pub fn inverse(&self, k: f64, y: &mut f64, z: &mut [f64]) {
        let e = (-self.rate * k).exp();
        *y *= e;
        z.iter_mut().for_each(|v| *v *= e);
    }

    pub fn h_bar(&self, t: f64, x: &[f64], k: f64, y: f64) -> f64 {
        let e = (self.rate * k).exp();
        e * self.base.h(t, x, y / e) - self.rate * y
    }
}

impl Generator for ShiftedCoefficients {
    fn state_dim(&self) -> usize {
        self.base.n()
    }
    fn noise_dim(&self) -> usize {
        self.base.d()
    }
    fn has_backward_noise(&self) -> bool {
        !self.base.g_is_zero()
    }
    fn f(&self, p: &StatePoint) -> Result<f64> {
        let e = (self.rate * p.k).exp();
        let z: Vec<f64> = p.z.iter().map(|v| v / e).collect();
        Ok(e * self.base.f(p.t, p.x, p.y / e, &z))
    }
    fn g(&self, p: &StatePoint, out: &mut [f64]) -> Result<()> {
        let e = (self.rate * p.k).exp();
        let z: Vec<f64> = p.z.iter().map(|v| v / e).collect();
        self.base.g_into(p.t, p.x, p.y / e, &z, out);
        out.iter_mut().for_each(|v| *v *= e);
        Ok(())
    }
    fn h(&self, p: &StatePoint) -> Result<f64> {
        Ok(self.h_bar(p.t, p.x, p.k, p.y))
    }
}

/// Worst sampled `<y1 - y2, h(y1) - h(y2)> / |y1 - y2|^2` of a generator's
/// boundary coefficient at boundary level `k`, with `t` and `x` sampled
/// too.
pub fn sampled_monotonicity<G: Generator>(gen: &G, k: f64, plan: &SamplePlan) -> Result<f64> {
    let mut rng = Stream::new(plan.seed, 1, Motion::Aux);
    let w = plan.half_width;
    let mut worst = f64::NEG_INFINITY;
    let mut x = vec![0.0; gen.state_dim()];
    for _ in 0..plan.count {
        let t = rng.uniform_in(0.0, plan.t_end);
        x.iter_mut().for_each(|v| *v = rng.uniform_in(-w, w));
        let (y1, y2) = (rng.uniform_in(-w, w), rng.uniform_in(-w, w));
        let at = |y| StatePoint { step: 0, t, x: &x, k, y, z: &[] };
        let dh = gen.h(&at(y1))? - gen.h(&at(y2))?;
        if y1 != y2 {
            worst = worst.max((y1 - y2) * dh / ((y1 - y2) * (y1 - y2)));
        }
    }
    Ok(worst)
}
