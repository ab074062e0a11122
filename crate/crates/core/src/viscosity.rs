//! Shear-thinning viscosity laws.
//!
//! Every law is a function `mu(t)` of the squared shear rate `t = |grad u|^2`.
//! Besides the viscosity itself a model provides its derivative, the energy
//! density `phi(s) = 1/2 * int_0^s mu(t) dt`, the flux derivative
//! `xi'(t)` of `xi(t) = mu(t^2) t`, and the structural constants
//! `m_mu <= xi' <= M_mu`.
//!
//! `xi'` is piecewise monotone for all supported laws. Extrema of `xi'` over an
//! interval are therefore computed exactly from the interval endpoints, the
//! branch junctions (with one-sided limits where `xi'` jumps) and the interior
//! critical points of the quadratic blends of the smooth relaxation.

use crate::error::{Error, Result};

/// Increments larger than this fraction of the upper end are differenced
/// directly.
const PHI_INCREMENT_DIRECT: f64 = 1e-2;

const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Parameters of a viscosity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityLaw {
    /// `mu(t) = mu_inf + (mu_0 - mu_inf) (1 + lambda t)^((r-2)/2)`.
    Carreau { mu_inf: f64, mu_0: f64, lambda: f64, r: f64 },
    /// Power law `t^((r-2)/2)` frozen below `eps_minus^2` and above `eps_plus^2`.
    RelaxedPowerLaw { eps_minus: f64, eps_plus: f64, r: f64 },
    /// C^1 version of the relaxed power law with quadratic blends of
    /// half-width `delta` around both cut-offs.
    SmoothRelaxedPowerLaw { eps_minus: f64, eps_plus: f64, r: f64, delta: f64 },
    /// Newtonian reference law.
    Constant { mu_c: f64 },
}

/// Side from which a one-sided limit is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Sharp constants of the pointwise monotonicity and Lipschitz bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpConstants {
    /// Lipschitz-type constant `C(kappa, tau)`.
    pub upper: f64,
    /// Monotonicity constant `c(kappa, tau)`.
    pub lower: f64,
}

/// Quadratic `v + d x + a x^2` in the shifted variable `x = t - anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Blend {
    anchor: f64,
    v: f64,
    d: f64,
    a: f64,
    /// Range `[start, end]` in `t` on which the blend is active.
    start: f64,
    end: f64,
}

impl Blend {
    fn eval(&self, t: f64) -> f64 {
        let x = t - self.anchor;
        self.v + x * (self.d + x * self.a)
    }

    fn deriv(&self, t: f64) -> f64 {
        self.d + 2.0 * self.a * (t - self.anchor)
    }

    /// `int_{t0}^{t1}` of the blend.
    fn integral(&self, t0: f64, t1: f64) -> f64 {
        let prim = |t: f64| {
            let x = t - self.anchor;
            x * (self.v + x * (0.5 * self.d + x * self.a / 3.0))
        };
        prim(t1) - prim(t0)
    }

    /// Stationary point of `s -> g(s) + 2 s g'(s)` (a quadratic in `s`), if it
    /// falls strictly inside the blend range.
    fn flux_critical_point(&self) -> Option<f64> {
        // g + 2 s g' = (v + 2 s0 d) + (3 d + 4 a s0) x + 5 a x^2
        if self.a == 0.0 {
            return None;
        }
        let x = -(3.0 * self.d + 4.0 * self.a * self.anchor) / (10.0 * self.a);
        let s = self.anchor + x;
        (s > self.start && s < self.end).then_some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SmoothParts {
    lower: Blend,
    upper: Blend,
    /// `phi` at the four junctions.
    phi_at: [f64; 4],
}

/// A validated viscosity law with precomputed structural data.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityModel {
    law: ViscosityLaw,
    smooth: Option<SmoothParts>,
    m_mu: f64,
    big_m_mu: f64,
}

fn check_exponent(r: f64) -> Result<()> {
    if r.is_finite() && r > 1.0 && r < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("r must lie in (1,2), got {r}")))
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_cutoffs(eps_minus: f64, eps_plus: f64) -> Result<()> {
    check_positive("eps_minus", eps_minus)?;
    check_positive("eps_plus", eps_plus)?;
    if eps_minus >= eps_plus {
        return Err(Error::InvalidParameter(format!(
            "eps_minus must be smaller than eps_plus, got {eps_minus} >= {eps_plus}"
        )));
    }
    Ok(())
}

fn check_argument(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be finite and nonnegative, got {t}")))
    }
}

impl ViscosityModel {
    /// Validates the parameters of `law` and precomputes its structural data.
    pub fn new(law: ViscosityLaw) -> Result<Self> {
        let mut model = ViscosityModel { law, smooth: None, m_mu: 0.0, big_m_mu: 0.0 };
        match law {
            ViscosityLaw::Carreau { mu_inf, mu_0, lambda, r } => {
                check_positive("mu_inf", mu_inf)?;
                check_positive("mu_0", mu_0)?;
                check_positive("lambda", lambda)?;
                check_exponent(r)?;
                if mu_0 <= mu_inf {
                    return Err(Error::InvalidParameter(format!("mu_0 must exceed mu_inf, got {mu_0} <= {mu_inf}")));
                }
                model.m_mu = mu_inf;
                model.big_m_mu = mu_0;
            }
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                check_cutoffs(eps_minus, eps_plus)?;
                check_exponent(r)?;
                model.m_mu = (r - 1.0) * eps_plus.powf(r - 2.0);
                model.big_m_mu = eps_minus.powf(r - 2.0);
            }
            ViscosityLaw::SmoothRelaxedPowerLaw { eps_minus, eps_plus, r, delta } => {
                check_cutoffs(eps_minus, eps_plus)?;
                check_exponent(r)?;
                let (lo, hi) = (eps_minus * eps_minus, eps_plus * eps_plus);
                if !(delta.is_finite() && delta > 0.0 && delta < lo) {
                    return Err(Error::InvalidParameter(format!("delta must lie in (0, eps_minus^2), got {delta}")));
                }
                if 2.0 * delta >= hi - lo {
                    return Err(Error::InvalidParameter(format!(
                        "delta must be smaller than (eps_plus^2 - eps_minus^2)/2, got {delta}"
                    )));
                }
                model.smooth = Some(smooth_parts(lo, hi, r, delta));
                let (m, big_m) = model.xi_prime_global_range();
                if !(m > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "smooth relaxation violates the lower structural bound (inf xi' = {m})"
                    )));
                }
                model.m_mu = m;
                model.big_m_mu = big_m;
            }
            ViscosityLaw::Constant { mu_c } => {
                check_positive("mu_c", mu_c)?;
                model.m_mu = mu_c;
                model.big_m_mu = mu_c;
            }
        }
        Ok(model)
    }

    pub fn carreau(mu_inf: f64, mu_0: f64, lambda: f64, r: f64) -> Result<Self> {
        Self::new(ViscosityLaw::Carreau { mu_inf, mu_0, lambda, r })
    }

    pub fn relaxed_power_law(eps_minus: f64, eps_plus: f64, r: f64) -> Result<Self> {
        Self::new(ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r })
    }

    pub fn smooth_relaxed_power_law(eps_minus: f64, eps_plus: f64, r: f64, delta: f64) -> Result<Self> {
        Self::new(ViscosityLaw::SmoothRelaxedPowerLaw { eps_minus, eps_plus, r, delta })
    }

    pub fn constant(mu_c: f64) -> Result<Self> {
        Self::new(ViscosityLaw::Constant { mu_c })
    }

    pub fn law(&self) -> &ViscosityLaw {
        &self.law
    }

    /// Structural constants `(m_mu, M_mu)` with `m_mu <= xi'(t), mu(t) <= M_mu`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.m_mu, self.big_m_mu)
    }

    /// Viscosity at squared shear rate `t`.
    pub fn mu(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(self.mu_unchecked(t))
    }

    /// Derivative of the viscosity; the right derivative at the kinks of the
    /// relaxed power law.
    pub fn mu_prime(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(self.mu_prime_unchecked(t))
    }

    /// Energy density `phi(s) = 1/2 int_0^s mu(t) dt`.
    pub fn phi(&self, s: f64) -> Result<f64> {
        check_argument(s)?;
        Ok(self.phi_unchecked(s))
    }

    /// `xi(t) = mu(t^2) t` for a shear rate `t`.
    pub fn xi(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(self.mu_unchecked(t * t) * t)
    }

    /// `xi'(t) = mu(t^2) + 2 t^2 mu'(t^2)` for a shear rate `t`.
    pub fn xi_prime(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(self.xi_prime_unchecked(t))
    }

    /// One-sided limit of `xi'` at `t`. Differs from [`Self::xi_prime`] only at
    /// the cut-offs of the (non-smooth) relaxed power law.
    pub fn xi_prime_limit(&self, t: f64, side: Side) -> Result<f64> {
        check_argument(t)?;
        Ok(self.xi_prime_sided(t, side))
    }

    /// Infimum and supremum of `xi'` over the open interval between `a` and
    /// `b` (shear rates). For `a == b` both equal `xi'(a)`.
    pub fn xi_prime_extrema(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        check_argument(a)?;
        check_argument(b)?;
        Ok(self.xi_prime_extrema_unchecked(a.min(b), a.max(b)))
    }

    /// Sharp constants `C(kappa, tau)` and `c(kappa, tau)` for vectors in R^2
    /// or R^3.
    pub fn sharp_constants(&self, kappa: &[f64], tau: &[f64]) -> Result<SharpConstants> {
        if kappa.len() != tau.len() {
            return Err(Error::DimensionMismatch { expected: kappa.len(), got: tau.len() });
        }
        if !(2..=3).contains(&kappa.len()) {
            return Err(Error::Domain(format!("vectors must have dimension 2 or 3, got {}", kappa.len())));
        }
        if kappa.iter().chain(tau).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite vector entry".into()));
        }
        let nk = kappa.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nt = tau.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (inf, sup) = self.xi_prime_extrema_unchecked(nk.min(nt), nk.max(nt));
        let upper = sup * sup + 2.0 * self.mu_unchecked(nk * nk) * self.mu_unchecked(nt * nt);
        Ok(SharpConstants { upper, lower: inf })
    }

    pub(crate) fn mu_unchecked(&self, t: f64) -> f64 {
        match self.law {
            ViscosityLaw::Carreau { mu_inf, mu_0, lambda, r } => {
                mu_inf + (mu_0 - mu_inf) * (1.0 + lambda * t).powf(0.5 * (r - 2.0))
            }
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                if t < eps_minus * eps_minus {
                    eps_minus.powf(r - 2.0)
                } else if t <= eps_plus * eps_plus {
                    t.powf(0.5 * (r - 2.0))
                } else {
                    eps_plus.powf(r - 2.0)
                }
            }
            ViscosityLaw::SmoothRelaxedPowerLaw { r, .. } => {
                let parts = self.smooth_parts();
                let (lower, upper) = (&parts.lower, &parts.upper);
                if t <= lower.start {
                    lower.eval(lower.start)
                } else if t <= lower.end {
                    lower.eval(t)
                } else if t <= upper.start {
                    t.powf(0.5 * (r - 2.0))
                } else if t <= upper.end {
                    upper.eval(t)
                } else {
                    upper.eval(upper.end)
                }
            }
            ViscosityLaw::Constant { mu_c } => mu_c,
        }
    }

    pub(crate) fn mu_prime_unchecked(&self, t: f64) -> f64 {
        match self.law {
            ViscosityLaw::Carreau { mu_inf, mu_0, lambda, r } => {
                (mu_0 - mu_inf) * 0.5 * (r - 2.0) * lambda * (1.0 + lambda * t).powf(0.5 * (r - 4.0))
            }
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                if t < eps_minus * eps_minus || t >= eps_plus * eps_plus {
                    0.0
                } else {
                    0.5 * (r - 2.0) * t.powf(0.5 * (r - 4.0))
                }
            }
            ViscosityLaw::SmoothRelaxedPowerLaw { r, .. } => {
                let parts = self.smooth_parts();
                let (lower, upper) = (&parts.lower, &parts.upper);
                if t <= lower.start || t > upper.end {
                    0.0
                } else if t <= lower.end {
                    lower.deriv(t)
                } else if t <= upper.start {
                    0.5 * (r - 2.0) * t.powf(0.5 * (r - 4.0))
                } else {
                    upper.deriv(t)
                }
            }
            ViscosityLaw::Constant { .. } => 0.0,
        }
    }

    pub(crate) fn phi_unchecked(&self, s: f64) -> f64 {
        match self.law {
            ViscosityLaw::Carreau { mu_inf, mu_0, lambda, r } => {
                // (1 + lambda s)^(r/2) - 1 without cancellation for small s
                let growth = (0.5 * r * (lambda * s).ln_1p()).exp_m1();
                0.5 * mu_inf * s + (mu_0 - mu_inf) * growth / (lambda * r)
            }
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                let (lo, hi) = (eps_minus * eps_minus, eps_plus * eps_plus);
                let low_energy = 0.5 * eps_minus.powf(r);
                if s < lo {
                    0.5 * eps_minus.powf(r - 2.0) * s
                } else if s <= hi {
                    low_energy + (s.powf(0.5 * r) - eps_minus.powf(r)) / r
                } else {
                    let at_hi = low_energy + (eps_plus.powf(r) - eps_minus.powf(r)) / r;
                    at_hi + 0.5 * eps_plus.powf(r - 2.0) * (s - hi)
                }
            }
            ViscosityLaw::SmoothRelaxedPowerLaw { r, .. } => {
                let parts = self.smooth_parts();
                let (lower, upper) = (&parts.lower, &parts.upper);
                let phi_at = &parts.phi_at;
                if s <= lower.start {
                    0.5 * lower.eval(lower.start) * s
                } else if s <= lower.end {
                    phi_at[0] + 0.5 * lower.integral(lower.start, s)
                } else if s <= upper.start {
                    phi_at[1] + (s.powf(0.5 * r) - lower.end.powf(0.5 * r)) / r
                } else if s <= upper.end {
                    phi_at[2] + 0.5 * upper.integral(upper.start, s)
                } else {
                    phi_at[3] + 0.5 * upper.eval(upper.end) * (s - upper.end)
                }
            }
            ViscosityLaw::Constant { mu_c } => 0.5 * mu_c * s,
        }
    }

    /// `phi(s + d) - phi(s)` with an error relative to the increment itself
    /// rather than to `phi(s)`. Requires `s >= 0` and `s + d >= 0`.
    pub(crate) fn phi_increment_unchecked(&self, s: f64, d: f64) -> f64 {
        let (lo, len, sign) = if d >= 0.0 { (s, d, 1.0) } else { (s + d, -d, -1.0) };
        if len == 0.0 {
            return 0.0;
        }
        if len > PHI_INCREMENT_DIRECT * (lo + len) {
            return self.phi_unchecked(s + d) - self.phi_unchecked(s);
        }
        // Gauss-Legendre on each smooth piece of mu/2 between lo and lo + len
        let mut cuts = vec![0.0];
        cuts.extend(self.mu_breakpoints().into_iter().map(|b| b - lo).filter(|&c| c > 0.0 && c < len));
        cuts.push(len);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = lo + w[0] + half;
            let sum: f64 = GAUSS_LEGENDRE_5.iter().map(|&(x, wt)| wt * self.mu_unchecked(mid + half * x)).sum();
            total += half * sum;
        }
        sign * 0.5 * total
    }

    /// Squared shear rates at which `mu` is not smooth.
    fn mu_breakpoints(&self) -> Vec<f64> {
        self.junctions().into_iter().map(|t| t * t).collect()
    }

    pub(crate) fn xi_prime_unchecked(&self, t: f64) -> f64 {
        let s = t * t;
        self.mu_unchecked(s) + 2.0 * s * self.mu_prime_unchecked(s)
    }

    fn xi_prime_sided(&self, t: f64, side: Side) -> f64 {
        match self.law {
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                let below_low = match side {
                    Side::Left => t <= eps_minus,
                    Side::Right => t < eps_minus,
                };
                let above_high = match side {
                    Side::Left => t > eps_plus,
                    Side::Right => t >= eps_plus,
                };
                if below_low {
                    eps_minus.powf(r - 2.0)
                } else if above_high {
                    eps_plus.powf(r - 2.0)
                } else {
                    (r - 1.0) * t.powf(r - 2.0)
                }
            }
            _ => self.xi_prime_unchecked(t),
        }
    }

    /// Shear rates at which `xi'` changes branch.
    fn junctions(&self) -> Vec<f64> {
        match self.law {
            ViscosityLaw::RelaxedPowerLaw { eps_minus, eps_plus, .. } => vec![eps_minus, eps_plus],
            ViscosityLaw::SmoothRelaxedPowerLaw { .. } => {
                let parts = self.smooth_parts();
                let (l, u) = (&parts.lower, &parts.upper);
                vec![l.start.sqrt(), l.end.sqrt(), u.start.sqrt(), u.end.sqrt()]
            }
            _ => Vec::new(),
        }
    }

    /// Interior stationary points of `xi'` (shear rates).
    fn critical_points(&self) -> Vec<f64> {
        match &self.smooth {
            Some(parts) => [parts.lower.flux_critical_point(), parts.upper.flux_critical_point()]
                .into_iter()
                .flatten()
                .map(f64::sqrt)
                .collect(),
            None => Vec::new(),
        }
    }

    pub(crate) fn xi_prime_extrema_unchecked(&self, lo: f64, hi: f64) -> (f64, f64) {
        if lo == hi {
            let v = self.xi_prime_unchecked(lo);
            return (v, v);
        }
        let mut inf = f64::INFINITY;
        let mut sup = f64::NEG_INFINITY;
        let mut visit = |v: f64| {
            inf = inf.min(v);
            sup = sup.max(v);
        };
        visit(self.xi_prime_sided(lo, Side::Right));
        visit(self.xi_prime_sided(hi, Side::Left));
        for t in self.junctions() {
            if t > lo && t < hi {
                visit(self.xi_prime_sided(t, Side::Left));
                visit(self.xi_prime_sided(t, Side::Right));
            }
        }
        for t in self.critical_points() {
            if t > lo && t < hi {
                visit(self.xi_prime_unchecked(t));
            }
        }
        (inf, sup)
    }

    /// Range of `xi'` over `[0, inf)` for the smooth relaxation. Beyond the
    /// last junction `xi'` is constant, so a finite candidate set suffices.
    fn xi_prime_global_range(&self) -> (f64, f64) {
        let mut candidates = vec![self.xi_prime_unchecked(0.0)];
        candidates.extend(self.junctions().into_iter().map(|t| self.xi_prime_unchecked(t)));
        candidates.extend(self.critical_points().into_iter().map(|t| self.xi_prime_unchecked(t)));
        let inf = candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let sup = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (inf, sup)
    }

    fn smooth_parts(&self) -> &SmoothParts {
        self.smooth.as_ref().expect("smooth relaxation data present")
    }
}

/// Quadratic blends matching value and slope of `t^((r-2)/2)` at the inner
/// junctions and having zero slope at the outer ones.
fn smooth_parts(lo: f64, hi: f64, r: f64, delta: f64) -> SmoothParts {
    let p = 0.5 * (r - 2.0);
    let make = |anchor: f64, start: f64, end: f64, sign: f64| {
        let v = anchor.powf(p);
        let d = p * anchor.powf(p - 1.0);
        Blend { anchor, v, d, a: sign * d / (4.0 * delta), start, end }
    };
    let lower = make(lo + delta, lo - delta, lo + delta, 1.0);
    let upper = make(hi - delta, hi - delta, hi + delta, -1.0);
    let phi0 = 0.5 * lower.eval(lower.start) * lower.start;
    let phi1 = phi0 + 0.5 * lower.integral(lower.start, lower.end);
    let phi2 = phi1 + (upper.start.powf(0.5 * r) - lower.end.powf(0.5 * r)) / r;
    let phi3 = phi2 + 0.5 * upper.integral(upper.start, upper.end);
    SmoothParts { lower, upper, phi_at: [phi0, phi1, phi2, phi3] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn carreau() -> ViscosityModel {
        ViscosityModel::carreau(1.0, 100.0, 2.0, 1.5).unwrap()
    }

    fn all_models() -> Vec<ViscosityModel> {
        vec![
            carreau(),
            ViscosityModel::carreau(1.0, 100.0, 2.0, 1.1).unwrap(),
            ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap(),
            ViscosityModel::relaxed_power_law(0.1, 10.0, 1.5).unwrap(),
            ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, 0.1).unwrap(),
            ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.7, 0.01).unwrap(),
            ViscosityModel::constant(3.0).unwrap(),
        ]
    }

    /// Adaptive Simpson with relative tolerance `tol`, used as an independent
    /// oracle for `phi`.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol.max(4.0 * f64::EPSILON * whole.abs()) {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol * whole.abs(), 40)
    }

    /// `phi` by quadrature, split at the junctions so that every panel sees a
    /// smooth integrand.
    fn phi_by_quadrature(model: &ViscosityModel, s: f64) -> f64 {
        let mut cuts: Vec<f64> = model.junctions().iter().map(|t| t * t).filter(|&c| c < s).collect();
        cuts.insert(0, 0.0);
        cuts.push(s);
        let f = |t: f64| model.mu(t).unwrap();
        0.5 * cuts.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-13)).sum::<f64>()
    }

    #[test]
    fn phi_increment_is_accurate_for_tiny_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for model in all_models() {
            let mut breaks = model.mu_breakpoints();
            breaks.extend([0.3, 7.0]);
            for &b in &breaks {
                for _ in 0..20 {
                    // straddle the breakpoint with steps far below phi's rounding level
                    let s = b * (1.0 + rng.random_range(-1e-9..1e-9));
                    // s + d exactly representable, so the oracle integrates over the same interval
                    let d0 = b * rng.random_range(-1e-9..1e-9);
                    let d = (s + d0) - s;
                    let f = |t: f64| model.mu(t).unwrap();
                    let (lo, hi) = if d >= 0.0 { (s, s + d) } else { (s + d, s) };
                    let mut cuts = vec![lo];
                    cuts.extend(model.mu_breakpoints().into_iter().filter(|&c| c > lo && c < hi));
                    cuts.push(hi);
                    let oracle: f64 =
                        0.5 * cuts.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-14)).sum::<f64>();
                    let got = model.phi_increment_unchecked(s, d);
                    assert_relative_eq!(got, d.signum() * oracle, max_relative = 1e-12);
                }
            }
            for (s, d) in [(0.5, 2.0), (3.0, -2.5), (1e-3, 4.0)] {
                let direct = model.phi(s + d).unwrap() - model.phi(s).unwrap();
                assert_relative_eq!(model.phi_increment_unchecked(s, d), direct, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn mu_examples() {
        assert_eq!(carreau().mu(0.0).unwrap(), 100.0);
        let pl = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        assert_eq!(pl.mu(0.5).unwrap(), 1.0);
        // 2^{-0.35} evaluated independently in extended precision
        assert_relative_eq!(pl.mu(2.0).unwrap(), 0.784_584_097_896_750_7, max_relative = 1e-14);
        let smooth = ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, 0.1).unwrap();
        assert_relative_eq!(smooth.mu(1.5).unwrap(), 1.5f64.powf(-0.35), max_relative = 1e-15);
    }

    #[test]
    fn domain_errors() {
        for model in all_models() {
            assert!(matches!(model.mu(-1.0), Err(Error::Domain(_))));
            assert!(matches!(model.mu(f64::NAN), Err(Error::Domain(_))));
            assert!(matches!(model.mu_prime(f64::INFINITY), Err(Error::Domain(_))));
            assert!(matches!(model.phi(-0.1), Err(Error::Domain(_))));
            assert!(matches!(model.xi_prime(-0.1), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn construction_errors() {
        assert!(ViscosityModel::carreau(1.0, 100.0, 2.0, 2.5).is_err());
        assert!(ViscosityModel::carreau(1.0, 0.5, 2.0, 1.5).is_err());
        assert!(ViscosityModel::carreau(1.0, 100.0, -2.0, 1.5).is_err());
        assert!(ViscosityModel::relaxed_power_law(2.0, 1.0, 1.5).is_err());
        assert!(ViscosityModel::relaxed_power_law(1.0, 1.0, 1.5).is_err());
        assert!(ViscosityModel::relaxed_power_law(0.0, 1.0, 1.5).is_err());
        assert!(ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, 1.0).is_err());
        assert!(ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, 0.0).is_err());
        assert!(ViscosityModel::smooth_relaxed_power_law(1.0, 1.1, 1.3, 0.5).is_err());
        assert!(ViscosityModel::constant(0.0).is_err());
        let err = ViscosityModel::carreau(1.0, 100.0, 2.0, 2.5).unwrap_err();
        assert!(err.to_string().contains("r must lie in (1,2)"));
    }

    #[test]
    fn mu_prime_examples() {
        assert_eq!(ViscosityModel::constant(3.0).unwrap().mu_prime(1.7).unwrap(), 0.0);
        let pl = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        assert_eq!(pl.mu_prime(0.5).unwrap(), 0.0);
        let expected = 99.0 * -0.25 * 2.0 * 3f64.powf(-1.25);
        let m = carreau();
        assert_relative_eq!(m.mu_prime(1.0).unwrap(), expected, max_relative = 1e-14);
        let h = 1e-6;
        let fd = (m.mu(1.0 + h).unwrap() - m.mu(1.0 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(fd, expected, max_relative = 1e-6);
    }

    #[test]
    fn kink_derivatives_are_right_derivatives() {
        let pl = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        assert_relative_eq!(pl.mu_prime(1.0).unwrap(), -0.35, max_relative = 1e-15);
        assert_eq!(pl.mu_prime(4.0).unwrap(), 0.0);
    }

    #[test]
    fn mu_prime_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in all_models() {
            for _ in 0..500 {
                let t: f64 = rng.random_range(0.0..6.0);
                let h = 1e-6 * t.max(1.0);
                if model.junctions().iter().any(|j| (j * j - t).abs() < 2.0 * h) || t < h {
                    continue;
                }
                let fd = (model.mu(t + h).unwrap() - model.mu(t - h).unwrap()) / (2.0 * h);
                let exact = model.mu_prime(t).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "{model:?} t={t} fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn phi_examples() {
        for model in all_models() {
            assert_eq!(model.phi(0.0).unwrap(), 0.0);
        }
        let c = ViscosityModel::constant(2.5).unwrap();
        assert_relative_eq!(c.phi(3.0).unwrap(), 3.75, max_relative = 1e-15);
        let m = carreau();
        assert_relative_eq!(m.phi(1.0).unwrap(), phi_by_quadrature(&m, 1.0), max_relative = 1e-10);
    }

    #[test]
    fn phi_matches_quadrature_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in all_models() {
            for _ in 0..1000 {
                let s: f64 = rng.random_range(0.0..8.0);
                let closed = model.phi(s).unwrap();
                let quad = phi_by_quadrature(&model, s);
                assert!((closed - quad).abs() <= 1e-10 * quad.abs().max(1e-300), "{model:?} s={s}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn phi_derivative_is_half_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in all_models() {
            for _ in 0..1000 {
                let s: f64 = rng.random_range(0.01..8.0);
                let h = 1e-6 * s.max(1.0);
                if model.junctions().iter().any(|j| (j * j - s).abs() < 2.0 * h) {
                    continue;
                }
                let fd = (model.phi(s + h).unwrap() - model.phi(s - h).unwrap()) / (2.0 * h);
                assert_relative_eq!(fd, 0.5 * model.mu(s).unwrap(), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn xi_prime_examples() {
        assert_eq!(ViscosityModel::constant(4.0).unwrap().xi_prime(2.3).unwrap(), 4.0);
        let pl = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        for t in [1.1, 1.5, 1.9] {
            let exact = 0.3 * f64::powf(t, -0.7);
            assert_relative_eq!(pl.xi_prime(t).unwrap(), exact, max_relative = 1e-14);
            let h = 1e-6;
            let fd = (pl.xi(t + h).unwrap() - pl.xi(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(fd, exact, max_relative = 1e-6);
        }
        for r in [1.1, 1.5, 1.9] {
            let m = ViscosityModel::carreau(1.0, 100.0, 2.0, r).unwrap();
            assert_relative_eq!(m.xi_prime(1e-9).unwrap(), 100.0, max_relative = 1e-9);
            for t in [0.3f64, 2.0, 1e6] {
                let ls = 2.0 * t * t;
                let exact = 1.0 + 99.0 * (1.0 + ls).powf(0.5 * (r - 4.0)) * (1.0 + (r - 1.0) * ls);
                assert_relative_eq!(m.xi_prime(t).unwrap(), exact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn bounds_examples() {
        let pl = ViscosityModel::relaxed_power_law(1e-6, 1e6, 1.3).unwrap();
        let (m, big_m) = pl.bounds();
        assert_relative_eq!(m, 0.3 * 1e6f64.powf(-0.7), max_relative = 1e-14);
        assert_relative_eq!(big_m, 1e-6f64.powf(-0.7), max_relative = 1e-14);
        assert_eq!(carreau().bounds(), (1.0, 100.0));
        assert_eq!(ViscosityModel::constant(5.0).unwrap().bounds(), (5.0, 5.0));
    }

    #[test]
    fn xi_prime_stays_within_bounds() {
        for model in all_models() {
            let (m, big_m) = model.bounds();
            for i in 0..20_000 {
                let t = i as f64 * 5e-4 * (1.0 + i as f64 * 1e-3);
                let v = model.xi_prime(t).unwrap();
                assert!(v >= m - 1e-12 && v <= big_m + 1e-12, "{model:?} t={t} v={v}");
            }
        }
    }

    #[test]
    fn mu_is_nonincreasing_and_bounded() {
        for model in all_models() {
            let (m, big_m) = model.bounds();
            let mut prev = f64::INFINITY;
            for i in 0..20_000 {
                let t = i as f64 * 1e-3;
                let v = model.mu(t).unwrap();
                assert!(v <= prev + 1e-15);
                assert!(v >= m - 1e-12 && v <= big_m + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn xi_prime_monotone_for_carreau_and_constant() {
        for model in
            [carreau(), ViscosityModel::carreau(0.1, 10.0, 5.0, 1.9).unwrap(), ViscosityModel::constant(2.0).unwrap()]
        {
            let mut prev = f64::INFINITY;
            for i in 0..20_000 {
                let v = model.xi_prime(i as f64 * 1e-3).unwrap();
                assert!(v <= prev + 1e-13);
                prev = v;
            }
        }
    }

    #[test]
    fn relaxed_xi_prime_jumps_up_at_upper_cutoff() {
        let pl = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        let left = pl.xi_prime_limit(2.0, Side::Left).unwrap();
        let right = pl.xi_prime_limit(2.0, Side::Right).unwrap();
        assert_relative_eq!(left, 0.3 * 2f64.powf(-0.7), max_relative = 1e-15);
        assert_relative_eq!(right, 2f64.powf(-0.7), max_relative = 1e-15);
        // the infimum over an interval straddling eps_plus is the left limit
        let (inf, sup) = pl.xi_prime_extrema(1.5, 2.5).unwrap();
        assert_eq!(inf, left);
        assert_eq!(sup, right);
    }

    #[test]
    fn extrema_match_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in all_models() {
            for _ in 0..200 {
                let a: f64 = rng.random_range(0.0..2.5);
                let b: f64 = rng.random_range(0.0..2.5);
                let (inf, sup) = model.xi_prime_extrema(a, b).unwrap();
                let (lo, hi) = (a.min(b), a.max(b));
                let (mut s_inf, mut s_sup) = (f64::INFINITY, f64::NEG_INFINITY);
                for k in 0..=20_000 {
                    let v = model.xi_prime(lo + (hi - lo) * k as f64 / 20_000.0).unwrap();
                    s_inf = s_inf.min(v);
                    s_sup = s_sup.max(v);
                }
                assert!(inf <= s_inf + 1e-14 && sup >= s_sup - 1e-14);
                // sampling approaches the exact extrema; blends of width 0.01 are steep
                let tol = 100.0 * (hi - lo) / 20_000.0 * model.bounds().1;
                assert!(s_inf - inf <= tol && sup - s_sup <= tol, "{model:?} [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn sharp_constant_examples() {
        let c = ViscosityModel::constant(2.0).unwrap();
        let k = c.sharp_constants(&[0.3, -1.0], &[2.0, 0.5]).unwrap();
        assert_eq!((k.upper, k.lower), (12.0, 2.0));

        for model in all_models() {
            let k = model.sharp_constants(&[0.7, 0.2, -0.1], &[0.7, 0.2, -0.1]).unwrap();
            let norm = (0.49f64 + 0.04 + 0.01).sqrt();
            assert_relative_eq!(k.lower, model.xi_prime(norm).unwrap(), max_relative = 1e-15);
        }

        let m = carreau();
        let k = m.sharp_constants(&[1.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(k.lower, m.xi_prime(2.0).unwrap());
        let expected_upper = m.xi_prime(1.0).unwrap().powi(2) + 2.0 * m.mu(1.0).unwrap() * m.mu(4.0).unwrap();
        assert_relative_eq!(k.upper, expected_upper, max_relative = 1e-15);
        // oracle: dense sampling of xi' over the segment
        let samples: Vec<f64> = (1..10_000).map(|i| m.xi_prime(1.0 + i as f64 / 10_000.0).unwrap()).collect();
        let s_inf = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let s_sup = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(k.lower <= s_inf && s_inf - k.lower < 1e-3);
        let sampled_upper = s_sup * s_sup + 2.0 * m.mu(1.0).unwrap() * m.mu(4.0).unwrap();
        assert!(k.upper >= sampled_upper && k.upper - sampled_upper < 1.0);
    }

    #[test]
    fn sharp_constants_reject_bad_input() {
        let m = carreau();
        assert!(m.sharp_constants(&[1.0], &[2.0]).is_err());
        assert!(m.sharp_constants(&[1.0, 2.0], &[2.0, 1.0, 0.0]).is_err());
        assert!(m.sharp_constants(&[f64::NAN, 2.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn chord_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for model in all_models() {
            let (m, big_m) = model.bounds();
            for _ in 0..10_000 {
                let a: f64 = rng.random_range(0.0..4.0);
                let b: f64 = rng.random_range(0.0..4.0);
                let (s, t) = (a.min(b), a.max(b));
                let chord = model.xi(t).unwrap() - model.xi(s).unwrap();
                let scale = 1e-12 * (model.xi(t).unwrap().abs() + big_m * (t - s));
                assert!(chord >= m * (t - s) - scale);
                assert!(chord <= big_m * (t - s) + scale);
            }
        }
    }

    /// Literal coefficient form of the quadratic blends.
    fn literal_blends(e_minus: f64, e_plus: f64, r: f64, delta: f64) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
        let lo = e_minus * e_minus;
        let hi = e_plus * e_plus;
        let lower = move |t: f64| {
            let k = (lo + delta).powf((r - 4.0) / 2.0);
            k * (r - 2.0) / (8.0 * delta) * t * t
                - k * (lo - delta) * (r - 2.0) / (4.0 * delta) * t
                - (lo + delta).powf((r - 2.0) / 2.0) * (-14.0 * delta + 2.0 * lo + 3.0 * delta * r - lo * r)
                    / (8.0 * delta)
        };
        let upper = move |t: f64| {
            let k = (hi - delta).powf((r - 4.0) / 2.0);
            -k * (r - 2.0) / (8.0 * delta) * t * t + k * (hi + delta) * (r - 2.0) / (4.0 * delta) * t
                - (hi - delta).powf((r - 2.0) / 2.0) * (-14.0 * delta - 2.0 * hi + 3.0 * delta * r + hi * r)
                    / (8.0 * delta)
        };
        (lower, upper)
    }

    #[test]
    fn blends_agree_with_literal_coefficients() {
        for delta in [0.1, 0.01] {
            let model = ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, delta).unwrap();
            let (lower, upper) = literal_blends(1.0, 2.0, 1.3, delta);
            for k in 0..=100 {
                let t = 1.0 - delta + 2.0 * delta * k as f64 / 100.0;
                assert_relative_eq!(model.mu(t).unwrap(), lower(t), max_relative = 1e-12);
                let t = 4.0 - delta + 2.0 * delta * k as f64 / 100.0;
                assert_relative_eq!(model.mu(t).unwrap(), upper(t), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn smooth_relaxation_is_c1_at_junctions() {
        for delta in [0.1, 0.01] {
            let model = ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, delta).unwrap();
            for t in [1.0 - delta, 1.0 + delta, 4.0 - delta, 4.0 + delta] {
                let h = 1e-9;
                let jump = (model.mu(t + h).unwrap() - model.mu(t - h).unwrap()).abs();
                assert!(jump < 1e-8, "value jump {jump} at {t}");
                let left = model.mu_prime(t - h).unwrap();
                let right = model.mu_prime(t + h).unwrap();
                assert!((left - right).abs() < 1e-7, "slope jump at {t}");
            }
        }
    }

    #[test]
    fn smooth_relaxation_converges_as_delta_halves() {
        let sharp = ViscosityModel::relaxed_power_law(1.0, 2.0, 1.3).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let delta = 0.2 / f64::powi(2.0, k);
            let model = ViscosityModel::smooth_relaxed_power_law(1.0, 2.0, 1.3, delta).unwrap();
            let gap = (0..1000)
                .map(|i| {
                    let t = 6.0 * i as f64 / 999.0;
                    (model.mu(t).unwrap() - sharp.mu(t).unwrap()).abs()
                })
                .fold(0.0, f64::max);
            assert!(gap < prev, "gap {gap} did not decrease");
            prev = gap;
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn vec2() -> impl Strategy<Value = [f64; 2]> {
            (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| [a, b])
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(512))]

            #[test]
            fn pointwise_bounds_hold(idx in 0usize..7, k in vec2(), t in vec2()) {
                let model = &all_models()[idx];
                let (_, big_m) = model.bounds();
                let mk = model.mu(k[0] * k[0] + k[1] * k[1]).unwrap();
                let mt = model.mu(t[0] * t[0] + t[1] * t[1]).unwrap();
                let flux = [mk * k[0] - mt * t[0], mk * k[1] - mt * t[1]];
                let diff = [k[0] - t[0], k[1] - t[1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                let sc = model.sharp_constants(&k, &t).unwrap();
                let lhs_u = flux[0] * flux[0] + flux[1] * flux[1];
                prop_assert!(lhs_u <= sc.upper * d2 * (1.0 + 1e-12) + 1e-300);
                prop_assert!(sc.upper <= 3.0 * big_m * big_m * (1.0 + 1e-12));
                let lhs_l = flux[0] * diff[0] + flux[1] * diff[1];
                prop_assert!(lhs_l >= sc.lower * d2 * (1.0 - 1e-12) - 1e-300);
                prop_assert!(sc.lower >= model.bounds().0 * (1.0 - 1e-12));
            }
        }
    }
}
