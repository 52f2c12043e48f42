//! Physical parameters and pointwise constitutive laws.
//!
//! Everything here is a plain value type: beam coefficients, the tip body,
//! the obstacle law at `x = ℓ`, the semilinear body forces and the
//! exponential multipliers used by the observability functionals.
//!
//! Stops follow the geometric convention of a beam resting at `v = 0`
//! between an obstacle below (`g_lo < 0`) and one above (`g_hi > 0`).

use num_integer::Integer;

use crate::error::{invalid, Error, Result};

/// Location of the pointwise damper.
///
/// Kept as an exact fraction of the beam length whenever possible, because
/// the stabilization verdict depends on the arithmetic of that fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiLocation {
    /// `ξ = (num / den) · ℓ`.
    Fraction { num: i64, den: i64 },
    /// Absolute position in metres with no exact rational representation.
    Real(f64),
}

impl XiLocation {
    pub fn fraction(num: i64, den: i64) -> Self {
        XiLocation::Fraction { num, den }
    }

    pub fn position(&self, ell: f64) -> f64 {
        match *self {
            XiLocation::Fraction { num, den } => num as f64 / den as f64 * ell,
            XiLocation::Real(x) => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    /// Mass density per unit length, ρ₁ = ρA.
    pub rho1: f64,
    /// Rotational inertia per unit length, ρ₂ = ρI.
    pub rho2: f64,
    /// Shear stiffness κ = κ'GA.
    pub k: f64,
    /// Bending stiffness EI.
    pub b: f64,
    pub ell: f64,
    pub xi: XiLocation,
    /// Transverse damper coefficient at ξ.
    pub gamma1: f64,
    /// Rotational damper coefficient at ξ.
    pub gamma2: f64,
}

impl BeamParams {
    /// Unit coefficients on `[0, 1]` with the damper at the midpoint.
    pub fn unit() -> Self {
        BeamParams {
            rho1: 1.0,
            rho2: 1.0,
            k: 1.0,
            b: 1.0,
            ell: 1.0,
            xi: XiLocation::fraction(1, 2),
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("beam.rho1", self.rho1),
            ("beam.rho2", self.rho2),
            ("beam.k", self.k),
            ("beam.b", self.b),
            ("beam.ell", self.ell),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, format!("must be positive, got {value}")));
            }
        }
        for (field, value) in [("beam.gamma1", self.gamma1), ("beam.gamma2", self.gamma2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(field, format!("must be nonnegative, got {value}")));
            }
        }
        if let XiLocation::Fraction { den, .. } = self.xi {
            if den == 0 {
                return Err(invalid("xi.den", "zero denominator"));
            }
        }
        let x = self.xi_position();
        if !(x > 0.0 && x < self.ell) {
            return Err(invalid("xi", format!("must lie in (0, {}), got {x}", self.ell)));
        }
        Ok(())
    }

    pub fn xi_position(&self) -> f64 {
        self.xi.position(self.ell)
    }
}

/// The tip body at `x = ℓ`: `ε v_tt + ε v_t + ε v + S(ℓ,t) = traction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipParams {
    pub epsilon: f64,
    /// Hybrid model when set; otherwise `S(ℓ,t)` is balanced by the contact
    /// traction alone.
    pub enabled: bool,
    /// Drops the `ε v_t` term, which makes a tip-on run conservative.
    pub damping_on: bool,
}

impl TipParams {
    pub fn disabled() -> Self {
        TipParams {
            epsilon: 0.0,
            enabled: false,
            damping_on: false,
        }
    }

    pub fn hybrid(epsilon: f64) -> Self {
        TipParams {
            epsilon,
            enabled: true,
            damping_on: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid(
                "tip.epsilon",
                format!("must be positive when the tip is enabled, got {}", self.epsilon),
            ));
        }
        Ok(())
    }

    pub(crate) fn mass(&self) -> f64 {
        if self.enabled {
            self.epsilon
        } else {
            0.0
        }
    }

    pub(crate) fn stiffness(&self) -> f64 {
        self.mass()
    }

    pub(crate) fn damping(&self) -> f64 {
        if self.enabled && self.damping_on {
            self.epsilon
        } else {
            0.0
        }
    }
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Contact law acting on the tip displacement `v = φ(ℓ,t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ContactLaw {
    #[default]
    NoContact,
    /// `S_c = −d₂[(v−g_hi)⁺]^p + d₁[(g_lo−v)⁺]^p`.
    NormalCompliance {
        d1: f64,
        d2: f64,
        p: u8,
        g_lo: f64,
        g_hi: f64,
    },
    /// `S_c = −(v−g_hi)⁺/ε + (g_lo−v)⁺/ε`, the penalized Signorini condition.
    SignoriniPenalty { eps_pen: f64, g_lo: f64, g_hi: f64 },
}

impl ContactLaw {
    pub fn validate(&self) -> Result<()> {
        let check_stops = |g_lo: f64, g_hi: f64| {
            if !(g_lo < 0.0 && 0.0 < g_hi) {
                return Err(invalid(
                    "contact.g_lo/g_hi",
                    format!("stops must satisfy g_lo < 0 < g_hi, got [{g_lo}, {g_hi}]"),
                ));
            }
            Ok(())
        };
        match *self {
            ContactLaw::NoContact => Ok(()),
            ContactLaw::NormalCompliance {
                d1,
                d2,
                p,
                g_lo,
                g_hi,
            } => {
                if !(d1 > 0.0 && d1.is_finite()) {
                    return Err(invalid("contact.d1", format!("must be positive, got {d1}")));
                }
                if !(d2 > 0.0 && d2.is_finite()) {
                    return Err(invalid("contact.d2", format!("must be positive, got {d2}")));
                }
                if !(1..=3).contains(&p) {
                    return Err(invalid("contact.p", format!("must be 1, 2 or 3, got {p}")));
                }
                check_stops(g_lo, g_hi)
            }
            ContactLaw::SignoriniPenalty {
                eps_pen,
                g_lo,
                g_hi,
            } => {
                if !(eps_pen > 0.0 && eps_pen.is_finite()) {
                    return Err(invalid(
                        "contact.eps_pen",
                        format!("must be positive, got {eps_pen}"),
                    ));
                }
                check_stops(g_lo, g_hi)
            }
        }
    }

    /// `(g_lo, g_hi)` when an obstacle is present.
    pub fn stops(&self) -> Option<(f64, f64)> {
        match *self {
            ContactLaw::NoContact => None,
            ContactLaw::NormalCompliance { g_lo, g_hi, .. }
            | ContactLaw::SignoriniPenalty { g_lo, g_hi, .. } => Some((g_lo, g_hi)),
        }
    }

    /// Lower/upper coefficients and exponent, with the penalty law written
    /// as linear compliance of stiffness `1/ε`.
    fn branches(&self) -> Option<(f64, f64, i32, f64, f64)> {
        match *self {
            ContactLaw::NoContact => None,
            ContactLaw::NormalCompliance {
                d1,
                d2,
                p,
                g_lo,
                g_hi,
            } => Some((d1, d2, p as i32, g_lo, g_hi)),
            ContactLaw::SignoriniPenalty {
                eps_pen,
                g_lo,
                g_hi,
            } => Some((1.0 / eps_pen, 1.0 / eps_pen, 1, g_lo, g_hi)),
        }
    }

    /// Traction the obstacle adds to the tip force balance.
    pub fn traction(&self, v: f64) -> f64 {
        match self.branches() {
            None => 0.0,
            Some((d1, d2, p, g_lo, g_hi)) => {
                -d2 * pos(v - g_hi).powi(p) + d1 * pos(g_lo - v).powi(p)
            }
        }
    }

    /// Generalized derivative `dS_c/dv`; the active-branch slope, 0 at a kink.
    pub fn traction_slope(&self, v: f64) -> f64 {
        match self.branches() {
            None => 0.0,
            Some((d1, d2, p, g_lo, g_hi)) => {
                let pf = p as f64;
                let mut slope = 0.0;
                if v > g_hi {
                    slope -= d2 * pf * (v - g_hi).powi(p - 1);
                }
                if v < g_lo {
                    slope -= d1 * pf * (g_lo - v).powi(p - 1);
                }
                slope
            }
        }
    }

    /// Stored energy of the obstacle; `−d/dv` of it is [`ContactLaw::traction`].
    pub fn potential(&self, v: f64) -> f64 {
        match self.branches() {
            None => 0.0,
            Some((d1, d2, p, g_lo, g_hi)) => {
                let q = (p + 1) as f64;
                d2 / q * pos(v - g_hi).powi(p + 1) + d1 / q * pos(g_lo - v).powi(p + 1)
            }
        }
    }
}

pub fn contact_traction(v: f64, law: &ContactLaw) -> f64 {
    law.traction(v)
}

pub fn contact_potential(v: f64, law: &ContactLaw) -> f64 {
    law.potential(v)
}

/// Semilinear restoring force `F(s) = μ s |s|^α`, optionally truncated at
/// `|s| = R`, plus a constant load `offset` on the same equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceLaw {
    pub mu: f64,
    pub alpha: f64,
    pub cutoff: Option<f64>,
    /// Constant distributed load (the `F₀` of an absorbing-set experiment).
    /// It acts on the right-hand side and is not part of [`ForceLaw::force`].
    pub offset: f64,
}

impl Default for ForceLaw {
    fn default() -> Self {
        ForceLaw::zero()
    }
}

impl ForceLaw {
    pub fn zero() -> Self {
        ForceLaw {
            mu: 0.0,
            alpha: 0.0,
            cutoff: None,
            offset: 0.0,
        }
    }

    pub fn power(mu: f64, alpha: f64) -> Self {
        ForceLaw {
            mu,
            alpha,
            ..ForceLaw::zero()
        }
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(invalid(field, format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid(
                field,
                format!("alpha must be nonnegative, got {}", self.alpha),
            ));
        }
        if let Some(r) = self.cutoff {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(field, format!("cutoff must be positive, got {r}")));
            }
        }
        if !self.offset.is_finite() {
            return Err(invalid(field, "offset must be finite"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.mu == 0.0
    }

    fn clipped(&self, s: f64) -> bool {
        matches!(self.cutoff, Some(r) if s.abs() > r)
    }

    pub fn force(&self, s: f64) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        match self.cutoff {
            Some(r) if s.abs() > r => self.mu * s * r.powf(self.alpha),
            _ => self.mu * s * s.abs().powf(self.alpha),
        }
    }

    pub fn slope(&self, s: f64) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        match self.cutoff {
            Some(r) if s.abs() > r => self.mu * r.powf(self.alpha),
            _ => self.mu * (self.alpha + 1.0) * s.abs().powf(self.alpha),
        }
    }

    /// `∫₀ˢ F`.
    pub fn primitive(&self, s: f64) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        let a2 = self.alpha + 2.0;
        if self.clipped(s) {
            let r = self.cutoff.unwrap_or(f64::INFINITY);
            self.mu * r.powf(a2) / a2 + 0.5 * self.mu * r.powf(self.alpha) * (s * s - r * r)
        } else {
            self.mu * s.abs().powf(a2) / a2
        }
    }
}

pub fn body_force(s: f64, law: &ForceLaw) -> f64 {
    law.force(s)
}

/// Multiplier `q(x) = (e^{nx} − 1)/n` and its mirror `q₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierSpec {
    pub n: u32,
    pub ell: f64,
}

impl MultiplierSpec {
    /// `n = ⌈8/ℓ⌉`.
    pub fn for_length(ell: f64) -> Self {
        MultiplierSpec {
            n: ((8.0 / ell).ceil() as u32).max(1),
            ell,
        }
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("multiplier.n", "must be positive"));
        }
        if !(0.0..=self.ell).contains(&x) {
            return Err(Error::OutOfDomain { x, ell: self.ell });
        }
        Ok(())
    }

    /// `(q(x), q'(x))`.
    pub fn q(&self, x: f64) -> Result<(f64, f64)> {
        self.check(x)?;
        let n = self.n as f64;
        Ok(((n * x).exp_m1() / n, (n * x).exp()))
    }

    /// `(q₀(x), q₀'(x))` with `q₀(x) = (e^{−nx} − e^{−nℓ})/n`.
    pub fn q0(&self, x: f64) -> Result<(f64, f64)> {
        self.check(x)?;
        let n = self.n as f64;
        Ok((
            ((-n * x).exp() - (-n * self.ell).exp()) / n,
            -(-n * x).exp(),
        ))
    }
}

pub fn multiplier_q(x: f64, spec: &MultiplierSpec) -> Result<(f64, f64)> {
    spec.q(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XiVerdict {
    Stabilizing,
    /// `ξ/ℓ = 2n/(2m+1)` in lowest terms.
    Excluded,
    /// No exact fraction given; the criterion only applies to rationals.
    IrrationalInput,
}

impl XiVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            XiVerdict::Stabilizing => "stabilizing",
            XiVerdict::Excluded => "excluded",
            XiVerdict::IrrationalInput => "irrational-input",
        }
    }
}

/// Classifies a damper location by the arithmetic of `ξ/ℓ`.
pub fn is_stabilizing_xi(xi: &XiLocation) -> Result<XiVerdict> {
    match *xi {
        XiLocation::Real(_) => Ok(XiVerdict::IrrationalInput),
        XiLocation::Fraction { num, den } => {
            if num <= 0 || den <= 0 {
                return Err(invalid(
                    "xi",
                    format!("fraction must be positive, got {num}/{den}"),
                ));
            }
            let g = num.gcd(&den);
            let (num, den) = (num / g, den / g);
            if num.is_even() && den.is_odd() {
                Ok(XiVerdict::Excluded)
            } else {
                Ok(XiVerdict::Stabilizing)
            }
        }
    }
}
