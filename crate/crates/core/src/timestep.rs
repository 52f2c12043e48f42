//! Implicit midpoint integration of the semi-discrete beam.
//!
//! With `q` the free displacements and `w` the free velocities, one step
//! solves for `δ = q₁ − q₀`:
//!
//! ```text
//! M (w₁ − w₀)/dt + D w_m + K q_m + ∇̄Π(q₀, q₁) = f,     w_m = δ/dt,
//! ```
//!
//! where `Π` collects the nodal body-force primitives and the obstacle
//! potential. Every nonlinearity acts on a single dof, so `∇̄Π` is the
//! scalar difference quotient `(Π(b) − Π(a))/(b − a)` per dof. That choice
//! makes `E₁ − E₀ + dt·w_mᵀDw_m` equal to `w_mᵀ` times the Newton residual,
//! so the energy identity holds to the solver tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::band::{BandCholesky, SymBand};
use crate::diagnostics::{energy, EnergyReport};
use crate::discretize::SemiDiscreteSystem;
use crate::error::{invalid, Error, Result};
use crate::model::{ContactLaw, ForceLaw};

/// Full nodal fields; eliminated entries (`φ(0)`, `ψ(ℓ)` and their rates)
/// are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub psi_t: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(system: &SemiDiscreteSystem) -> Self {
        let n = system.mesh.ne() + 1;
        State {
            phi: vec![0.0; n],
            psi: vec![0.0; n],
            phi_t: vec![0.0; n],
            psi_t: vec![0.0; n],
            t: 0.0,
        }
    }

    /// Tip displacement `v = φ(ℓ)`.
    pub fn v(&self) -> f64 {
        *self.phi.last().unwrap_or(&0.0)
    }

    /// Tip velocity `V = φ_t(ℓ)`.
    pub fn v_t(&self) -> f64 {
        *self.phi_t.last().unwrap_or(&0.0)
    }

    pub fn displacement(&self, system: &SemiDiscreteSystem) -> Vec<f64> {
        system.pack(&self.phi, &self.psi)
    }

    pub fn velocity(&self, system: &SemiDiscreteSystem) -> Vec<f64> {
        system.pack(&self.phi_t, &self.psi_t)
    }

    pub fn from_free(system: &SemiDiscreteSystem, q: &[f64], w: &[f64], t: f64) -> Self {
        let mut s = State::zeros(system);
        system.unpack(q, &mut s.phi, &mut s.psi);
        system.unpack(w, &mut s.phi_t, &mut s.psi_t);
        s.t = t;
        s
    }

    pub fn is_zero(&self) -> bool {
        [&self.phi, &self.psi, &self.phi_t, &self.psi_t]
            .iter()
            .all(|v| v.iter().all(|&x| x == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub scheme: Scheme,
}

impl SchemeConfig {
    pub fn new(dt: f64) -> Self {
        SchemeConfig {
            dt,
            newton_tol: 1e-10,
            newton_max: 30,
            scheme: Scheme::ImplicitMidpoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("scheme.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return Err(invalid(
                "scheme.newton_tol",
                format!("must be positive, got {}", self.newton_tol),
            ));
        }
        if self.newton_max == 0 {
            return Err(invalid("scheme.newton_max", "must be at least 1"));
        }
        Ok(())
    }
}

/// Nonlinear data of a run: obstacle at the tip, `F` on the `φ` equation and
/// `G` on the `ψ` equation. The `offset` of each force law is a constant
/// distributed load on the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Laws {
    pub contact: ContactLaw,
    pub f: ForceLaw,
    pub g: ForceLaw,
}

impl Laws {
    pub fn linear() -> Self {
        Laws::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.contact.validate()?;
        self.f.validate("forces.f")?;
        self.g.validate("forces.g")
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.contact, ContactLaw::NoContact) && self.f.is_zero() && self.g.is_zero()
    }
}

/// Per-dof nonlinear potential: body-force weight and law, plus the obstacle
/// on the tip dof.
#[derive(Debug, Clone, Copy)]
struct NodalPotential {
    weight: f64,
    law: ForceLaw,
    contact: Option<ContactLaw>,
}

impl NodalPotential {
    fn value(&self, s: f64) -> f64 {
        let mut p = self.weight * self.law.primitive(s);
        if let Some(c) = &self.contact {
            p += c.potential(s);
        }
        p
    }

    fn grad(&self, s: f64) -> f64 {
        let mut g = self.weight * self.law.force(s);
        if let Some(c) = &self.contact {
            g -= c.traction(s);
        }
        g
    }

    fn hess(&self, s: f64) -> f64 {
        let mut h = self.weight * self.law.slope(s);
        if let Some(c) = &self.contact {
            h -= c.traction_slope(s);
        }
        h
    }

    /// Difference quotient and its derivative with respect to `b`.
    fn discrete_gradient(&self, a: f64, b: f64) -> (f64, f64) {
        let d = b - a;
        if d.abs() <= 1e-10 * 1f64.max(a.abs()).max(b.abs()) {
            let m = 0.5 * (a + b);
            return (self.grad(m), 0.5 * self.hess(m));
        }
        let g = (self.value(b) - self.value(a)) / d;
        (g, ((self.grad(b) - g) / d).max(0.0))
    }
}

fn nodal_potentials(system: &SemiDiscreteSystem, laws: &Laws) -> Vec<(usize, NodalPotential)> {
    let n = system.mesh.ne();
    let mut out = Vec::new();
    let tip = system.tip_dof();
    for i in 0..=n {
        let w = system.node_weights[i];
        if let Some(f) = system.free_index(2 * i) {
            let contact = (f == tip && !matches!(laws.contact, ContactLaw::NoContact))
                .then_some(laws.contact);
            if !laws.f.is_zero() || contact.is_some() {
                out.push((
                    f,
                    NodalPotential {
                        weight: w,
                        law: laws.f,
                        contact,
                    },
                ));
            }
        }
        if !laws.g.is_zero() {
            if let Some(f) = system.free_index(2 * i + 1) {
                out.push((
                    f,
                    NodalPotential {
                        weight: w,
                        law: laws.g,
                        contact: None,
                    },
                ));
            }
        }
    }
    out
}

/// Lumped right-hand side of the constant loads.
pub fn load_vector(system: &SemiDiscreteSystem, laws: &Laws) -> Vec<f64> {
    let phi: Vec<f64> = system.node_weights.iter().map(|w| w * laws.f.offset).collect();
    let psi: Vec<f64> = system.node_weights.iter().map(|w| w * laws.g.offset).collect();
    system.pack(&phi, &psi)
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub iterations: usize,
    /// Final value of the convergence measure.
    pub residual: f64,
    /// `w_mᵀ D w_m`, the discrete dissipation rate.
    pub dissipation_rate: f64,
    /// Midpoint acceleration of the tip dof.
    pub tip_acceleration: f64,
    pub bisected: bool,
}

/// `M + dt²/4·K + dt/2·D`, the Newton matrix of `dt·R` up to the factor
/// `2/dt`.
fn newton_base(system: &SemiDiscreteSystem, dt: f64) -> SymBand {
    system
        .mass
        .combined(0.25 * dt * dt, &system.stiffness)
        .combined(0.5 * dt, &system.damping)
}

/// Reusable per-run data: the linear part of the Newton matrix only depends
/// on `dt`.
/// `(delta, iterations, measure)` on convergence, the last measure otherwise.
type NewtonOutcome = std::result::Result<(Vec<f64>, usize, f64), f64>;

pub struct Stepper<'a> {
    system: &'a SemiDiscreteSystem,
    cfg: SchemeConfig,
    potentials: Vec<(usize, NodalPotential)>,
    load: Vec<f64>,
    linear_part: SymBand,
    linear_factor: Option<BandCholesky>,
    half: Option<Box<Stepper<'a>>>,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a SemiDiscreteSystem, laws: &Laws, cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        laws.validate()?;
        let dt = cfg.dt;
        let linear_part = newton_base(system, dt);
        let potentials = nodal_potentials(system, laws);
        let linear_factor = if potentials.is_empty() {
            Some(linear_part.cholesky().ok_or(Error::MassNotDefinite)?)
        } else {
            None
        };
        Ok(Stepper {
            system,
            cfg,
            potentials,
            load: load_vector(system, laws),
            linear_part,
            linear_factor,
            half: None,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// `dt · R(δ)`.
    fn residual(&self, q0: &[f64], w0: &[f64], delta: &[f64], out: &mut [f64]) {
        let sys = self.system;
        let dt = self.cfg.dt;
        let n = q0.len();
        let mut md = vec![0.0; n];
        let mut mw = vec![0.0; n];
        let mut kx = vec![0.0; n];
        let mut dd = vec![0.0; n];
        sys.mass.mul_vec(delta, &mut md);
        sys.mass.mul_vec(w0, &mut mw);
        let qm: Vec<f64> = q0.iter().zip(delta).map(|(q, d)| q + 0.5 * d).collect();
        sys.stiffness.mul_vec(&qm, &mut kx);
        sys.damping.mul_vec(delta, &mut dd);
        for i in 0..n {
            out[i] = 2.0 / dt * md[i] - 2.0 * mw[i] + dt * kx[i] + dd[i] - dt * self.load[i];
        }
        for (i, p) in &self.potentials {
            let (g, _) = p.discrete_gradient(q0[*i], q0[*i] + delta[*i]);
            out[*i] += dt * g;
        }
    }

    fn measure(&self, delta: &[f64], r: &[f64]) -> f64 {
        let dt = self.cfg.dt;
        let inf = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let energy: f64 = delta.iter().zip(r).map(|(d, x)| (d / dt).abs() * x.abs()).sum();
        inf.max(energy)
    }

    fn solve(&self, q0: &[f64], delta: &[f64], rhs: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.linear_factor {
            f.solve_in_place(rhs);
            return Ok(());
        }
        let dt = self.cfg.dt;
        let mut j = self.linear_part.clone();
        j.scale(2.0 / dt);
        for (i, p) in &self.potentials {
            let (_, dg) = p.discrete_gradient(q0[*i], q0[*i] + delta[*i]);
            j.add(*i, *i, dt * dg);
        }
        let f = j.cholesky().ok_or(Error::MassNotDefinite)?;
        f.solve_in_place(rhs);
        Ok(())
    }

    /// Newton solve for one step of size `dt`; the last convergence measure
    /// when it stalls.
    fn newton(&self, q0: &[f64], w0: &[f64]) -> Result<NewtonOutcome> {
        let n = q0.len();
        let dt = self.cfg.dt;
        let mut delta: Vec<f64> = w0.iter().map(|w| dt * w).collect();
        let mut r = vec![0.0; n];
        self.residual(q0, w0, &delta, &mut r);
        let mut merit = norm2(&r);
        let mut measure = self.measure(&delta, &r);
        let mut trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        for it in 0..self.cfg.newton_max {
            if measure <= self.cfg.newton_tol {
                return Ok(Ok((delta, it, measure)));
            }
            let mut step: Vec<f64> = r.iter().map(|x| -x).collect();
            self.solve(q0, &delta, &mut step)?;
            // The linear factor solves with the matrix scaled by dt/2.
            if self.linear_factor.is_some() {
                step.iter_mut().for_each(|s| *s *= 0.5 * dt);
            }
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                for k in 0..n {
                    trial[k] = delta[k] + lambda * step[k];
                }
                self.residual(q0, w0, &trial, &mut r_trial);
                let m = norm2(&r_trial);
                if m < merit || lambda < 1e-8 || m == 0.0 {
                    accepted = m.is_finite();
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Ok(Err(measure));
            }
            std::mem::swap(&mut delta, &mut trial);
            std::mem::swap(&mut r, &mut r_trial);
            merit = norm2(&r);
            measure = self.measure(&delta, &r);
        }
        if measure <= self.cfg.newton_tol {
            Ok(Ok((delta, self.cfg.newton_max, measure)))
        } else {
            Ok(Err(measure))
        }
    }

    fn half_stepper(&mut self) -> Result<&Stepper<'a>> {
        if self.half.is_none() {
            let mut cfg = self.cfg;
            cfg.dt *= 0.5;
            let mut half = Stepper {
                system: self.system,
                cfg,
                potentials: self.potentials.clone(),
                load: self.load.clone(),
                linear_part: newton_base(self.system, cfg.dt),
                linear_factor: None,
                half: None,
            };
            if half.potentials.is_empty() {
                half.linear_factor = Some(half.linear_part.cholesky().ok_or(Error::MassNotDefinite)?);
            }
            self.half = Some(Box::new(half));
        }
        Ok(self.half.as_deref().unwrap())
    }

    fn advance(&self, q0: &[f64], w0: &[f64], delta: &[f64]) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let dt = self.cfg.dt;
        let wm: Vec<f64> = delta.iter().map(|d| d / dt).collect();
        let q1: Vec<f64> = q0.iter().zip(delta).map(|(q, d)| q + d).collect();
        let w1: Vec<f64> = wm.iter().zip(w0).map(|(m, w)| 2.0 * m - w).collect();
        let rate = self.system.damping.quad(&wm);
        let tip = self.system.tip_dof();
        let acc = (w1[tip] - w0[tip]) / dt;
        (q1, w1, rate, acc)
    }

    /// Advances the free vectors by one step; bisects once on failure.
    pub fn step_free(&mut self, q0: &[f64], w0: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>, StepInfo)> {
        if let Ok((delta, iterations, residual)) = self.newton(q0, w0)? {
            let (q1, w1, rate, acc) = self.advance(q0, w0, &delta);
            return Ok((
                q1,
                w1,
                StepInfo {
                    iterations,
                    residual,
                    dissipation_rate: rate,
                    tip_acceleration: acc,
                    bisected: false,
                },
            ));
        }
        let dt = self.cfg.dt;
        let max = self.cfg.newton_max;
        let half = self.half_stepper()?;
        let fail = |residual: f64| Error::NewtonDivergence {
            t,
            residual,
            iterations: max,
        };
        let (d1, it1, r1) = half.newton(q0, w0)?.map_err(fail)?;
        let (qa, wa, rate_a, _) = half.advance(q0, w0, &d1);
        let (d2, it2, r2) = half.newton(&qa, &wa)?.map_err(fail)?;
        let (q1, w1, rate_b, _) = half.advance(&qa, &wa, &d2);
        let tip = self.system.tip_dof();
        Ok((
            q1,
            w1.clone(),
            StepInfo {
                iterations: it1 + it2,
                residual: r1 + r2,
                dissipation_rate: 0.5 * (rate_a + rate_b),
                tip_acceleration: (w1[tip] - w0[tip]) / dt,
                bisected: true,
            },
        ))
    }

    pub fn step_state(&mut self, state: &State) -> Result<(State, StepInfo)> {
        let q0 = state.displacement(self.system);
        let w0 = state.velocity(self.system);
        let (q1, w1, info) = self.step_free(&q0, &w0, state.t)?;
        Ok((
            State::from_free(self.system, &q1, &w1, state.t + self.cfg.dt),
            info,
        ))
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn step(
    system: &SemiDiscreteSystem,
    state: &State,
    laws: &Laws,
    cfg: &SchemeConfig,
) -> Result<State> {
    system.check_state(state)?;
    let mut stepper = Stepper::new(system, laws, *cfg)?;
    Ok(stepper.step_state(state)?.0)
}

/// `L₁ − L₀ + dt·w_mᵀDw_m` with `L` the Lyapunov functional.
pub fn energy_balance_residual(
    system: &SemiDiscreteSystem,
    state_k: &State,
    state_k1: &State,
    laws: &Laws,
    dt: f64,
) -> Result<f64> {
    system.check_state(state_k)?;
    system.check_state(state_k1)?;
    let e0 = energy(system, state_k, laws);
    let e1 = energy(system, state_k1, laws);
    let q0 = state_k.displacement(system);
    let q1 = state_k1.displacement(system);
    let wm: Vec<f64> = q0.iter().zip(&q1).map(|(a, b)| (b - a) / dt).collect();
    Ok(e1.lyapunov - e0.lyapunov + dt * system.damping.quad(&wm))
}

/// Initial-data library.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// `φ = A sin(a_m x)`, `ψ = B cos(a_m x)` with `a_m = (2m+1)π/(2ℓ)`,
    /// placed in the displacement or in the velocity field.
    Mode {
        m: u32,
        phi_amp: f64,
        psi_amp: f64,
        velocity: bool,
    },
    /// Gaussian displacement bump in `φ`, shifted so that `φ(0) = 0`.
    Pulse {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    /// Uniform sample from the energy-norm ball of radius `radius` spanned by
    /// the first `modes` shape pairs in displacement and velocity.
    RandomBall { radius: f64, modes: u32, seed: u64 },
}

fn mode_shape(system: &SemiDiscreteSystem, m: u32, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let ell = system.beam.ell;
    let k = (2 * m + 1) as f64 * std::f64::consts::PI / (2.0 * ell);
    let phi = system.mesh.nodes.iter().map(|x| a * (k * x).sin()).collect();
    let mut psi: Vec<f64> = system.mesh.nodes.iter().map(|x| b * (k * x).cos()).collect();
    *psi.last_mut().unwrap() = 0.0;
    (phi, psi)
}

/// `sqrt(qᵀKq + wᵀMw)`.
pub fn energy_norm(system: &SemiDiscreteSystem, state: &State) -> f64 {
    let q = state.displacement(system);
    let w = state.velocity(system);
    (system.stiffness.quad(&q) + system.mass.quad(&w)).max(0.0).sqrt()
}

pub fn initial_state(system: &SemiDiscreteSystem, data: &InitialData) -> Result<State> {
    let mut s = State::zeros(system);
    match *data {
        InitialData::Zero => {}
        InitialData::Mode {
            m,
            phi_amp,
            psi_amp,
            velocity,
        } => {
            let (phi, psi) = mode_shape(system, m, phi_amp, psi_amp);
            if velocity {
                s.phi_t = phi;
                s.psi_t = psi;
            } else {
                s.phi = phi;
                s.psi = psi;
            }
        }
        InitialData::Pulse {
            center,
            width,
            amplitude,
        } => {
            if !(width > 0.0) {
                return Err(invalid("initial.width", "must be positive"));
            }
            let g = |x: f64| amplitude * (-((x - center) / width).powi(2)).exp();
            let g0 = g(0.0);
            s.phi = system.mesh.nodes.iter().map(|&x| g(x) - g0).collect();
        }
        InitialData::RandomBall {
            radius,
            modes,
            seed,
        } => {
            if !(radius >= 0.0) {
                return Err(invalid("initial.radius", "must be nonnegative"));
            }
            if modes == 0 {
                return Err(invalid("initial.modes", "must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..4 * modes as usize)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let u: f64 = rand::Rng::random(&mut rng);
            for m in 0..modes {
                let c = &coeffs[4 * m as usize..4 * m as usize + 4];
                let (p, q) = mode_shape(system, m, c[0], c[1]);
                let (pt, qt) = mode_shape(system, m, c[2], c[3]);
                for i in 0..s.phi.len() {
                    s.phi[i] += p[i];
                    s.psi[i] += q[i];
                    s.phi_t[i] += pt[i];
                    s.psi_t[i] += qt[i];
                }
            }
            let norm = energy_norm(system, &s);
            let target = radius * u.powf(1.0 / (4 * modes) as f64);
            let scale = if norm > 0.0 { target / norm } else { 0.0 };
            for v in [&mut s.phi, &mut s.psi, &mut s.phi_t, &mut s.psi_t] {
                v.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    Ok(s)
}

/// One recorded sample of a run.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub energy: EnergyReport,
    pub v: f64,
    pub v_t: f64,
    /// Boundary shear force at the tip from the tip force balance.
    pub s_ell: f64,
    /// Midpoint dissipation rate of the last step before this sample.
    pub dissipation_rate: f64,
    /// Largest per-step energy-balance residual since the previous sample.
    pub balance_residual: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Recorded states, present when requested in [`RunOptions`].
    pub states: Vec<State>,
    pub dt: f64,
    pub stride: usize,
    /// Time at which the solver gave up, if it did.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy.e_total).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Record every `stride`-th step.
    pub stride: usize,
    pub keep_states: bool,
    /// Stop at the first solver failure and keep the partial trajectory
    /// instead of returning the error.
    pub keep_partial: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stride: 1,
            keep_states: false,
            keep_partial: false,
        }
    }
}

/// Complete problem description for a run.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub system: &'a SemiDiscreteSystem,
    pub laws: Laws,
    pub initial: State,
}

fn tip_shear(system: &SemiDiscreteSystem, laws: &Laws, state: &State, acc: f64) -> f64 {
    let v = state.v();
    let mut s = laws.contact.traction(v);
    if system.tip.enabled {
        let eps = system.tip.epsilon;
        let damp = if system.tip.damping_on { state.v_t() } else { 0.0 };
        s -= eps * (acc + damp + v);
    }
    s
}

/// Runs to `t_final`, calling `observer` after every recorded sample.
pub fn simulate<F>(
    problem: &Problem,
    t_final: f64,
    cfg: &SchemeConfig,
    opts: &RunOptions,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&Sample, &State),
{
    let system = problem.system;
    let laws = &problem.laws;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(invalid("run.t_final", format!("must be nonnegative, got {t_final}")));
    }
    if opts.stride == 0 {
        return Err(invalid("run.stride", "must be at least 1"));
    }
    system.check_state(&problem.initial)?;
    let mut stepper = Stepper::new(system, laws, *cfg)?;
    let dt = cfg.dt;
    let n_steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;

    let mut state = problem.initial.clone();
    let mut report = energy(system, &state, laws);
    let mut sample = Sample {
        t: state.t,
        energy: report.clone(),
        v: state.v(),
        v_t: state.v_t(),
        s_ell: tip_shear(system, laws, &state, 0.0),
        dissipation_rate: 0.0,
        balance_residual: 0.0,
        newton_iterations: 0,
    };
    observer(&sample, &state);
    let mut traj = Trajectory {
        samples: vec![sample],
        states: if opts.keep_states {
            vec![state.clone()]
        } else {
            Vec::new()
        },
        dt,
        stride: opts.stride,
        failure: None,
    };

    let mut dissipated = 0.0;
    let mut worst: f64 = 0.0;
    let mut q = state.displacement(system);
    let mut w = state.velocity(system);
    let t0 = state.t;
    for k in 1..=n_steps {
        let t_prev = t0 + (k - 1) as f64 * dt;
        let (q1, w1, info) = match stepper.step_free(&q, &w, t_prev) {
            Ok(r) => r,
            Err(e) if opts.keep_partial => {
                traj.failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        q = q1;
        w = w1;
        state = State::from_free(system, &q, &w, t0 + k as f64 * dt);
        let mut next = energy(system, &state, laws);
        dissipated += dt * info.dissipation_rate;
        next.dissipated_cum = dissipated;
        let balance = next.lyapunov - report.lyapunov + dt * info.dissipation_rate;
        if balance.abs() > worst.abs() {
            worst = balance;
        }
        report = next;
        if k % opts.stride == 0 || k == n_steps {
            sample = Sample {
                t: state.t,
                energy: report.clone(),
                v: state.v(),
                v_t: state.v_t(),
                s_ell: tip_shear(system, laws, &state, info.tip_acceleration),
                dissipation_rate: info.dissipation_rate,
                balance_residual: worst,
                newton_iterations: info.iterations,
            };
            worst = 0.0;
            observer(&sample, &state);
            if opts.keep_states {
                traj.states.push(state.clone());
            }
            traj.samples.push(sample);
        }
    }
    Ok(traj)
}
