//! Energy and observability functionals, decay fits, contact reports and
//! absorbing-set probes.

use rayon::prelude::*;

use crate::discretize::{recover_stress_sides, SemiDiscreteSystem};
use crate::error::{Error, Result};
use crate::model::MultiplierSpec;
use crate::timestep::{energy_norm, simulate, Laws, Problem, RunOptions, SchemeConfig, State, Trajectory};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyReport {
    /// Sum of the nonnegative parts below.
    pub e_total: f64,
    pub kinetic: f64,
    pub potential_shear: f64,
    pub potential_bend: f64,
    /// Obstacle potential at the tip.
    pub n_p: f64,
    /// `ε(v² + V²)/2` when the tip is enabled.
    pub tip_energy: f64,
    pub fhat_int: f64,
    pub ghat_int: f64,
    /// Work potential of the constant loads, `∫F₀φ + ∫G₀ψ`.
    pub load_potential: f64,
    /// `e_total − load_potential`; the quantity the dissipation identity
    /// balances.
    pub lyapunov: f64,
    pub dissipated_cum: f64,
}

pub fn energy(system: &SemiDiscreteSystem, state: &State, laws: &Laws) -> EnergyReport {
    let (m1, m2) = system.mass_forms(&state.phi_t, &state.psi_t);
    let (shear, bend) = system.stiffness_forms(&state.phi, &state.psi);
    let tip_energy = if system.tip.enabled {
        0.5 * system.tip.epsilon * (state.v() * state.v() + state.v_t() * state.v_t())
    } else {
        0.0
    };
    let w = &system.node_weights;
    let mut fhat = 0.0;
    let mut ghat = 0.0;
    let mut load = 0.0;
    for i in 0..w.len() {
        fhat += w[i] * laws.f.primitive(state.phi[i]);
        ghat += w[i] * laws.g.primitive(state.psi[i]);
        load += w[i] * (laws.f.offset * state.phi[i] + laws.g.offset * state.psi[i]);
    }
    let n_p = laws.contact.potential(state.v());
    let kinetic = 0.5 * (m1 + m2);
    let e_total = kinetic + 0.5 * shear + 0.5 * bend + n_p + tip_energy + fhat + ghat;
    EnergyReport {
        e_total,
        kinetic,
        potential_shear: 0.5 * shear,
        potential_bend: 0.5 * bend,
        n_p,
        tip_energy,
        fhat_int: fhat,
        ghat_int: ghat,
        load_potential: load,
        lyapunov: e_total - load,
        dissipated_cum: 0.0,
    }
}

/// `sup_t E(t) / E(0)`.
pub fn energy_growth_ratio(traj: &Trajectory) -> Result<f64> {
    let first = traj.samples.first().ok_or(Error::EmptyTrajectory)?;
    let e0 = first.energy.e_total;
    let sup = traj
        .samples
        .iter()
        .map(|s| s.energy.e_total)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(if e0 > 0.0 { sup / e0 } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Rate of the energy, `E ≈ c·e^{−γ̂ t}`.
    pub gamma_hat: f64,
    /// Rate of the state norm, half the energy rate.
    pub gamma_state: f64,
    pub c_hat: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub samples: usize,
}

const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares line through `(t, ln E)` on `t ∈ [window.0, window.1]`.
pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, e)| (*t, *e))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            found: pts.len(),
            required: MIN_FIT_SAMPLES,
        });
    }
    if let Some(&(t, e)) = pts.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::NonPositiveEnergy { t, value: e });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(t, e) in &pts {
        let dx = t - tm;
        let dy = e.ln() - ym;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ym - slope * tm;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        gamma_hat: -slope,
        gamma_state: -0.5 * slope,
        c_hat: intercept.exp(),
        window,
        r2,
        samples: pts.len(),
    })
}

/// Fit over the trailing `fraction` of the run; the default window keeps
/// the last 60%.
pub fn fit_decay_tail(traj: &Trajectory, fraction: f64) -> Result<DecayFit> {
    let times = traj.times();
    let values = traj.energies();
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(Error::EmptyTrajectory);
    };
    let window = (t1 - fraction * (t1 - t0), t1);
    fit_decay(&times, &values, window)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservabilityReport {
    pub times: Vec<f64>,
    pub i_ell: Vec<f64>,
    pub i_0: Vec<f64>,
    /// `ℒ(t)` with the multiplier `q`.
    pub l_series: Vec<f64>,
    /// `−ℒ(t)` with the multiplier `q₀`.
    pub l0_series: Vec<f64>,
    /// `ℒ(t) / ∫ℐ dx`, NaN where `∫ℐ dx = 0`.
    pub equivalence_ratio: Vec<f64>,
    /// `|∫₀ᵗ q(ℓ)ℐ(ℓ) − ∫₀ᵗ ℒ|` at every sample.
    pub defect_ell_series: Vec<f64>,
    pub defect_0_series: Vec<f64>,
    pub defect_ell: f64,
    pub defect_0: f64,
    /// `(defect_ell, defect_0) / E(0)`, or zero when `E(0) = 0`.
    pub ratio_to_e0: (f64, f64),
    /// Smallest and largest equivalence ratio seen.
    pub c0: f64,
    pub c1: f64,
}

/// `ℐ(x,t) = ρ₂b ψ_t² + M² + ρ₁κ φ_t² + S²`.
fn point_functional(system: &SemiDiscreteSystem, phi_t: f64, psi_t: f64, s: f64, m: f64) -> f64 {
    let beam = &system.beam;
    beam.rho2 * beam.b * psi_t * psi_t + m * m + beam.rho1 * beam.k * phi_t * phi_t + s * s
}

/// `∫ [q_x ℐ − q(ρ₁κ φ_t ψ_t − S M)] dx` and `∫ ℐ dx`, two-point Gauss per
/// element.
fn multiplier_integrals<Q: Fn(f64) -> (f64, f64)>(
    system: &SemiDiscreteSystem,
    state: &State,
    q: Q,
) -> (f64, f64) {
    let beam = &system.beam;
    let mesh = &system.mesh;
    let g = 0.5 / 3f64.sqrt();
    let mut l = 0.0;
    let mut total = 0.0;
    for e in 0..mesh.ne() {
        let h = mesh.h(e);
        let phi_x = (state.phi[e + 1] - state.phi[e]) / h;
        let m = beam.b * (state.psi[e + 1] - state.psi[e]) / h;
        for t in [0.5 - g, 0.5 + g] {
            let x = mesh.nodes[e] + t * h;
            let lerp = |v: &[f64]| (1.0 - t) * v[e] + t * v[e + 1];
            let phi_t = lerp(&state.phi_t);
            let psi_t = lerp(&state.psi_t);
            let s = beam.k * (phi_x + lerp(&state.psi));
            let i = point_functional(system, phi_t, psi_t, s, m);
            let (qv, qx) = q(x);
            l += 0.5 * h * (qx * i - qv * (beam.rho1 * beam.k * phi_t * psi_t - s * m));
            total += 0.5 * h * i;
        }
    }
    (l, total)
}

fn boundary_functional(system: &SemiDiscreteSystem, state: &State, at_end: bool) -> Result<f64> {
    let ell = system.mesh.ell();
    let (x, idx) = if at_end {
        (ell, state.phi.len() - 1)
    } else {
        (0.0, 0)
    };
    let (left, right) = recover_stress_sides(system, state, x)?;
    let (s, m) = if at_end { left } else { right };
    Ok(point_functional(system, state.phi_t[idx], state.psi_t[idx], s, m))
}

fn trapezoid_cumulative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..t.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        out.push(acc);
    }
    out
}

/// Needs the recorded states of the trajectory.
pub fn observability(
    system: &SemiDiscreteSystem,
    traj: &Trajectory,
    spec: &MultiplierSpec,
) -> Result<ObservabilityReport> {
    if traj.states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let ell = system.mesh.ell();
    let spec = MultiplierSpec { n: spec.n, ell };
    let n = traj.states.len();
    let mut rep = ObservabilityReport {
        times: Vec::with_capacity(n),
        ..Default::default()
    };
    let (q_ell, _) = spec.q(ell)?;
    let (q0_zero, _) = spec.q0(0.0)?;
    let mut c0 = f64::INFINITY;
    let mut c1 = f64::NEG_INFINITY;
    for state in &traj.states {
        system.check_state(state)?;
        rep.times.push(state.t);
        rep.i_ell.push(boundary_functional(system, state, true)?);
        rep.i_0.push(boundary_functional(system, state, false)?);
        let (l, total) = multiplier_integrals(system, state, |x| spec.q(x.clamp(0.0, ell)).unwrap());
        let (l0, _) = multiplier_integrals(system, state, |x| spec.q0(x.clamp(0.0, ell)).unwrap());
        rep.l_series.push(l);
        rep.l0_series.push(-l0);
        if total > 0.0 {
            let r = l / total;
            c0 = c0.min(r);
            c1 = c1.max(r);
            rep.equivalence_ratio.push(r);
        } else {
            rep.equivalence_ratio.push(f64::NAN);
        }
    }
    let bnd_ell: Vec<f64> = rep.i_ell.iter().map(|i| q_ell * i).collect();
    let bnd_0: Vec<f64> = rep.i_0.iter().map(|i| q0_zero * i).collect();
    let a = trapezoid_cumulative(&rep.times, &bnd_ell);
    let b = trapezoid_cumulative(&rep.times, &rep.l_series);
    let c = trapezoid_cumulative(&rep.times, &bnd_0);
    let d = trapezoid_cumulative(&rep.times, &rep.l0_series);
    rep.defect_ell_series = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    rep.defect_0_series = c.iter().zip(&d).map(|(x, y)| (x - y).abs()).collect();
    rep.defect_ell = *rep.defect_ell_series.last().unwrap();
    rep.defect_0 = *rep.defect_0_series.last().unwrap();
    let e0 = traj
        .samples
        .first()
        .map(|s| s.energy.e_total)
        .unwrap_or(0.0);
    rep.ratio_to_e0 = if e0 > 0.0 {
        (rep.defect_ell / e0, rep.defect_0 / e0)
    } else {
        (0.0, 0.0)
    };
    if c0.is_finite() {
        rep.c0 = c0;
        rep.c1 = c1;
    }
    Ok(rep)
}

/// `sup_t max(0, g_lo − v, v − g_hi)` over the recorded samples.
pub fn constraint_violation(traj: &Trajectory, g_lo: f64, g_hi: f64) -> f64 {
    traj.samples
        .iter()
        .map(|s| (g_lo - s.v).max(s.v - g_hi).max(0.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactClass {
    Interior,
    UpperContact,
    LowerContact,
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementarityTolerances {
    pub tol_s: f64,
    /// Width of the band around a stop that counts as touching.
    pub tol_g: f64,
    /// Largest admissible penetration past a stop. Compliance laws allow
    /// any; penalty runs are checked against `√(2E(0)ε)`, the depth at which
    /// the penalty energy would exhaust the initial energy.
    pub penetration: f64,
}

impl ComplementarityTolerances {
    /// `tol_S = 1e−6·κ`, `tol_g = 1e−6·ℓ`.
    pub fn scaled(system: &SemiDiscreteSystem) -> Self {
        ComplementarityTolerances {
            tol_s: 1e-6 * system.beam.k,
            tol_g: 1e-6 * system.beam.ell,
            penetration: f64::INFINITY,
        }
    }

    pub fn for_penalty(system: &SemiDiscreteSystem, e0: f64, eps_pen: f64) -> Self {
        ComplementarityTolerances {
            penetration: (2.0 * e0.max(0.0) * eps_pen).sqrt(),
            ..Self::scaled(system)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarityReport {
    pub classes: Vec<ContactClass>,
    pub interior: usize,
    pub upper: usize,
    pub lower: usize,
    pub violations: usize,
    /// `(t, v, S)` of the sample furthest from any admissible pattern.
    pub worst: Option<(f64, f64, f64)>,
}

/// Sign-pattern check of `(v, S(ℓ))`: zero force strictly inside the gap,
/// `S ≤ 0` on the upper stop, `S ≥ 0` on the lower one, and no penetration
/// beyond `tol.penetration`.
pub fn classify_contact(v: f64, s: f64, g_lo: f64, g_hi: f64, tol: &ComplementarityTolerances) -> (ContactClass, f64) {
    let (ts, tg, pen) = (tol.tol_s, tol.tol_g, tol.penetration);
    if v >= g_hi - tg {
        let miss = (s - ts).max(v - g_hi - pen).max(0.0);
        let class = if miss > 0.0 {
            ContactClass::Violation
        } else {
            ContactClass::UpperContact
        };
        (class, miss)
    } else if v <= g_lo + tg {
        let miss = (-s - ts).max(g_lo - pen - v).max(0.0);
        let class = if miss > 0.0 {
            ContactClass::Violation
        } else {
            ContactClass::LowerContact
        };
        (class, miss)
    } else {
        let miss = (s.abs() - ts).max(0.0);
        let class = if miss > 0.0 {
            ContactClass::Violation
        } else {
            ContactClass::Interior
        };
        (class, miss)
    }
}

pub fn complementarity_report(
    traj: &Trajectory,
    g_lo: f64,
    g_hi: f64,
    tol: &ComplementarityTolerances,
) -> ComplementarityReport {
    let mut rep = ComplementarityReport {
        classes: Vec::with_capacity(traj.samples.len()),
        interior: 0,
        upper: 0,
        lower: 0,
        violations: 0,
        worst: None,
    };
    let mut worst_miss = 0.0;
    for s in &traj.samples {
        let (class, miss) = classify_contact(s.v, s.s_ell, g_lo, g_hi, tol);
        match class {
            ContactClass::Interior => rep.interior += 1,
            ContactClass::UpperContact => rep.upper += 1,
            ContactClass::LowerContact => rep.lower += 1,
            ContactClass::Violation => {
                rep.violations += 1;
                if miss > worst_miss {
                    worst_miss = miss;
                    rep.worst = Some((s.t, s.v, s.s_ell));
                }
            }
        }
        rep.classes.push(class);
    }
    rep
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingReport {
    /// First time after which every member stays inside the entry ball.
    pub t0_observed: f64,
    /// Late-time plateau of the largest member norm.
    pub radius_observed: f64,
    pub entry_radius: f64,
    pub times: Vec<f64>,
    /// Largest energy norm across the ensemble at each sample.
    pub envelope: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub stride: usize,
    /// Trailing fraction of the run that defines the plateau.
    pub plateau_fraction: f64,
    /// Allowed relative drift of the plateau between the last two windows.
    pub plateau_tol: f64,
    /// Entry radius as a multiple of the plateau radius.
    pub entry_factor: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            stride: 10,
            plateau_fraction: 0.1,
            plateau_tol: 0.05,
            entry_factor: 2.0,
        }
    }
}

const MIN_ENSEMBLE: usize = 8;

/// Runs the ensemble in parallel and reports when all energy norms enter and
/// stay in a ball of `entry_factor` times the observed plateau.
pub fn absorbing_probe(
    system: &SemiDiscreteSystem,
    laws: &Laws,
    ensemble: &[State],
    t_final: f64,
    cfg: &SchemeConfig,
    opts: &ProbeOptions,
) -> Result<AbsorbingReport> {
    if ensemble.len() < MIN_ENSEMBLE {
        return Err(Error::EnsembleTooSmall {
            found: ensemble.len(),
            required: MIN_ENSEMBLE,
        });
    }
    let run_opts = RunOptions {
        stride: opts.stride,
        ..RunOptions::default()
    };
    let series: Vec<(Vec<f64>, Vec<f64>)> = ensemble
        .par_iter()
        .map(|initial| {
            let problem = Problem {
                system,
                laws: *laws,
                initial: initial.clone(),
            };
            let mut times = Vec::new();
            let mut norms = Vec::new();
            simulate(&problem, t_final, cfg, &run_opts, |s, state| {
                times.push(s.t);
                norms.push(energy_norm(system, state));
            })?;
            Ok((times, norms))
        })
        .collect::<Result<_>>()?;

    let times = series[0].0.clone();
    let len = times.len();
    let envelope: Vec<f64> = (0..len)
        .map(|k| series.iter().map(|(_, n)| n[k]).fold(0.0, f64::max))
        .collect();
    let t_end = *times.last().unwrap();
    let t_start = times[0];
    let span = t_end - t_start;
    let window_max = |a: f64, b: f64| {
        times
            .iter()
            .zip(&envelope)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(_, n)| *n)
            .fold(0.0, f64::max)
    };
    let f = opts.plateau_fraction;
    let plateau = window_max(t_end - f * span, t_end);
    let previous = window_max(t_end - 2.0 * f * span, t_end - f * span);
    let initial = envelope[0];
    let settled = plateau <= 1e-3 * initial
        || (previous - plateau).abs() <= opts.plateau_tol * plateau.max(f64::MIN_POSITIVE);
    if !settled {
        return Err(Error::PlateauNotReached { t_final: t_end });
    }
    let entry = opts.entry_factor * plateau;
    let mut t0 = t_start;
    for k in (0..len).rev() {
        if envelope[k] > entry {
            t0 = times[(k + 1).min(len - 1)];
            break;
        }
    }
    Ok(AbsorbingReport {
        t0_observed: t0,
        radius_observed: plateau,
        entry_radius: entry,
        times,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::assemble_beam;
    use crate::model::{BeamParams, ContactLaw, TipParams};

    #[test]
    fn zero_state_energy() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::hybrid(0.1), 8).unwrap();
        let rep = energy(&sys, &State::zeros(&sys), &Laws::linear());
        assert_eq!(rep, EnergyReport::default());
    }

    #[test]
    fn touching_the_stop_stores_nothing() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::disabled(), 8).unwrap();
        let mut s = State::zeros(&sys);
        *s.phi.last_mut().unwrap() = 0.3;
        let laws = Laws {
            contact: ContactLaw::NormalCompliance {
                d1: 1.0,
                d2: 1.0,
                p: 2,
                g_lo: -0.3,
                g_hi: 0.3,
            },
            ..Laws::linear()
        };
        assert_eq!(energy(&sys, &s, &laws).n_p, 0.0);
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
        let fit = fit_decay(&t, &e, (0.0, 10.0)).unwrap();
        assert!((fit.gamma_hat - 3.0).abs() < 1e-6);
        assert!((fit.gamma_state - 1.5).abs() < 1e-6);
        assert!((fit.c_hat - 2.0).abs() < 1e-9);
        assert!(fit.r2 > 0.999_999);
        let flat = vec![1.5; 50];
        assert!(fit_decay(&t, &flat, (0.0, 10.0)).unwrap().gamma_hat.abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let t: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let e = vec![1.0; 5];
        assert!(matches!(
            fit_decay(&t, &e, (0.0, 10.0)),
            Err(Error::InsufficientSamples { .. })
        ));
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let mut e = vec![1.0; 20];
        e[3] = 0.0;
        assert!(matches!(
            fit_decay(&t, &e, (0.0, 30.0)),
            Err(Error::NonPositiveEnergy { .. })
        ));
    }

    #[test]
    fn classification() {
        let tol = ComplementarityTolerances {
            tol_s: 1e-6,
            tol_g: 1e-6,
            penetration: 0.05,
        };
        let c = |v, s| classify_contact(v, s, -1.0, 1.0, &tol).0;
        assert_eq!(c(0.0, 0.0), ContactClass::Interior);
        assert_eq!(c(0.0, 0.1), ContactClass::Violation);
        assert_eq!(c(1.0, -2.0), ContactClass::UpperContact);
        assert_eq!(c(1.0, 2.0), ContactClass::Violation);
        assert_eq!(c(-1.0, 2.0), ContactClass::LowerContact);
        assert_eq!(c(1.1, -2.0), ContactClass::Violation);
    }
}
