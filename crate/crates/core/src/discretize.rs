//! Conforming linear finite elements for the transmission problem.
//!
//! The mesh always carries ξ as a node so that the two pointwise dampers
//! become diagonal entries at that node; the weak form of the jump
//! conditions `[[κφ_x]] = γ₁φ_t(ξ)`, `[[bψ_x]] = γ₂ψ_t(ξ)` is exactly that.
//!
//! Nodal unknowns are interleaved, `(φ₀, ψ₀, φ₁, ψ₁, …, φ_N, ψ_N)`. The
//! essential conditions `φ(0) = 0` and `ψ(ℓ) = 0` remove the first and last
//! entries, so the free dofs are the contiguous range `1..=2N` of the full
//! vector, shifted down by one.

use crate::band::SymBand;
use crate::error::{invalid, Error, Result};
use crate::model::{BeamParams, TipParams};
use crate::timestep::State;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub xi_index: usize,
}

impl Mesh {
    pub fn ne(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn ell(&self) -> f64 {
        self.nodes[self.ne()]
    }

    pub fn xi(&self) -> f64 {
        self.nodes[self.xi_index]
    }

    pub fn h(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    /// Element containing `x`; at an interior node the element on the left,
    /// unless `prefer_right`.
    pub fn locate(&self, x: f64, prefer_right: bool) -> Result<usize> {
        let ell = self.ell();
        if !(0.0..=ell).contains(&x) {
            return Err(Error::OutOfDomain { x, ell });
        }
        let ne = self.ne();
        let idx = self.nodes.partition_point(|&p| p < x);
        let e = if idx == 0 {
            0
        } else if idx <= ne && self.nodes[idx] == x {
            if prefer_right {
                idx.min(ne - 1)
            } else {
                idx - 1
            }
        } else {
            idx - 1
        };
        Ok(e.min(ne - 1))
    }

    /// Trapezoid weights: half the length of each adjacent element.
    pub fn node_weights(&self) -> Vec<f64> {
        let ne = self.ne();
        let mut w = vec![0.0; ne + 1];
        for e in 0..ne {
            let h = self.h(e);
            w[e] += 0.5 * h;
            w[e + 1] += 0.5 * h;
        }
        w
    }
}

/// Uniform spacing on `(0, ξ)` and on `(ξ, ℓ)`, element counts split in
/// proportion to the two lengths.
pub fn build_mesh(ell: f64, xi: f64, ne: usize) -> Result<Mesh> {
    if !(ell.is_finite() && ell > 0.0) {
        return Err(invalid("beam.ell", format!("must be positive, got {ell}")));
    }
    if !(xi > 0.0 && xi < ell) {
        return Err(invalid("xi", format!("must lie in (0, {ell}), got {xi}")));
    }
    if ne < 2 {
        return Err(invalid("mesh.ne", format!("need at least 2 elements, got {ne}")));
    }
    let left = ((ne as f64 * xi / ell).round() as usize).clamp(1, ne - 1);
    let right = ne - left;
    let mut nodes = Vec::with_capacity(ne + 1);
    for i in 0..=left {
        nodes.push(xi * (i as f64 / left as f64));
    }
    for j in 1..=right {
        nodes.push(xi + (ell - xi) * (j as f64 / right as f64));
    }
    nodes[ne] = ell;
    Ok(Mesh {
        nodes,
        xi_index: left,
    })
}

/// Assembled semi-discrete operators on the free dofs.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    pub mesh: Mesh,
    pub beam: BeamParams,
    pub tip: TipParams,
    pub mass: SymBand,
    pub stiffness: SymBand,
    pub damping: SymBand,
    /// Trapezoid weights used for body forces and distributed loads.
    pub node_weights: Vec<f64>,
}

const BAND: usize = 3;

/// Full interleaved index of `φ_i` and `ψ_i`.
#[inline]
pub fn phi_full(i: usize) -> usize {
    2 * i
}

#[inline]
pub fn psi_full(i: usize) -> usize {
    2 * i + 1
}

impl SemiDiscreteSystem {
    pub fn n_free(&self) -> usize {
        2 * self.mesh.ne()
    }

    /// Free index of a full interleaved index, `None` for eliminated dofs.
    #[inline]
    pub fn free_index(&self, full: usize) -> Option<usize> {
        let n = self.mesh.ne();
        (1..=2 * n).contains(&full).then(|| full - 1)
    }

    /// Free index of `φ(ℓ)`, which is the tip displacement `v`.
    pub fn tip_dof(&self) -> usize {
        phi_full(self.mesh.ne()) - 1
    }

    pub fn xi_phi_dof(&self) -> usize {
        phi_full(self.mesh.xi_index) - 1
    }

    pub fn xi_psi_dof(&self) -> usize {
        psi_full(self.mesh.xi_index) - 1
    }

    /// Packs nodal displacement fields into a free-dof vector.
    pub fn pack(&self, phi: &[f64], psi: &[f64]) -> Vec<f64> {
        let n = self.mesh.ne();
        let mut out = vec![0.0; 2 * n];
        for i in 0..=n {
            if let Some(f) = self.free_index(phi_full(i)) {
                out[f] = phi[i];
            }
            if let Some(f) = self.free_index(psi_full(i)) {
                out[f] = psi[i];
            }
        }
        out
    }

    /// Inverse of [`SemiDiscreteSystem::pack`]; eliminated entries are zero.
    pub fn unpack(&self, free: &[f64], phi: &mut [f64], psi: &mut [f64]) {
        let n = self.mesh.ne();
        for i in 0..=n {
            phi[i] = self.free_index(phi_full(i)).map_or(0.0, |f| free[f]);
            psi[i] = self.free_index(psi_full(i)).map_or(0.0, |f| free[f]);
        }
    }

    pub fn check_state(&self, state: &State) -> Result<()> {
        let expected = self.mesh.ne() + 1;
        for len in [
            state.phi.len(),
            state.psi.len(),
            state.phi_t.len(),
            state.psi_t.len(),
        ] {
            if len != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// Shear and bending energies `(Σ κh(φ_x+ψ_mid)², Σ bhψ_x²)` of full
    /// nodal fields, essential conditions not applied.
    pub fn stiffness_forms(&self, phi: &[f64], psi: &[f64]) -> (f64, f64) {
        let (k, b) = (self.beam.k, self.beam.b);
        let mut shear = 0.0;
        let mut bend = 0.0;
        for e in 0..self.mesh.ne() {
            let h = self.mesh.h(e);
            let strain = (phi[e + 1] - phi[e]) / h + 0.5 * (psi[e] + psi[e + 1]);
            let curvature = (psi[e + 1] - psi[e]) / h;
            shear += k * h * strain * strain;
            bend += b * h * curvature * curvature;
        }
        (shear, bend)
    }

    /// Consistent-mass forms `(∫ρ₁Φ², ∫ρ₂Ψ²)` of full nodal velocity fields.
    pub fn mass_forms(&self, phi_t: &[f64], psi_t: &[f64]) -> (f64, f64) {
        let (r1, r2) = (self.beam.rho1, self.beam.rho2);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for e in 0..self.mesh.ne() {
            let h = self.mesh.h(e);
            let f = |a: f64, b: f64| h / 3.0 * (a * a + a * b + b * b);
            m1 += r1 * f(phi_t[e], phi_t[e + 1]);
            m2 += r2 * f(psi_t[e], psi_t[e + 1]);
        }
        (m1, m2)
    }
}

pub fn assemble(mesh: &Mesh, beam: &BeamParams, tip: &TipParams) -> Result<SemiDiscreteSystem> {
    beam.validate()?;
    tip.validate()?;
    let ne = mesh.ne();
    if ne < 2 {
        return Err(invalid("mesh.ne", "need at least 2 elements"));
    }
    if (mesh.ell() - beam.ell).abs() > 1e-12 * beam.ell {
        return Err(Error::SingularAssembly(format!(
            "mesh length {} differs from beam length {}",
            mesh.ell(),
            beam.ell
        )));
    }
    if (mesh.xi() - beam.xi_position()).abs() > 1e-12 * beam.ell {
        return Err(Error::SingularAssembly(format!(
            "damper at {} is not the mesh node {}",
            beam.xi_position(),
            mesh.xi()
        )));
    }

    let n_free = 2 * ne;
    let mut mass = SymBand::zeros(n_free, BAND);
    let mut stiffness = SymBand::zeros(n_free, BAND);
    let mut damping = SymBand::zeros(n_free, 0);
    let free = |full: usize| (1..=n_free).contains(&full).then(|| full - 1);

    for e in 0..ne {
        let h = mesh.h(e);
        let dofs = [phi_full(e), psi_full(e), phi_full(e + 1), psi_full(e + 1)];
        // One-point rule on the shear strain φ_x + ψ keeps the element free
        // of shear locking.
        let g_shear = [-1.0 / h, 0.5, 1.0 / h, 0.5];
        let g_bend = [0.0, -1.0 / h, 0.0, 1.0 / h];
        let mut ke = [[0.0; 4]; 4];
        let mut me = [[0.0; 4]; 4];
        for a in 0..4 {
            for c in 0..4 {
                ke[a][c] = beam.k * h * g_shear[a] * g_shear[c] + beam.b * h * g_bend[a] * g_bend[c];
            }
        }
        for (slot, rho) in [(0usize, beam.rho1), (1usize, beam.rho2)] {
            me[slot][slot] = rho * h / 3.0;
            me[slot + 2][slot + 2] = rho * h / 3.0;
            me[slot][slot + 2] = rho * h / 6.0;
            me[slot + 2][slot] = rho * h / 6.0;
        }
        for a in 0..4 {
            let Some(fa) = free(dofs[a]) else { continue };
            for c in 0..=a {
                let Some(fc) = free(dofs[c]) else { continue };
                if ke[a][c] != 0.0 {
                    stiffness.add(fa, fc, ke[a][c]);
                }
                if me[a][c] != 0.0 {
                    mass.add(fa, fc, me[a][c]);
                }
            }
        }
    }

    let xi = mesh.xi_index;
    let (phi_xi, psi_xi) = (
        free(phi_full(xi)).ok_or_else(|| Error::SingularAssembly("φ(ξ) eliminated".into()))?,
        free(psi_full(xi)).ok_or_else(|| Error::SingularAssembly("ψ(ξ) eliminated".into()))?,
    );
    damping.add(phi_xi, phi_xi, beam.gamma1);
    damping.add(psi_xi, psi_xi, beam.gamma2);

    let tip_dof =
        free(phi_full(ne)).ok_or_else(|| Error::SingularAssembly("φ(ℓ) eliminated".into()))?;
    if tip.enabled {
        mass.add(tip_dof, tip_dof, tip.mass());
        stiffness.add(tip_dof, tip_dof, tip.stiffness());
        damping.add(tip_dof, tip_dof, tip.damping());
    }

    if mass.cholesky().is_none() {
        return Err(Error::SingularAssembly("mass matrix not positive definite".into()));
    }
    if stiffness.cholesky().is_none() {
        return Err(Error::SingularAssembly(
            "stiffness matrix not positive definite on free dofs".into(),
        ));
    }

    Ok(SemiDiscreteSystem {
        mesh: mesh.clone(),
        beam: *beam,
        tip: *tip,
        mass,
        stiffness,
        damping,
        node_weights: mesh.node_weights(),
    })
}

/// Convenience: mesh aligned at the damper, then assembly.
pub fn assemble_beam(beam: &BeamParams, tip: &TipParams, ne: usize) -> Result<SemiDiscreteSystem> {
    let mesh = build_mesh(beam.ell, beam.xi_position(), ne)?;
    assemble(&mesh, beam, tip)
}

fn element_stress(system: &SemiDiscreteSystem, state: &State, e: usize, x: f64) -> (f64, f64) {
    let mesh = &system.mesh;
    let h = mesh.h(e);
    let t = ((x - mesh.nodes[e]) / h).clamp(0.0, 1.0);
    let phi_x = (state.phi[e + 1] - state.phi[e]) / h;
    let psi = (1.0 - t) * state.psi[e] + t * state.psi[e + 1];
    let psi_x = (state.psi[e + 1] - state.psi[e]) / h;
    (system.beam.k * (phi_x + psi), system.beam.b * psi_x)
}

/// Shear force `S = κ(φ_x + ψ)` and bending moment `M = bψ_x` at `x`,
/// from the element to the left of an interior node (right at `x = 0`).
pub fn recover_stress(system: &SemiDiscreteSystem, state: &State, x: f64) -> Result<(f64, f64)> {
    let e = system.mesh.locate(x, false)?;
    Ok(element_stress(system, state, e, x))
}

/// One-sided limits `(S(x⁻), M(x⁻), S(x⁺), M(x⁺))` at a mesh node.
pub fn recover_stress_sides(
    system: &SemiDiscreteSystem,
    state: &State,
    x: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let left = system.mesh.locate(x, false)?;
    let right = system.mesh.locate(x, true)?;
    Ok((
        element_stress(system, state, left, x),
        element_stress(system, state, right, x),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_examples() {
        let m = build_mesh(1.0, 0.5, 4).unwrap();
        assert_eq!(m.nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.xi_index, 2);
        let m = build_mesh(3.0, 2.0, 3).unwrap();
        assert_eq!(m.xi_index, 2);
        assert_eq!(m.nodes, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(build_mesh(1.0, 1.2, 4).is_err());
        assert!(build_mesh(1.0, 0.5, 1).is_err());
    }

    #[test]
    fn xi_is_exact_node() {
        for ne in [3, 7, 32, 33, 128] {
            let xi = 2.0 / 3.0;
            let m = build_mesh(1.0, xi, ne).unwrap();
            assert_eq!(m.nodes[m.xi_index], xi);
            assert_eq!(m.nodes[ne], 1.0);
            assert!(m.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn undamped_tip_off_has_no_dissipation() {
        let mut beam = BeamParams::unit();
        beam.gamma1 = 0.0;
        beam.gamma2 = 0.0;
        let sys = assemble_beam(&beam, &TipParams::disabled(), 8).unwrap();
        assert!((0..sys.n_free()).all(|i| sys.damping.diag(i) == 0.0));
    }

    #[test]
    fn damping_rank_and_slots() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::hybrid(0.1), 8).unwrap();
        let nonzero: Vec<usize> = (0..sys.n_free())
            .filter(|&i| sys.damping.diag(i) != 0.0)
            .collect();
        assert_eq!(
            nonzero,
            vec![sys.xi_phi_dof(), sys.xi_psi_dof(), sys.tip_dof()]
        );
        assert_eq!(sys.damping.diag(sys.tip_dof()), 0.1);
    }

    #[test]
    fn mass_of_uniform_velocity() {
        let mut beam = BeamParams::unit();
        beam.rho1 = 2.0;
        beam.rho2 = 0.5;
        beam.ell = 3.0;
        beam.xi = crate::model::XiLocation::fraction(1, 3);
        let tip = TipParams::hybrid(0.3);
        let sys = assemble_beam(&beam, &tip, 9).unwrap();
        let ones = vec![1.0; 10];
        let (m1, m2) = sys.mass_forms(&ones, &ones);
        assert!((m1 + m2 - (2.0 * 3.0 + 0.5 * 3.0)).abs() < 1e-12);
        // The free-dof mass sees the tip slot as well (ψ(ℓ) is eliminated, so
        // compare with φ alone).
        let phi_only = sys.pack(&ones, &[0.0; 10]);
        let mut phi_full = ones.clone();
        phi_full[0] = 0.0;
        let (m1_free, _) = sys.mass_forms(&phi_full, &[0.0; 10]);
        assert!((sys.mass.quad(&phi_only) - (m1_free + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn shear_kernel_is_exact() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::disabled(), 16).unwrap();
        let c = 0.7;
        let phi: Vec<f64> = sys.mesh.nodes.iter().map(|x| c * x).collect();
        let psi = vec![-c; 17];
        let (shear, bend) = sys.stiffness_forms(&phi, &psi);
        assert!(shear.abs() < 1e-14);
        assert!(bend.abs() < 1e-14);
    }

    #[test]
    fn banded_stiffness_matches_element_forms() {
        let beam = BeamParams::unit();
        let sys = assemble_beam(&beam, &TipParams::hybrid(0.2), 6).unwrap();
        let mut phi: Vec<f64> = (0..7).map(|i| ((i as f64) * 0.9).sin()).collect();
        let mut psi: Vec<f64> = (0..7).map(|i| ((i as f64) * 0.4).cos()).collect();
        phi[0] = 0.0;
        psi[6] = 0.0;
        let q = sys.pack(&phi, &psi);
        let (s, b) = sys.stiffness_forms(&phi, &psi);
        let tip = 0.2 * phi[6] * phi[6];
        assert!((sys.stiffness.quad(&q) - (s + b + tip)).abs() < 1e-12);
    }

    #[test]
    fn stress_of_simple_fields() {
        let mut beam = BeamParams::unit();
        beam.k = 2.5;
        let sys = assemble_beam(&beam, &TipParams::disabled(), 8).unwrap();
        let zero = State::zeros(&sys);
        assert_eq!(recover_stress(&sys, &zero, 0.3).unwrap(), (0.0, 0.0));
        let mut s = zero.clone();
        s.phi = sys.mesh.nodes.clone();
        for x in [0.0, 0.1, 0.5, 0.77, 1.0] {
            let (sh, m) = recover_stress(&sys, &s, x).unwrap();
            assert!((sh - 2.5).abs() < 1e-13);
            assert_eq!(m, 0.0);
        }
        assert!(recover_stress(&sys, &s, 1.5).is_err());
    }

    #[test]
    fn locate_sides() {
        let m = build_mesh(1.0, 0.5, 4).unwrap();
        assert_eq!(m.locate(0.5, false).unwrap(), 1);
        assert_eq!(m.locate(0.5, true).unwrap(), 2);
        assert_eq!(m.locate(0.0, false).unwrap(), 0);
        assert_eq!(m.locate(1.0, true).unwrap(), 3);
        assert_eq!(m.locate(0.6, false).unwrap(), 2);
    }
}
