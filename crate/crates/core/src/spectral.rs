//! Spectrum of the first-order generator and damping-location studies.
//!
//! The pencil `λ·diag(I, M)·x = [[0, I], [−K, −D]]·x` is reduced to a
//! standard eigenproblem in energy coordinates: with `M = LLᵀ` and
//! `L⁻¹KL⁻ᵀ = RRᵀ`, the generator is similar to
//! `[[0, Rᵀ], [−R, −L⁻¹DL⁻ᵀ]]`, which is exactly skew when `D = 0`.
//!
//! Linear elements carry a band of poorly resolved modes near the top of
//! the spectrum whose damping is `O(h²)` for any damper location, so the
//! full abscissa tends to zero under refinement regardless of `ξ`. The
//! report therefore also gives the abscissa restricted to
//! `|Im λ| ≤ θ·max|Im λ|`.

use nalgebra::{Cholesky, Complex, DMatrix};
use rayon::prelude::*;

use crate::discretize::{assemble_beam, SemiDiscreteSystem};
use crate::error::{invalid, Error, Result};
use crate::model::{is_stabilizing_xi, BeamParams, TipParams, XiLocation, XiVerdict};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelTag {
    Hybrid { epsilon: f64 },
    NonHybrid,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelTag::Hybrid { epsilon } => write!(f, "hybrid({epsilon})"),
            ModelTag::NonHybrid => write!(f, "non-hybrid"),
        }
    }
}

/// `(A_block, M_block)` of the pencil together with the symmetric blocks it
/// was built from.
#[derive(Debug, Clone)]
pub struct GeneratorPair {
    pub a_block: DMatrix<f64>,
    pub m_block: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub ne: usize,
    pub model: ModelTag,
}

impl GeneratorPair {
    pub fn dim(&self) -> usize {
        self.a_block.nrows()
    }
}

pub fn generator(system: &SemiDiscreteSystem) -> GeneratorPair {
    let n = system.n_free();
    let mass = system.mass.to_dense();
    let stiffness = system.stiffness.to_dense();
    let damping = system.damping.to_dense();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        m[(i, i)] = 1.0;
    }
    a.view_mut((n, 0), (n, n)).copy_from(&(-&stiffness));
    a.view_mut((n, n), (n, n)).copy_from(&(-&damping));
    m.view_mut((n, n), (n, n)).copy_from(&mass);
    let model = if system.tip.enabled {
        ModelTag::Hybrid {
            epsilon: system.tip.epsilon,
        }
    } else {
        ModelTag::NonHybrid
    };
    GeneratorPair {
        a_block: a,
        m_block: m,
        mass,
        stiffness,
        damping,
        ne: system.mesh.ne(),
        model,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub dense_cap: usize,
    /// Resolved band `|Im λ| ≤ θ·max|Im λ|`.
    pub theta: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            dense_cap: 4000,
            theta: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub abscissa: f64,
    /// Abscissa of the resolved band.
    pub resolved_abscissa: f64,
    /// `min |Re λ|`.
    pub min_damping_gap: f64,
    pub max_frequency: f64,
    pub theta: f64,
    pub ne: usize,
    pub model: ModelTag,
}

impl SpectralReport {
    /// Largest distance between an eigenvalue and the nearest conjugate of
    /// another one.
    pub fn conjugate_defect(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| {
                self.eigenvalues
                    .iter()
                    .map(|m| (m - l.conj()).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

fn energy_form(pair: &GeneratorPair) -> Result<DMatrix<f64>> {
    let n = pair.mass.nrows();
    let chol = Cholesky::new(pair.mass.clone()).ok_or(Error::MassNotDefinite)?;
    let l = chol.l();
    let solve_l = |b: &DMatrix<f64>| {
        l.solve_lower_triangular(b)
            .expect("triangular factor of a definite matrix is invertible")
    };
    // L⁻¹ X L⁻ᵀ
    let congruence = |x: &DMatrix<f64>| {
        let y = solve_l(x);
        let z = solve_l(&y.transpose());
        let s = z.transpose();
        (&s + s.transpose()) * 0.5
    };
    let k_t = congruence(&pair.stiffness);
    let d_t = congruence(&pair.damping);
    let r = Cholesky::new(k_t)
        .ok_or_else(|| Error::SingularAssembly("stiffness not definite on free dofs".into()))?
        .l();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&r.transpose());
    a.view_mut((n, 0), (n, n)).copy_from(&(-&r));
    a.view_mut((n, n), (n, n)).copy_from(&(-d_t));
    Ok(a)
}

pub fn spectrum(pair: &GeneratorPair, opts: &SpectralOptions) -> Result<SpectralReport> {
    let dim = pair.dim();
    if dim > opts.dense_cap {
        return Err(Error::DimensionOverCap {
            dim,
            cap: opts.dense_cap,
        });
    }
    let a = energy_form(pair)?;
    let mut eig: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let abscissa = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let max_frequency = eig.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let band = opts.theta * max_frequency;
    let resolved_abscissa = eig
        .iter()
        .filter(|l| l.im.abs() <= band)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_damping_gap = eig.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    Ok(SpectralReport {
        eigenvalues: eig,
        abscissa,
        resolved_abscissa,
        min_damping_gap,
        max_frequency,
        theta: opts.theta,
        ne: pair.ne,
        model: pair.model,
    })
}

pub fn system_spectrum(system: &SemiDiscreteSystem, opts: &SpectralOptions) -> Result<SpectralReport> {
    spectrum(&generator(system), opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiRow {
    pub num: i64,
    pub den: i64,
    pub ne: usize,
    pub abscissa: f64,
    pub resolved_abscissa: f64,
    pub verdict: XiVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiTrend {
    pub num: i64,
    pub den: i64,
    pub verdict: XiVerdict,
    /// Resolved abscissa on the coarsest and finest mesh.
    pub coarse: f64,
    pub fine: f64,
    /// `fine ≥ ½·coarse` and `fine ≥ −tol_bad`.
    pub approaches_zero: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct XiStudyOptions {
    pub spectral: SpectralOptions,
    pub tol_bad: f64,
}

impl Default for XiStudyOptions {
    fn default() -> Self {
        XiStudyOptions {
            spectral: SpectralOptions::default(),
            tol_bad: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct XiStudy {
    pub rows: Vec<XiRow>,
    pub trends: Vec<XiTrend>,
}

pub fn xi_study(
    beam: &BeamParams,
    tip: &TipParams,
    xis: &[(i64, i64)],
    nes: &[usize],
    opts: &XiStudyOptions,
) -> Result<XiStudy> {
    if xis.is_empty() || nes.is_empty() {
        return Err(invalid("sweep", "xi and ne lists must be nonempty"));
    }
    let jobs: Vec<((i64, i64), usize)> = xis
        .iter()
        .flat_map(|&xi| nes.iter().map(move |&ne| (xi, ne)))
        .collect();
    let rows: Vec<XiRow> = jobs
        .par_iter()
        .map(|&((num, den), ne)| {
            let mut b = *beam;
            b.xi = XiLocation::fraction(num, den);
            let verdict = is_stabilizing_xi(&b.xi)?;
            let sys = assemble_beam(&b, tip, ne)?;
            let target = b.xi_position();
            if (sys.mesh.xi() - target).abs() > 1e-12 * b.ell {
                return Err(invalid("xi", format!("{num}/{den} is not a node of the mesh with {ne} elements")));
            }
            let rep = system_spectrum(&sys, &opts.spectral)?;
            Ok(XiRow {
                num,
                den,
                ne,
                abscissa: rep.abscissa,
                resolved_abscissa: rep.resolved_abscissa,
                verdict,
            })
        })
        .collect::<Result<_>>()?;
    let ne_min = *nes.iter().min().unwrap();
    let ne_max = *nes.iter().max().unwrap();
    let trends = xis
        .iter()
        .map(|&(num, den)| {
            let find = |ne| {
                rows.iter()
                    .find(|r| r.num == num && r.den == den && r.ne == ne)
                    .unwrap()
            };
            let (c, f) = (find(ne_min), find(ne_max));
            let coarse = c.resolved_abscissa;
            let fine = f.resolved_abscissa;
            XiTrend {
                num,
                den,
                verdict: c.verdict,
                coarse,
                fine,
                approaches_zero: fine >= 0.5 * coarse && fine >= -opts.tol_bad,
            }
        })
        .collect();
    Ok(XiStudy { rows, trends })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub abscissa: f64,
    pub resolved_abscissa: f64,
}

#[derive(Debug, Clone)]
pub struct EpsilonStudy {
    pub reference: EpsilonRow,
    pub rows: Vec<EpsilonRow>,
}

/// Hybrid spectra over `eps_list`; the reference row (`epsilon = 0`) is the
/// non-hybrid model on the same mesh.
pub fn epsilon_study(
    beam: &BeamParams,
    eps_list: &[f64],
    ne: usize,
    opts: &SpectralOptions,
) -> Result<EpsilonStudy> {
    let reference = system_spectrum(&assemble_beam(beam, &TipParams::disabled(), ne)?, opts)?;
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let rep = system_spectrum(&assemble_beam(beam, &TipParams::hybrid(eps), ne)?, opts)?;
            Ok(EpsilonRow {
                epsilon: eps,
                abscissa: rep.abscissa,
                resolved_abscissa: rep.resolved_abscissa,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EpsilonStudy {
        reference: EpsilonRow {
            epsilon: 0.0,
            abscissa: reference.abscissa,
            resolved_abscissa: reference.resolved_abscissa,
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undamped() -> BeamParams {
        let mut b = BeamParams::unit();
        b.gamma1 = 0.0;
        b.gamma2 = 0.0;
        b
    }

    #[test]
    fn undamped_spectrum_is_imaginary() {
        let sys = assemble_beam(&undamped(), &TipParams::disabled(), 16).unwrap();
        let rep = system_spectrum(&sys, &SpectralOptions::default()).unwrap();
        assert!(rep.eigenvalues.iter().all(|l| l.re.abs() < 1e-10));
        assert!(rep.conjugate_defect() < 1e-8);
        assert_eq!(rep.eigenvalues.len(), 64);
    }

    #[test]
    fn pencil_matches_energy_form() {
        // Eigenvalues of M_block⁻¹ A_block against the energy-coordinate form.
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::hybrid(0.1), 6).unwrap();
        let pair = generator(&sys);
        let minv = pair.m_block.clone().try_inverse().unwrap();
        let mut direct: Vec<Complex<f64>> =
            (minv * &pair.a_block).complex_eigenvalues().iter().copied().collect();
        direct.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        let rep = spectrum(&pair, &SpectralOptions::default()).unwrap();
        for (a, b) in direct.iter().zip(&rep.eigenvalues) {
            assert!((a - b).norm() < 1e-8 * (1.0 + a.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn damped_spectrum_is_dissipative() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::hybrid(0.01), 16).unwrap();
        let rep = system_spectrum(&sys, &SpectralOptions::default()).unwrap();
        assert!(rep.abscissa < 1e-10);
        assert!(rep.resolved_abscissa <= rep.abscissa);
    }

    #[test]
    fn cap_is_enforced() {
        let sys = assemble_beam(&BeamParams::unit(), &TipParams::disabled(), 8).unwrap();
        let opts = SpectralOptions {
            dense_cap: 10,
            ..Default::default()
        };
        assert!(matches!(
            system_spectrum(&sys, &opts),
            Err(Error::DimensionOverCap { dim: 32, cap: 10 })
        ));
    }

    #[test]
    fn undamped_xi_rows_are_conservative() {
        let study = xi_study(
            &undamped(),
            &TipParams::disabled(),
            &[(1, 2), (2, 3)],
            &[12],
            &XiStudyOptions::default(),
        )
        .unwrap();
        assert_eq!(study.rows.len(), 2);
        for r in &study.rows {
            assert!(r.abscissa.abs() < 1e-10);
        }
        assert_eq!(study.rows[0].verdict, XiVerdict::Stabilizing);
        assert_eq!(study.rows[1].verdict, XiVerdict::Excluded);
    }
}
