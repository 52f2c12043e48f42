//! Flat `key=value` experiment files.
//!
//! One assignment per line, dotted keys, `#` starts a comment. Unknown keys
//! are rejected so that a typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::PathBuf;

use tbeam_core::spectral::{SpectralOptions, XiStudyOptions};
use tbeam_core::{
    BeamParams, ContactLaw, ForceLaw, InitialData, Laws, MultiplierSpec, SchemeConfig, TipParams,
    XiLocation,
};

use crate::CliError;

const KNOWN: &[&str] = &[
    "beam.rho1",
    "beam.rho2",
    "beam.k",
    "beam.b",
    "beam.ell",
    "beam.gamma1",
    "beam.gamma2",
    "xi.num",
    "xi.den",
    "xi.real",
    "tip.enabled",
    "tip.epsilon",
    "tip.damping",
    "contact.law",
    "contact.d1",
    "contact.d2",
    "contact.p",
    "contact.g_lo",
    "contact.g_hi",
    "contact.eps_pen",
    "forces.f.mu",
    "forces.f.alpha",
    "forces.f.cutoff",
    "forces.f.offset",
    "forces.g.mu",
    "forces.g.alpha",
    "forces.g.cutoff",
    "forces.g.offset",
    "mesh.ne",
    "scheme.dt",
    "scheme.newton_tol",
    "scheme.newton_max",
    "scheme.kind",
    "run.t_final",
    "run.stride",
    "run.fit_fraction",
    "run.snapshot_every",
    "run.snapshot_final",
    "initial.kind",
    "initial.m",
    "initial.phi_amp",
    "initial.psi_amp",
    "initial.velocity",
    "initial.center",
    "initial.width",
    "initial.amplitude",
    "initial.radius",
    "initial.modes",
    "initial.seed",
    "initial.path",
    "multiplier.n",
    "spectral.theta",
    "spectral.cap",
    "spectral.tol_bad",
    "sweep.eps_pen",
    "sweep.epsilon",
    "sweep.xi",
    "sweep.ne",
    "sweep.tie_tip",
];

#[derive(Debug, Clone)]
pub enum InitialSpec {
    Data(InitialData),
    Snapshot(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Sweeps {
    pub eps_pen: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub xi: Vec<(i64, i64)>,
    pub ne: Vec<usize>,
    /// Runs each penalty row on the hybrid model with `ε := eps_pen`.
    pub tie_tip: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub beam: BeamParams,
    pub tip: TipParams,
    pub laws: Laws,
    pub ne: usize,
    pub scheme: SchemeConfig,
    pub t_final: f64,
    pub stride: usize,
    pub fit_fraction: f64,
    pub snapshot_every: usize,
    pub snapshot_final: bool,
    pub initial: InitialSpec,
    pub multiplier: MultiplierSpec,
    pub spectral: SpectralOptions,
    pub tol_bad: f64,
    pub sweeps: Sweeps,
}

impl ExperimentConfig {
    pub fn xi_options(&self) -> XiStudyOptions {
        XiStudyOptions {
            spectral: self.spectral,
            tol_bad: self.tol_bad,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Raw {
    entries: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Raw, CliError> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key=value", no + 1)))?;
            let key = key.trim();
            if !KNOWN.contains(&key) {
                return Err(cfg_err(format!("line {}: unknown key `{key}`", no + 1)));
            }
            if entries
                .insert(key.to_string(), (no + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(cfg_err(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(Raw { entries })
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(format!("line {line}: cannot parse `{key}` from `{v}`"))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.value(key)?
            .ok_or_else(|| cfg_err(format!("missing required key `{key}`")))
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.value(key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| cfg_err(format!("line {line}: bad entry `{s}` in `{key}`")))
                })
                .collect(),
        }
    }
}

fn force_law(raw: &Raw, prefix: &str) -> Result<ForceLaw, CliError> {
    let key = |s: &str| format!("forces.{prefix}.{s}");
    Ok(ForceLaw {
        mu: raw.or(&key("mu"), 0.0)?,
        alpha: raw.or(&key("alpha"), 0.0)?,
        cutoff: raw.value(&key("cutoff"))?,
        offset: raw.or(&key("offset"), 0.0)?,
    })
}

fn contact_law(raw: &Raw) -> Result<ContactLaw, CliError> {
    let kind: String = raw.or("contact.law", "none".to_string())?;
    match kind.as_str() {
        "none" => Ok(ContactLaw::NoContact),
        "compliance" => Ok(ContactLaw::NormalCompliance {
            d1: raw.required("contact.d1")?,
            d2: raw.required("contact.d2")?,
            p: raw.required("contact.p")?,
            g_lo: raw.required("contact.g_lo")?,
            g_hi: raw.required("contact.g_hi")?,
        }),
        "penalty" => Ok(ContactLaw::SignoriniPenalty {
            eps_pen: raw.required("contact.eps_pen")?,
            g_lo: raw.required("contact.g_lo")?,
            g_hi: raw.required("contact.g_hi")?,
        }),
        other => Err(cfg_err(format!(
            "`contact.law` must be none, compliance or penalty, got `{other}`"
        ))),
    }
}

fn initial_spec(raw: &Raw) -> Result<InitialSpec, CliError> {
    let kind: String = raw.or("initial.kind", "zero".to_string())?;
    let data = match kind.as_str() {
        "zero" => InitialData::Zero,
        "mode" => InitialData::Mode {
            m: raw.or("initial.m", 0)?,
            phi_amp: raw.or("initial.phi_amp", 1.0)?,
            psi_amp: raw.or("initial.psi_amp", 0.0)?,
            velocity: raw.or("initial.velocity", false)?,
        },
        "pulse" => InitialData::Pulse {
            center: raw.required("initial.center")?,
            width: raw.required("initial.width")?,
            amplitude: raw.or("initial.amplitude", 1.0)?,
        },
        "ball" => InitialData::RandomBall {
            radius: raw.required("initial.radius")?,
            modes: raw.or("initial.modes", 3)?,
            seed: raw.or("initial.seed", 0)?,
        },
        "snapshot" => return Ok(InitialSpec::Snapshot(raw.required::<String>("initial.path")?.into())),
        other => {
            return Err(cfg_err(format!(
                "`initial.kind` must be zero, mode, pulse, ball or snapshot, got `{other}`"
            )))
        }
    };
    Ok(InitialSpec::Data(data))
}

fn xi_pair(s: &str) -> Option<(i64, i64)> {
    let (n, d) = s.split_once('/')?;
    Some((n.trim().parse().ok()?, d.trim().parse().ok()?))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw = Raw::parse(text)?;
    let xi = match raw.value::<f64>("xi.real")? {
        Some(x) => XiLocation::Real(x),
        None => XiLocation::fraction(raw.required("xi.num")?, raw.required("xi.den")?),
    };
    let beam = BeamParams {
        rho1: raw.required("beam.rho1")?,
        rho2: raw.required("beam.rho2")?,
        k: raw.required("beam.k")?,
        b: raw.required("beam.b")?,
        ell: raw.required("beam.ell")?,
        xi,
        gamma1: raw.or("beam.gamma1", 0.0)?,
        gamma2: raw.or("beam.gamma2", 0.0)?,
    };
    let tip = if raw.or("tip.enabled", false)? {
        TipParams {
            epsilon: raw.required("tip.epsilon")?,
            enabled: true,
            damping_on: raw.or("tip.damping", true)?,
        }
    } else {
        TipParams::disabled()
    };
    let laws = Laws {
        contact: contact_law(&raw)?,
        f: force_law(&raw, "f")?,
        g: force_law(&raw, "g")?,
    };
    let kind: String = raw.or("scheme.kind", "implicit-midpoint".to_string())?;
    if kind != "implicit-midpoint" {
        return Err(cfg_err(format!("`scheme.kind` must be implicit-midpoint, got `{kind}`")));
    }
    let mut scheme = SchemeConfig::new(raw.or("scheme.dt", 1e-2)?);
    scheme.newton_tol = raw.or("scheme.newton_tol", scheme.newton_tol)?;
    scheme.newton_max = raw.or("scheme.newton_max", scheme.newton_max)?;

    let multiplier = match raw.value::<u32>("multiplier.n")? {
        Some(n) => MultiplierSpec { n, ell: beam.ell },
        None => MultiplierSpec::for_length(beam.ell),
    };
    let defaults = SpectralOptions::default();
    let spectral = SpectralOptions {
        dense_cap: raw.or("spectral.cap", defaults.dense_cap)?,
        theta: raw.or("spectral.theta", defaults.theta)?,
    };
    let xi_list = match raw.get("sweep.xi") {
        None => Vec::new(),
        Some((line, v)) => v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| xi_pair(s).ok_or_else(|| cfg_err(format!("line {line}: bad fraction `{s}` in `sweep.xi`"))))
            .collect::<Result<_, _>>()?,
    };
    let cfg = ExperimentConfig {
        beam,
        tip,
        laws,
        ne: raw.or("mesh.ne", 64)?,
        scheme,
        t_final: raw.or("run.t_final", 1.0)?,
        stride: raw.or("run.stride", 1)?,
        fit_fraction: raw.or("run.fit_fraction", 0.6)?,
        snapshot_every: raw.or("run.snapshot_every", 0)?,
        snapshot_final: raw.or("run.snapshot_final", false)?,
        initial: initial_spec(&raw)?,
        multiplier,
        spectral,
        tol_bad: raw.or("spectral.tol_bad", XiStudyOptions::default().tol_bad)?,
        sweeps: Sweeps {
            eps_pen: raw.list("sweep.eps_pen")?,
            epsilon: raw.list("sweep.epsilon")?,
            xi: xi_list,
            ne: raw.list("sweep.ne")?,
            tie_tip: raw.or("sweep.tie_tip", false)?,
        },
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.beam.validate()?;
    cfg.tip.validate()?;
    cfg.laws.validate()?;
    cfg.scheme.validate()?;
    if cfg.ne < 2 {
        return Err(cfg_err("`mesh.ne` must be at least 2"));
    }
    if !(cfg.t_final >= 0.0 && cfg.t_final.is_finite()) {
        return Err(cfg_err("`run.t_final` must be nonnegative"));
    }
    if cfg.stride == 0 {
        return Err(cfg_err("`run.stride` must be at least 1"));
    }
    if !(cfg.fit_fraction > 0.0 && cfg.fit_fraction <= 1.0) {
        return Err(cfg_err("`run.fit_fraction` must lie in (0, 1]"));
    }
    if !(cfg.spectral.theta > 0.0 && cfg.spectral.theta <= 1.0) {
        return Err(cfg_err("`spectral.theta` must lie in (0, 1]"));
    }
    Ok(())
}
