use std::path::Path;

use rayon::prelude::*;
use tbeam_core::diagnostics::{energy_growth_ratio, fit_decay_tail, ComplementarityTolerances};
use tbeam_core::spectral::{epsilon_study, system_spectrum};
use tbeam_core::{
    assemble_beam, complementarity_report, constraint_violation, initial_state, observability,
    simulate, xi_study, ContactLaw, Problem, RunOptions, SemiDiscreteSystem, State, TipParams,
    Trajectory,
};

use crate::config::{ExperimentConfig, InitialSpec};
use crate::output::{self, csv, num, Summary};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    SweepEps,
    SweepXi,
    Spectrum,
    Observability,
}

pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    match command {
        Command::Simulate => simulate_cmd(cfg, out),
        Command::SweepEps => sweep_eps(cfg, out),
        Command::SweepXi => sweep_xi(cfg, out),
        Command::Spectrum => spectrum_cmd(cfg, out),
        Command::Observability => observability_cmd(cfg, out),
    }
}

fn initial(cfg: &ExperimentConfig, sys: &SemiDiscreteSystem) -> Result<State, CliError> {
    let state = match &cfg.initial {
        InitialSpec::Data(data) => initial_state(sys, data)?,
        InitialSpec::Snapshot(path) => output::read_snapshot(path)?,
    };
    sys.check_state(&state)?;
    Ok(state)
}

struct Run {
    system: SemiDiscreteSystem,
    traj: Trajectory,
    summary: Summary,
}

impl Run {
    fn failed(&self) -> bool {
        self.traj.failure.is_some()
    }
}

fn tolerances(cfg: &ExperimentConfig, sys: &SemiDiscreteSystem, e0: f64) -> ComplementarityTolerances {
    match cfg.laws.contact {
        ContactLaw::SignoriniPenalty { eps_pen, .. } => ComplementarityTolerances::for_penalty(sys, e0, eps_pen),
        _ => ComplementarityTolerances::scaled(sys),
    }
}

/// One time-domain run with trajectory, snapshots and summary under `out`.
/// Solver failures keep the partial trajectory and are reported in the
/// summary rather than as an error.
fn run_one(cfg: &ExperimentConfig, out: &Path, keep_states: bool) -> Result<Run, CliError> {
    let system = assemble_beam(&cfg.beam, &cfg.tip, cfg.ne)?;
    let init = initial(cfg, &system)?;
    let problem = Problem {
        system: &system,
        laws: cfg.laws,
        initial: init,
    };
    let opts = RunOptions {
        stride: cfg.stride,
        keep_states,
        keep_partial: true,
    };
    let mut snapshots = Vec::new();
    let mut last = None;
    let mut count = 0usize;
    let traj = simulate(&problem, cfg.t_final, &cfg.scheme, &opts, |_, state| {
        if cfg.snapshot_every > 0 && count.is_multiple_of(cfg.snapshot_every) {
            snapshots.push((count, state.clone()));
        }
        if cfg.snapshot_final {
            last = Some(state.clone());
        }
        count += 1;
    })?;

    output::write_text(&out.join("trajectory.csv"), &output::trajectory_csv(&traj))?;
    for (k, state) in &snapshots {
        output::write_snapshot(&out.join("snapshots").join(format!("sample_{k:06}.snap")), state)?;
    }
    if let Some(state) = &last {
        output::write_snapshot(&out.join("final.snap"), state)?;
    }

    let mut s = Summary::default();
    match &traj.failure {
        None => s.put("status", "ok"),
        Some(e) => s.put("status", "solver_failure").put("failure", e),
    };
    let first = &traj.samples[0];
    let last_sample = traj.samples.last().unwrap();
    s.put("model", system_model(&system))
        .put("ne", cfg.ne)
        .put_num("dt", cfg.scheme.dt)
        .put_num("t_final", cfg.t_final)
        .put_num("t_reached", last_sample.t)
        .put("samples", traj.samples.len())
        .put_num("e0", first.energy.e_total)
        .put_num("e_final", last_sample.energy.e_total)
        .put_num("dissipated_cum", last_sample.energy.dissipated_cum)
        .put_num(
            "max_abs_balance_residual",
            traj.samples.iter().map(|x| x.balance_residual.abs()).fold(0.0, f64::max),
        );
    match energy_growth_ratio(&traj) {
        Ok(r) => s.put_num("energy_growth_ratio", r),
        Err(_) => s.put("energy_growth_ratio", "n/a"),
    };
    match fit_decay_tail(&traj, cfg.fit_fraction) {
        Ok(fit) => s
            .put_num("decay.gamma_hat", fit.gamma_hat)
            .put_num("decay.gamma_state", fit.gamma_state)
            .put_num("decay.r2", fit.r2)
            .put("decay.samples", fit.samples),
        Err(e) => s.put("decay", format!("n/a ({e})")),
    };
    if let Some((g_lo, g_hi)) = cfg.laws.contact.stops() {
        let tol = tolerances(cfg, &system, first.energy.e_total);
        let rep = complementarity_report(&traj, g_lo, g_hi, &tol);
        s.put_num("constraint_violation", constraint_violation(&traj, g_lo, g_hi))
            .put_num(
                "max_abs_s_ell",
                traj.samples.iter().map(|x| x.s_ell.abs()).fold(0.0, f64::max),
            )
            .put("complementarity.interior", rep.interior)
            .put("complementarity.upper", rep.upper)
            .put("complementarity.lower", rep.lower)
            .put("complementarity.violations", rep.violations)
            .put_num("complementarity.penetration_tol", tol.penetration);
    }
    Ok(Run {
        system,
        traj,
        summary: s,
    })
}

fn system_model(sys: &SemiDiscreteSystem) -> String {
    if sys.tip.enabled {
        format!("hybrid(epsilon={})", sys.tip.epsilon)
    } else {
        "non-hybrid".into()
    }
}

fn finish(out: &Path, summary: Summary, failed: Option<String>) -> Result<Summary, CliError> {
    output::write_text(&out.join("summary.txt"), &summary.render())?;
    match failed {
        Some(msg) => Err(CliError::Solver(msg)),
        None => Ok(summary),
    }
}

fn simulate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let run = run_one(cfg, out, false)?;
    let failed = run.traj.failure.as_ref().map(|e| e.to_string());
    finish(out, run.summary, failed)
}

const SWEEP_EPS_COLUMNS: &[&str] = &[
    "eps_pen",
    "status",
    "constraint_violation",
    "max_abs_s_ell",
    "gamma_hat",
    "gamma_state",
    "interior",
    "upper",
    "lower",
    "violations",
    "e0",
    "e_final",
];

fn sweep_eps(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let ContactLaw::SignoriniPenalty { g_lo, g_hi, .. } = cfg.laws.contact else {
        return Err(CliError::Config("sweep-eps needs `contact.law=penalty`".into()));
    };
    if cfg.sweeps.eps_pen.is_empty() {
        return Err(CliError::Config("sweep-eps needs a nonempty `sweep.eps_pen`".into()));
    }
    let rows: Vec<Result<Run, CliError>> = cfg
        .sweeps
        .eps_pen
        .par_iter()
        .enumerate()
        .map(|(idx, &eps_pen)| {
            let mut row = cfg.clone();
            row.laws.contact = ContactLaw::SignoriniPenalty { eps_pen, g_lo, g_hi };
            if cfg.sweeps.tie_tip {
                row.tip = TipParams {
                    epsilon: eps_pen,
                    enabled: true,
                    damping_on: !cfg.tip.enabled || cfg.tip.damping_on,
                };
            }
            let dir = out.join(format!("row_{idx:03}"));
            let run = run_one(&row, &dir, false)?;
            output::write_text(&dir.join("summary.txt"), &run.summary.render())?;
            Ok(run)
        })
        .collect();

    let mut table = Vec::new();
    let mut failures = 0;
    let mut violations = Vec::new();
    for (eps, row) in cfg.sweeps.eps_pen.iter().zip(&rows) {
        let run = match row {
            Ok(run) => run,
            Err(CliError::Io(msg)) => return Err(CliError::Io(msg.clone())),
            Err(e) => {
                failures += 1;
                let mut line = vec![num(*eps), format!("error: {}", e.to_string().replace(',', ";"))];
                line.resize(SWEEP_EPS_COLUMNS.len(), "NaN".into());
                table.push(line);
                continue;
            }
        };
        let s = &run.summary;
        let field = |k: &str| s.get(k).unwrap_or("NaN").to_string();
        let status = if run.failed() {
            failures += 1;
            "solver_failure".to_string()
        } else {
            violations.push(constraint_violation(&run.traj, g_lo, g_hi));
            "ok".to_string()
        };
        table.push(vec![
            num(*eps),
            status,
            field("constraint_violation"),
            field("max_abs_s_ell"),
            field("decay.gamma_hat"),
            field("decay.gamma_state"),
            field("complementarity.interior"),
            field("complementarity.upper"),
            field("complementarity.lower"),
            field("complementarity.violations"),
            field("e0"),
            field("e_final"),
        ]);
    }
    output::write_text(&out.join("sweep.csv"), &csv(output::SWEEP_SCHEMA, SWEEP_EPS_COLUMNS, table))?;

    let mut s = Summary::default();
    s.put("status", if failures == 0 { "ok" } else { "partial" })
        .put("rows", rows.len())
        .put("failed_rows", failures)
        .put("tie_tip", cfg.sweeps.tie_tip)
        .put(
            "violation_strictly_decreasing",
            failures == 0 && violations.windows(2).all(|w| w[1] < w[0]),
        );
    let failed = (failures > 0).then(|| format!("{failures} of {} sweep rows failed", rows.len()));
    finish(out, s, failed)
}

fn sweep_xi(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    if cfg.sweeps.xi.is_empty() {
        return Err(CliError::Config("sweep-xi needs a nonempty `sweep.xi`".into()));
    }
    let nes = if cfg.sweeps.ne.is_empty() {
        vec![cfg.ne]
    } else {
        cfg.sweeps.ne.clone()
    };
    let study = xi_study(&cfg.beam, &cfg.tip, &cfg.sweeps.xi, &nes, &cfg.xi_options())?;
    let rows = study.rows.iter().map(|r| {
        vec![
            r.num.to_string(),
            r.den.to_string(),
            r.ne.to_string(),
            num(r.abscissa),
            num(r.resolved_abscissa),
            r.verdict.as_str().to_string(),
        ]
    });
    output::write_text(
        &out.join("sweep.csv"),
        &csv(
            output::SWEEP_SCHEMA,
            &["num", "den", "ne", "abscissa", "resolved_abscissa", "verdict"],
            rows,
        ),
    )?;
    let mut s = Summary::default();
    s.put("status", "ok").put("rows", study.rows.len());
    for t in &study.trends {
        let key = format!("xi.{}_{}", t.num, t.den);
        s.put(&format!("{key}.verdict"), t.verdict.as_str())
            .put_num(&format!("{key}.coarse"), t.coarse)
            .put_num(&format!("{key}.fine"), t.fine)
            .put(&format!("{key}.approaches_zero"), t.approaches_zero);
    }
    finish(out, s, None)
}

fn spectrum_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let sys = assemble_beam(&cfg.beam, &cfg.tip, cfg.ne)?;
    let rep = system_spectrum(&sys, &cfg.spectral)?;
    output::write_text(&out.join("spectrum.csv"), &output::spectrum_csv(&rep))?;
    let mut s = Summary::default();
    s.put("status", "ok")
        .put("model", rep.model)
        .put("ne", rep.ne)
        .put("dim", rep.eigenvalues.len())
        .put_num("abscissa", rep.abscissa)
        .put_num("resolved_abscissa", rep.resolved_abscissa)
        .put_num("theta", rep.theta)
        .put_num("min_damping_gap", rep.min_damping_gap)
        .put_num("max_frequency", rep.max_frequency)
        .put_num("conjugate_defect", rep.conjugate_defect());
    if !cfg.sweeps.epsilon.is_empty() {
        let study = epsilon_study(&cfg.beam, &cfg.sweeps.epsilon, cfg.ne, &cfg.spectral)?;
        let rows = std::iter::once(&study.reference)
            .chain(&study.rows)
            .map(|r| vec![num(r.epsilon), num(r.abscissa), num(r.resolved_abscissa)]);
        output::write_text(
            &out.join("epsilon.csv"),
            &csv(output::SWEEP_SCHEMA, &["epsilon", "abscissa", "resolved_abscissa"], rows),
        )?;
    }
    finish(out, s, None)
}

fn observability_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let run = run_one(cfg, out, true)?;
    let mut s = run.summary;
    if let Some(e) = &run.traj.failure {
        return finish(out, s, Some(e.to_string()));
    }
    let rep = observability(&run.system, &run.traj, &cfg.multiplier)?;
    let rows = (0..rep.times.len()).map(|k| {
        [
            rep.times[k],
            rep.i_ell[k],
            rep.i_0[k],
            rep.l_series[k],
            rep.l0_series[k],
            rep.equivalence_ratio[k],
            rep.defect_ell_series[k],
            rep.defect_0_series[k],
        ]
        .iter()
        .map(|x| num(*x))
        .collect()
    });
    output::write_text(
        &out.join("observability.csv"),
        &csv(
            output::OBSERVABILITY_SCHEMA,
            &["t", "i_ell", "i_0", "l", "l0", "equivalence_ratio", "defect_ell", "defect_0"],
            rows,
        ),
    )?;
    s.put("multiplier.n", cfg.multiplier.n)
        .put_num("defect_ell", rep.defect_ell)
        .put_num("defect_0", rep.defect_0)
        .put_num("ratio_to_e0.ell", rep.ratio_to_e0.0)
        .put_num("ratio_to_e0.zero", rep.ratio_to_e0.1)
        .put_num("c0", rep.c0)
        .put_num("c1", rep.c1);
    finish(out, s, None)
}
