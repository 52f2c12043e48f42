//! CSV tables, `key=value` summaries and binary state snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use tbeam_core::{SpectralReport, State, Trajectory};

use crate::CliError;

pub const TRAJECTORY_SCHEMA: &str = "# schema=tbeam-trajectory/1";
pub const SPECTRUM_SCHEMA: &str = "# schema=tbeam-spectrum/1";
pub const SWEEP_SCHEMA: &str = "# schema=tbeam-sweep/1";
pub const OBSERVABILITY_SCHEMA: &str = "# schema=tbeam-observability/1";

pub const TRAJECTORY_COLUMNS: &[&str] = &[
    "t",
    "e_total",
    "kinetic",
    "potential_shear",
    "potential_bend",
    "n_p",
    "tip_energy",
    "fhat_int",
    "ghat_int",
    "dissipated_cum",
    "v",
    "v_t",
    "s_ell",
    "dissipation_rate",
    "balance_residual",
    "newton_iterations",
];

const SNAPSHOT_MAGIC: &[u8; 8] = b"TBEAMSNP";
const SNAPSHOT_VERSION: u32 = 1;

/// Round-trip float formatting: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

/// Builds a CSV body with a schema line and a header line.
pub fn csv(schema: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    writeln!(out, "{schema}").unwrap();
    writeln!(out, "{}", columns.join(",")).unwrap();
    for row in rows {
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let rows = traj.samples.iter().map(|s| {
        let e = &s.energy;
        let mut row: Vec<String> = [
            s.t,
            e.e_total,
            e.kinetic,
            e.potential_shear,
            e.potential_bend,
            e.n_p,
            e.tip_energy,
            e.fhat_int,
            e.ghat_int,
            e.dissipated_cum,
            s.v,
            s.v_t,
            s.s_ell,
            s.dissipation_rate,
            s.balance_residual,
        ]
        .iter()
        .map(|x| num(*x))
        .collect();
        row.push(s.newton_iterations.to_string());
        row
    });
    csv(TRAJECTORY_SCHEMA, TRAJECTORY_COLUMNS, rows)
}

pub fn spectrum_csv(rep: &SpectralReport) -> String {
    let rows = rep.eigenvalues.iter().map(|z| vec![num(z.re), num(z.im)]);
    csv(SPECTRUM_SCHEMA, &["re", "im"], rows)
}

/// Ordered `key=value` lines.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn put_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, num(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn encode_snapshot(state: &State) -> Vec<u8> {
    let n = state.phi.len();
    let mut buf = Vec::with_capacity(8 + 4 + 8 + 8 * (1 + 4 * n));
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for field in [&state.phi, &state.psi, &state.phi_t, &state.psi_t] {
        for x in field.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<State, String> {
    let header = 8 + 4 + 8;
    if bytes.len() < header + 8 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err("not a tbeam snapshot".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(format!("unsupported snapshot version {version}"));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(4)
        .and_then(|k| k.checked_add(1))
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(header));
    if expected != Some(bytes.len()) {
        return Err(format!("snapshot length {} does not match {n} nodes", bytes.len()));
    }
    let mut words = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let t = words.next().unwrap();
    let mut take = || words.by_ref().take(n).collect::<Vec<f64>>();
    Ok(State {
        phi: take(),
        psi: take(),
        phi_t: take(),
        psi_t: take(),
        t,
    })
}

pub fn write_snapshot(path: &Path, state: &State) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, encode_snapshot(state)).map_err(|e| io_err(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<State, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_snapshot(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let s = State {
            phi: vec![0.0, 1.0 / 3.0, -2.5e-300],
            psi: vec![f64::MIN_POSITIVE, 7.0, -0.0],
            phi_t: vec![0.0, 1e17, std::f64::consts::PI],
            psi_t: vec![-1.0, 2.0, 3.0],
            t: 0.1 + 0.2,
        };
        let back = decode_snapshot(&encode_snapshot(&s)).unwrap();
        for (a, b) in [(&s.phi, &back.phi), (&s.psi, &back.psi), (&s.phi_t, &back.phi_t), (&s.psi_t, &back.psi_t)] {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(s.t.to_bits(), back.t.to_bits());
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let s = State {
            phi: vec![1.0; 4],
            psi: vec![1.0; 4],
            phi_t: vec![1.0; 4],
            psi_t: vec![1.0; 4],
            t: 0.0,
        };
        let good = encode_snapshot(&s);
        assert!(decode_snapshot(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_snapshot(&bad).is_err());
        let mut future = good;
        future[8] = 2;
        assert!(decode_snapshot(&future).is_err());
    }

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -1e-310] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
