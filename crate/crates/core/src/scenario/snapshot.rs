//! Field snapshots: canonical CSV and a legacy-VTK mirror.
//!
//! CSV columns, one row per cell: `x[, y]`, `v_*`, `Ee_*`, `Ep_*`,
//! `alpha_1..alpha_ℓ`, `chi`, `mu`, `trS`, `phi`. Tensor components use the
//! packed order `xx[, xy, yy]`.
//!
//! VTK (ASCII `STRUCTURED_POINTS`, cell data): `velocity` (VECTORS),
//! `elastic_strain` and `inelastic_strain` (TENSORS), then SCALARS
//! `alpha_1..alpha_ℓ`, `chi`, `mu`, `trace_stress`, `free_energy`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{free_energy, Material};
use crate::scheme::{alpha_at, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Csv,
    Vtk,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Vtk => "vtk",
        }
    }
}

/// One written snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub step: usize,
    pub path: PathBuf,
    pub fields: Vec<String>,
    pub format: SnapshotFormat,
}

/// Index of all snapshots of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub scenario: String,
    pub entries: Vec<SnapshotEntry>,
}

const SYM_NAMES_1: [&str; 1] = ["xx"];
const SYM_NAMES_2: [&str; 3] = ["xx", "xy", "yy"];

/// CSV header for a `d`-dimensional grid with `ell` internal variables.
pub fn snapshot_columns(d: usize, ell: usize) -> Vec<String> {
    let axes = ["x", "y"];
    let sym: &[&str] = if d == 2 { &SYM_NAMES_2 } else { &SYM_NAMES_1 };
    let mut c: Vec<String> = axes[..d].iter().map(|s| s.to_string()).collect();
    c.extend(axes[..d].iter().map(|a| format!("v_{a}")));
    c.extend(sym.iter().map(|s| format!("Ee_{s}")));
    c.extend(sym.iter().map(|s| format!("Ep_{s}")));
    c.extend((1..=ell).map(|k| format!("alpha_{k}")));
    c.extend(["chi", "mu", "trS", "phi"].iter().map(|s| s.to_string()));
    c
}

fn rows(state: &State<f64>, mat: &Material<f64>) -> Vec<Vec<f64>> {
    let g = &state.grid;
    let dim = g.dim();
    let d = g.d();
    g.interior_indices()
        .into_iter()
        .map(|c| {
            let x = g.center(c);
            let mut r: Vec<f64> = x[..d].to_vec();
            r.extend((0..d).map(|k| state.v.at(k, c)));
            r.extend(state.ee.sym_at(dim, c).packed().iter().copied());
            r.extend(state.ep.sym_at(dim, c).packed().iter().copied());
            r.extend((0..state.ell()).map(|k| state.alpha.at(k, c)));
            r.push(state.chi.at(0, c));
            r.push(state.mu.at(0, c));
            r.push(state.s.sym_at(dim, c).trace());
            r.push(free_energy(&state.ee.sym_at(dim, c), &alpha_at(&state.alpha, c), state.chi.at(0, c), &mat.biot));
            r
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `state` to `path` in `format`; returns the field names written.
pub fn export_snapshot(state: &State<f64>, mat: &Material<f64>, format: SnapshotFormat, path: &Path) -> Result<Vec<String>> {
    let cols = snapshot_columns(state.grid.d(), state.ell());
    let data = rows(state, mat);
    let text = match format {
        SnapshotFormat::Csv => {
            let mut s = cols.join(",");
            s.push('\n');
            for r in &data {
                let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s
        }
        SnapshotFormat::Vtk => vtk_text(state, &data),
    };
    write_file(path, &text)?;
    Ok(cols[state.grid.d()..].to_vec())
}

fn vtk_text(state: &State<f64>, data: &[Vec<f64>]) -> String {
    let g = &state.grid;
    let d = g.d();
    let ms = g.dim().sym_len();
    let ell = state.ell();
    let ny = if d == 2 { g.cells(1) } else { 1 };
    let hy = if d == 2 { g.h(1) } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "porodyn snapshot t={}", state.t);
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 2", g.cells(0) + 1, ny + 1);
    let _ = writeln!(s, "ORIGIN 0 0 0\nSPACING {} {} 1", g.h(0), hy);
    let _ = writeln!(s, "CELL_DATA {}", data.len());
    let v0 = d;
    let _ = writeln!(s, "VECTORS velocity double");
    for r in data {
        let vy = if d == 2 { r[v0 + 1] } else { 0.0 };
        let _ = writeln!(s, "{} {} 0", r[v0], vy);
    }
    for (name, off) in [("elastic_strain", v0 + d), ("inelastic_strain", v0 + d + ms)] {
        let _ = writeln!(s, "TENSORS {name} double");
        for r in data {
            if d == 2 {
                let _ = writeln!(s, "{} {} 0\n{} {} 0\n0 0 0", r[off], r[off + 1], r[off + 1], r[off + 2]);
            } else {
                let _ = writeln!(s, "{} 0 0\n0 0 0\n0 0 0", r[off]);
            }
        }
    }
    let sc0 = v0 + d + 2 * ms;
    let mut names: Vec<String> = (1..=ell).map(|k| format!("alpha_{k}")).collect();
    names.extend(["chi", "mu", "trace_stress", "free_energy"].iter().map(|s| s.to_string()));
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for r in data {
            let _ = writeln!(s, "{}", r[sc0 + i]);
        }
    }
    s
}

/// Reads a snapshot CSV back: header and rows.
pub fn read_snapshot_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|x| x.parse::<f64>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((header, rows))
}

/// Reads every cell-data block of a legacy VTK file written by
/// [`export_snapshot`]; vectors and tensors are returned flattened.
pub fn read_vtk_cell_data(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Config(format!("{}: {m}", path.display()));
    let mut out = BTreeMap::new();
    let mut tokens = text.split_whitespace().peekable();
    let mut cells = 0usize;
    while let Some(tok) = tokens.next() {
        match tok {
            "CELL_DATA" => cells = tokens.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad CELL_DATA"))?,
            "SCALARS" | "VECTORS" | "TENSORS" => {
                let name = tokens.next().ok_or_else(|| bad("missing name"))?.to_string();
                tokens.next();
                let per = match tok {
                    "SCALARS" => {
                        tokens.next();
                        tokens.next();
                        tokens.next();
                        1
                    }
                    "VECTORS" => 3,
                    _ => 9,
                };
                let vals = (0..cells * per)
                    .map(|_| tokens.next().and_then(|x| x.parse::<f64>().ok()).ok_or_else(|| bad("truncated data")))
                    .collect::<Result<Vec<f64>>>()?;
                out.insert(name, vals);
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::scenario::ScenarioConfig;
    use crate::tensor::Dim;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::preset("damage-pulse").unwrap()
    }

    #[test]
    fn one_dimensional_csv_has_one_row_per_cell() {
        let c = cfg();
        let g = Grid::boxed(Dim::One, 4, 1.0).unwrap();
        let s = State::ground(&g, &c.moduli, &c.material()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        export_snapshot(&s, &c.material(), SnapshotFormat::Csv, &p).unwrap();
        let (h, rows) = read_snapshot_csv(&p).unwrap();
        assert_eq!(h, ["x", "v_x", "Ee_xx", "Ep_xx", "alpha_1", "chi", "mu", "trS", "phi"]);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r[8] == 0.0));
    }

    #[test]
    fn csv_and_vtk_round_trip() {
        let mut c = cfg();
        c.domain.n = 6;
        c.initial.ee = vec![crate::preset::Profile::Noise { amplitude: vec![0.1, 0.05, 0.1] }];
        c.initial.v = vec![crate::preset::Profile::Noise { amplitude: vec![1.0, 1.0] }];
        let s = c.initial_state().unwrap();
        let mat = c.material();
        let dir = tempfile::tempdir().unwrap();
        let pc = dir.path().join("s.csv");
        let pv = dir.path().join("s.vtk");
        export_snapshot(&s, &mat, SnapshotFormat::Csv, &pc).unwrap();
        export_snapshot(&s, &mat, SnapshotFormat::Vtk, &pv).unwrap();
        let (_, back) = read_snapshot_csv(&pc).unwrap();
        assert_eq!(back, rows(&s, &mat));
        let vtk = read_vtk_cell_data(&pv).unwrap();
        let chi_col = 2 + 2 + 3 + 3 + 1;
        for (i, r) in back.iter().enumerate() {
            assert!((vtk["chi"][i] - r[chi_col]).abs() <= 1e-15 * r[chi_col].abs().max(1.0));
            assert!((vtk["velocity"][3 * i] - r[2]).abs() <= 1e-15);
            assert!((vtk["elastic_strain"][9 * i + 1] - r[5]).abs() <= 1e-15);
        }
    }
}
