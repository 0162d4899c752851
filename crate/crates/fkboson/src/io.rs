//! File formats: mode tables (CSV), Fock vectors/operators (JSON) and the
//! CSV tables written by the runner.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use fkboson_core::fock::TruncatedFock;
use fkboson_core::linalg::{CMatrix, C64};
use serde::{Deserialize, Serialize};

use crate::config::Complex;

/// Mode data as read from a CSV file or the inline configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeTable {
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
    /// Row-major `M × ν`.
    pub momentum: Vec<f64>,
    /// Per direction ℓ, one amplitude per mode (`G{ℓ}_re`, `G{ℓ}_im`).
    pub g: Vec<Vec<Complex>>,
    /// Per spin index j, one amplitude per mode (`F{j}_re`, `F{j}_im`).
    pub f: Vec<Vec<Complex>>,
}

/// Reads `mode_id, mu, omega, m_1..m_ν` plus optional `G{ℓ}_re/_im` and
/// `F{j}_re/_im` columns (ℓ, j starting at 1). Rows are sorted by `mode_id`.
pub fn read_mode_csv(path: &Path, nu: usize) -> anyhow::Result<ModeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).with_context(|| format!("missing column `{name}`"));
    let id_c = need("mode_id")?;
    let mu_c = need("mu")?;
    let om_c = need("omega")?;
    let m_c: Vec<usize> = (1..=nu).map(|l| need(&format!("m_{l}"))).collect::<anyhow::Result<_>>()?;
    let pairs = |prefix: &str| -> Vec<(usize, usize)> {
        (1..)
            .map_while(|j| Some((col(&format!("{prefix}{j}_re"))?, col(&format!("{prefix}{j}_im"))?)))
            .collect()
    };
    let g_c = pairs("G");
    let f_c = pairs("F");
    let mut rows: Vec<(u64, csv::StringRecord)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id: u64 = rec[id_c].parse().with_context(|| format!("row {}: bad mode_id", i + 1))?;
        rows.push((id, rec));
    }
    rows.sort_by_key(|r| r.0);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        bail!("duplicate mode_id");
    }
    let num = |rec: &csv::StringRecord, c: usize, id: u64| -> anyhow::Result<f64> {
        rec[c].parse::<f64>().with_context(|| format!("mode {id}: column `{}` is not a number", headers[c]))
    };
    let mut t = ModeTable { g: vec![vec![]; g_c.len()], f: vec![vec![]; f_c.len()], ..Default::default() };
    for (id, rec) in &rows {
        t.mu.push(num(rec, mu_c, *id)?);
        t.omega.push(num(rec, om_c, *id)?);
        for &c in &m_c {
            t.momentum.push(num(rec, c, *id)?);
        }
        for (dst, &(re, im)) in t.g.iter_mut().zip(&g_c) {
            dst.push([num(rec, re, *id)?, num(rec, im, *id)?]);
        }
        for (dst, &(re, im)) in t.f.iter_mut().zip(&f_c) {
            dst.push([num(rec, re, *id)?, num(rec, im, *id)?]);
        }
    }
    if t.mu.is_empty() {
        bail!("mode file has no rows");
    }
    Ok(t)
}

/// JSON container for Fock vectors and operators: the basis descriptor and
/// row-major `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockJson {
    pub modes: usize,
    pub max_bosons: usize,
    pub basis: Vec<Vec<u16>>,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl FockJson {
    /// A vector is stored as a single column.
    pub fn from_matrix(fock: &TruncatedFock, a: &CMatrix) -> Self {
        let entries = (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| (i, j))).map(|(i, j)| [a[(i, j)].re, a[(i, j)].im]).collect();
        Self { modes: fock.mode_count(), max_bosons: fock.max_bosons(), basis: fock.basis().to_vec(), rows: a.nrows(), cols: a.ncols(), entries }
    }

    pub fn to_matrix(&self) -> anyhow::Result<CMatrix> {
        if self.entries.len() != self.rows * self.cols {
            bail!("expected {} entries, found {}", self.rows * self.cols, self.entries.len());
        }
        Ok(CMatrix::from_row_iterator(self.rows, self.cols, self.entries.iter().map(|e| C64::new(e[0], e[1]))))
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Long decimal renderings such as `0.0000000000000750…` become `7.50…e-14`;
/// both forms are exact round trips.
fn compact(cell: String) -> String {
    match cell.parse::<f64>() {
        Ok(x) if cell.len() > 12 && x.is_finite() => format!("{x:e}"),
        _ => cell,
    }
}

/// A named CSV table; `name` becomes the file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let r: Vec<String> = row.into_iter().map(|s| compact(s.to_string())).collect();
        debug_assert_eq!(r.len(), self.headers.len(), "table {}", self.name);
        self.rows.push(r);
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rows `(i, j, re, im, se_re, se_im[, oracle_re, oracle_im, z])` of a matrix estimate.
pub fn matrix_table(name: &str, est: &CMatrix, se: &CMatrix, oracle: Option<&CMatrix>) -> Table {
    let mut t = match oracle {
        Some(_) => Table::new(name, &["i", "j", "re", "im", "se_re", "se_im", "oracle_re", "oracle_im", "z"]),
        None => Table::new(name, &["i", "j", "re", "im", "se_re", "se_im"]),
    };
    for i in 0..est.nrows() {
        for j in 0..est.ncols() {
            let (e, s) = (est[(i, j)], se[(i, j)]);
            let mut row = vec![i.to_string(), j.to_string(), e.re.to_string(), e.im.to_string(), s.re.to_string(), s.im.to_string()];
            if let Some(o) = oracle {
                let o = o[(i, j)];
                let z = fkboson_core::feynman_kac::max_z(
                    &CMatrix::from_element(1, 1, e),
                    &CMatrix::from_element(1, 1, s),
                    &CMatrix::from_element(1, 1, o),
                );
                row.extend([o.re.to_string(), o.im.to_string(), z.to_string()]);
            }
            t.push(row);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use fkboson_core::modespace::ModeSpace;

    #[test]
    fn mode_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("modes.csv");
        fs::write(&p, "mode_id,mu,omega,m_1,G1_re,G1_im,F1_re,F1_im\n1,1.0,1.0,-0.5,0.2,0.0,0.3,0.0\n0,1.0,1.0,0.5,0.2,0.0,0.3,0.0\n").unwrap();
        let t = read_mode_csv(&p, 1).unwrap();
        assert_eq!(t.momentum, vec![0.5, -0.5]);
        assert_eq!(t.g, vec![vec![[0.2, 0.0]; 2]]);
        assert_eq!(t.f.len(), 1);
        fs::write(&p, "mode_id,mu,omega\n0,1,1\n").unwrap();
        assert!(read_mode_csv(&p, 1).unwrap_err().to_string().contains("m_1"));
    }

    #[test]
    fn fock_json_roundtrip() {
        let modes = ModeSpace::without_momentum(vec![1.0, 1.0], vec![1.0, 2.0], 1).unwrap();
        let fock = TruncatedFock::new(&modes, 2).unwrap();
        let a = fock.d_gamma_real(&[1.0, 2.0]).unwrap();
        let j = FockJson::from_matrix(&fock, &a);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("op.json");
        j.write(&p).unwrap();
        let back = FockJson::read(&p).unwrap();
        assert_eq!(back.to_matrix().unwrap(), a);
        assert_eq!(back.basis.len(), 6);
    }
}
