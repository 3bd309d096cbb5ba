//! JSON files for systems, converter inputs and matrices.
//!
//! A matrix is a row-major array of rows, each a list of `[re, im]` pairs.
//! A flat row-major list of pairs is also accepted for square matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::convert::{ScalarEquationSpec, SturmLiouvilleSpec};
use crate::error::{Error, Result};
use crate::lattice::{ConjoinedBasis, HamiltonianSystem, LatticeWindow, Trajectory};
use crate::linalg::{CMat, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixJson {
    Rows(Vec<Vec<[f64; 2]>>),
    Flat(Vec<[f64; 2]>),
}

impl MatrixJson {
    pub fn from_mat(m: &CMat) -> Self {
        MatrixJson::Rows((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect())
    }

    /// `cols` is used for empty row lists and flat input.
    pub fn to_mat(&self, cols: Option<usize>) -> Result<CMat> {
        match self {
            MatrixJson::Rows(rows) => {
                let c = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
                if rows.iter().any(|r| r.len() != c) {
                    return Err(Error::ShapeMismatch("ragged matrix rows".into()));
                }
                Ok(CMat::from_fn(rows.len(), c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
            }
            MatrixJson::Flat(vals) => {
                let c = match cols {
                    Some(c) => c,
                    None => {
                        let s = (vals.len() as f64).sqrt().round() as usize;
                        if s * s != vals.len() {
                            return Err(Error::ShapeMismatch(format!("flat matrix of {} entries is not square", vals.len())));
                        }
                        s
                    }
                };
                if c == 0 || vals.len() % c != 0 {
                    return Err(Error::ShapeMismatch(format!("{} entries do not fill rows of {c}", vals.len())));
                }
                Ok(CMat::from_fn(vals.len() / c, c, |i, j| C64::new(vals[i * c + j][0], vals[i * c + j][1])))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Constant(MatrixJson),
    Sequence(Vec<MatrixJson>),
}

impl Coefficient {
    fn expand(&self, name: &str, n: usize, len: usize) -> Result<Vec<CMat>> {
        let mats = match self {
            Coefficient::Constant(m) => vec![m.to_mat(Some(n))?; len],
            Coefficient::Sequence(ms) => ms.iter().map(|m| m.to_mat(Some(n))).collect::<Result<Vec<_>>>()?,
        };
        if mats.len() != len {
            return Err(Error::ShapeMismatch(format!("{name}: {} matrices for a window of {len}", mats.len())));
        }
        if let Some(m) = mats.iter().find(|m| m.shape() != (n, n)) {
            return Err(Error::ShapeMismatch(format!("{name}: expected {n}×{n}, found {:?}", m.shape())));
        }
        Ok(mats)
    }

    fn compress(seq: &[CMat]) -> Self {
        if seq.windows(2).all(|w| w[0] == w[1]) {
            Coefficient::Constant(MatrixJson::from_mat(&seq[0]))
        } else {
            Coefficient::Sequence(seq.iter().map(MatrixJson::from_mat).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub t_start: usize,
    pub t_end: usize,
    #[serde(rename = "A")]
    pub a: Coefficient,
    #[serde(rename = "B")]
    pub b: Coefficient,
    #[serde(rename = "C")]
    pub c: Coefficient,
    #[serde(rename = "W")]
    pub w: Coefficient,
}

impl SystemFile {
    pub fn from_system(sys: &HamiltonianSystem) -> Self {
        let win = sys.window();
        let seq = |f: &dyn Fn(usize) -> CMat| Coefficient::compress(&win.iter().map(f).collect::<Vec<_>>());
        Self {
            n: sys.n(),
            t_start: win.start,
            t_end: win.end,
            a: seq(&|t| sys.a(t).clone()),
            b: seq(&|t| sys.b(t).clone()),
            c: seq(&|t| sys.c(t).clone()),
            w: seq(&|t| sys.w(t).clone()),
        }
    }

    pub fn to_system(&self) -> Result<HamiltonianSystem> {
        let window = LatticeWindow::new(self.t_start, self.t_end)?;
        let len = window.len();
        let n = self.n;
        HamiltonianSystem::new(
            n,
            window,
            self.a.expand("A", n, len)?,
            self.b.expand("B", n, len)?,
            self.c.expand("C", n, len)?,
            self.w.expand("W", n, len)?,
        )
    }
}

pub fn system_from_json(text: &str) -> Result<HamiltonianSystem> {
    serde_json::from_str::<SystemFile>(text)?.to_system()
}

pub fn system_to_json(sys: &HamiltonianSystem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SystemFile::from_system(sys))?)
}

pub fn matrix_from_json(text: &str) -> Result<CMat> {
    serde_json::from_str::<MatrixJson>(text)?.to_mat(None)
}

pub fn matrix_to_json(m: &CMat) -> Result<String> {
    Ok(serde_json::to_string(&MatrixJson::from_mat(m))?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SturmLiouvilleFile {
    pub n: usize,
    pub t_start: usize,
    pub t_end: usize,
    #[serde(rename = "P")]
    pub p: Coefficient,
    #[serde(rename = "Q")]
    pub q: Coefficient,
    #[serde(rename = "W")]
    pub w: Coefficient,
}

impl SturmLiouvilleFile {
    pub fn to_spec(&self) -> Result<SturmLiouvilleSpec> {
        let window = LatticeWindow::new(self.t_start, self.t_end)?;
        let len = window.len();
        Ok(SturmLiouvilleSpec {
            n: self.n,
            window,
            p: self.p.expand("P", self.n, len)?,
            q: self.q.expand("Q", self.n, len + 1)?,
            w: self.w.expand("W", self.n, len + 1)?,
        })
    }
}

/// Input of the `convert` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConverterFile {
    Scalar(ScalarEquationSpec),
    SturmLiouville(SturmLiouvilleFile),
}

impl ConverterFile {
    pub fn convert(&self) -> Result<HamiltonianSystem> {
        Ok(match self {
            ConverterFile::Scalar(s) => crate::convert::from_scalar(s)?.system,
            ConverterFile::SturmLiouville(f) => crate::convert::from_sturm_liouville(&f.to_spec()?)?.system,
        })
    }
}

/// `t,re(y_0),im(y_0),…` per line.
pub fn trajectory_csv(y: &Trajectory) -> String {
    let dim = y.values()[0].len();
    let mut out = String::from("t");
    for i in 0..dim {
        let _ = write!(out, ",re{i},im{i}");
    }
    out.push('\n');
    for (k, v) in y.values().iter().enumerate() {
        let _ = write!(out, "{}", y.start() + k);
        for z in v.iter() {
            let _ = write!(out, ",{:.14e},{:.14e}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

/// Columns of a basis laid side by side; entries of column `j` are `y{j}_{i}`.
pub fn basis_csv(y: &ConjoinedBasis) -> String {
    let (r, k) = y.values()[0].shape();
    let mut out = String::from("t");
    for j in 0..k {
        for i in 0..r {
            let _ = write!(out, ",re{j}_{i},im{j}_{i}");
        }
    }
    out.push('\n');
    for (s, m) in y.values().iter().enumerate() {
        let _ = write!(out, "{}", y.start() + s);
        for j in 0..k {
            for i in 0..r {
                let _ = write!(out, ",{:.14e},{:.14e}", m[(i, j)].re, m[(i, j)].im);
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, ONE, ZERO};

    #[test]
    fn round_trip_constant_and_sequence() {
        let win = LatticeWindow::new(2, 6).unwrap();
        let sys = HamiltonianSystem::free(win);
        let text = system_to_json(&sys).unwrap();
        assert!(text.contains("\"constant\""));
        assert_eq!(system_from_json(&text).unwrap(), sys);
        let w = win.iter().map(|t| CMat::from_element(1, 1, c(0.5f64.powi(t as i32)))).collect();
        let one = vec![CMat::from_element(1, 1, ONE); 5];
        let zero = vec![CMat::from_element(1, 1, ZERO); 5];
        let sys = HamiltonianSystem::new(1, win, zero.clone(), one, zero, w).unwrap();
        let text = system_to_json(&sys).unwrap();
        assert!(text.contains("\"sequence\""));
        assert_eq!(system_from_json(&text).unwrap(), sys);
    }

    #[test]
    fn flat_and_nested_matrices() {
        let a = matrix_from_json("[[[1,0],[0,2]],[[3,0],[4,-1]]]").unwrap();
        let b = matrix_from_json("[[1,0],[0,2],[3,0],[4,-1]]").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[(1, 1)], C64::new(4.0, -1.0));
        assert!(matrix_from_json("[[1,0],[0,2],[3,0]]").is_err());
    }

    #[test]
    fn wrong_shape_rejected() {
        let text = r#"{"n":2,"t_start":0,"t_end":3,"A":{"constant":[[[0,0]]]},"B":{"constant":[[[1,0]]]},
            "C":{"constant":[[[0,0]]]},"W":{"constant":[[[1,0]]]}}"#;
        assert!(matches!(system_from_json(text), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn converter_file() {
        let text = r#"{"kind":"scalar","n":1,"t_start":0,"t_end":4,"p":[[0,0,0,0,0,0],[1,1,1,1,1,1]],
            "q":[[0,0,0,0,0,0]],"w":[1,1,1,1,1,1]}"#;
        let f: ConverterFile = serde_json::from_str(text).unwrap();
        let sys = f.convert().unwrap();
        assert_eq!(sys, HamiltonianSystem::free(LatticeWindow::new(0, 4).unwrap()));
    }
}
