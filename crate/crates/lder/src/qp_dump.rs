//! JSON dump of a QP, `{"Q": …, "c": …, "A": …, "l": …, "u": …}`, with dense
//! row-major matrices. Infinite bounds are written as `null`. A diagonal `Q`
//! is loaded back as a diagonal quadratic term.

use std::path::Path;

use lder_core::{CsrMatrix, Matrix, QpProblem, QuadTerm};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpDump {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub l: Vec<Option<f64>>,
    pub u: Vec<Option<f64>>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl QpDump {
    pub fn from_problem(prob: &QpProblem) -> Self {
        QpDump {
            q: rows(&prob.quad().to_dense()),
            c: prob.linear().to_vec(),
            a: rows(&prob.constraints().to_dense()),
            l: prob.lower().iter().copied().map(finite_or_none).collect(),
            u: prob.upper().iter().copied().map(finite_or_none).collect(),
        }
    }

    pub fn to_problem(&self) -> Result<QpProblem> {
        let d = self.c.len();
        let q = Matrix::from_rows(&self.q, d)?;
        let diagonal = (0..q.rows()).all(|i| (0..q.cols()).all(|j| i == j || q[(i, j)] == 0.0));
        let q = if diagonal && q.rows() == d {
            QuadTerm::Diagonal((0..d).map(|i| q[(i, i)]).collect())
        } else {
            QuadTerm::Dense(q)
        };
        let mut a = CsrMatrix::new(d);
        for (i, r) in self.a.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Format(format!("constraint row {i} has {} entries, expected {d}", r.len())));
            }
            let entries: Vec<(usize, f64)> = r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
            a.push_row(&entries)?;
        }
        let l = self.l.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let u = self.u.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        Ok(QpProblem::new(q, self.c.clone(), a, Some(l), u)?)
    }
}

pub fn dump_qp(path: impl AsRef<Path>, prob: &QpProblem) -> Result<()> {
    let path = path.as_ref();
    let s = serde_json::to_string(&QpDump::from_problem(prob))?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn load_qp(path: impl AsRef<Path>) -> Result<QpProblem> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<QpDump>(&s)?.to_problem()
}
