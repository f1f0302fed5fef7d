//! Text problem files: one header line, `key value` lines, and matrices as
//! base64 blobs of little-endian `f64` values in row-major order.
//!
//! ```text
//! mpc-warmstart-problem 1
//! name sys1
//! horizon 10
//! tau 1
//! matrix A 2 2 <base64>
//! ...
//! end
//! ```

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::neural::mlp::{decode_f64, encode_f64};
use crate::polytope::Polytope;
use crate::systems::{DiscreteLti, LtiProblemSpec};

pub const PROBLEM_HEADER: &str = "mpc-warmstart-problem";
pub const PROBLEM_VERSION: u32 = 1;

const MATRICES: [&str; 11] = ["A", "B", "Q", "R", "P", "Ax", "bx", "Au", "bu", "Af", "bf"];

fn matrix_line(name: &str, m: &Mat) -> String {
    let row_major: Vec<f64> = m.transpose().as_slice().to_vec();
    format!("matrix {name} {} {} {}\n", m.nrows(), m.ncols(), encode_f64(&row_major))
}

pub fn write_problem(spec: &LtiProblemSpec) -> String {
    let mut s = format!("{PROBLEM_HEADER} {PROBLEM_VERSION}\n");
    s.push_str(&format!("name {}\n", spec.name));
    s.push_str(&format!("horizon {}\n", spec.horizon));
    s.push_str(&format!("tau {}\n", spec.model.tau));
    let col = |v: &Vector| Mat::from_column_slice(v.len(), 1, v.as_slice());
    let mats: [Mat; 11] = [
        spec.model.a.clone(),
        spec.model.b.clone(),
        spec.q.clone(),
        spec.r.clone(),
        spec.p.clone(),
        spec.x_set.a.clone(),
        col(&spec.x_set.b),
        spec.u_set.a.clone(),
        col(&spec.u_set.b),
        spec.xf_set.a.clone(),
        col(&spec.xf_set.b),
    ];
    for (name, m) in MATRICES.iter().zip(&mats) {
        s.push_str(&matrix_line(name, m));
    }
    s.push_str("end\n");
    s
}

/// SHA-256 of the problem file text, in hex.
pub fn spec_hash(spec: &LtiProblemSpec) -> String {
    hex::encode(Sha256::digest(write_problem(spec).as_bytes()))
}

pub fn read_problem(text: &str) -> Result<LtiProblemSpec> {
    let mut offset = 0;
    let mut lines = Vec::new();
    for line in text.split_inclusive('\n') {
        lines.push((offset, line.trim_end()));
        offset += line.len();
    }
    let perr = |offset: usize, message: String| Error::Parse { offset, message };
    let mut it = lines.into_iter().filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (off, header) = it.next().ok_or_else(|| perr(0, "empty problem file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(PROBLEM_HEADER) {
        return Err(perr(off, format!("expected '{PROBLEM_HEADER}' header")));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| perr(off, "missing format version".into()))?;
    if version != PROBLEM_VERSION {
        return Err(Error::Version { found: version, expected: PROBLEM_VERSION });
    }

    let mut name = String::from("custom");
    let mut horizon = None;
    let mut tau = 1.0;
    let mut mats: Vec<Option<Mat>> = vec![None; MATRICES.len()];
    let mut ended = false;
    for (off, line) in it {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        match key {
            "name" => name = parts.collect::<Vec<_>>().join(" "),
            "horizon" => {
                horizon = Some(
                    parts.next().and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| perr(off, "bad horizon".into()))?,
                )
            }
            "tau" => {
                tau = parts.next().and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| perr(off, "bad tau".into()))?
            }
            "matrix" => {
                let label = parts.next().ok_or_else(|| perr(off, "missing matrix name".into()))?;
                let slot = MATRICES
                    .iter()
                    .position(|m| *m == label)
                    .ok_or_else(|| perr(off, format!("unknown matrix '{label}'")))?;
                let rows: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| perr(off, "bad row count".into()))?;
                let cols: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| perr(off, "bad column count".into()))?;
                let blob = parts.next().unwrap_or("");
                let data = decode_f64(blob, rows * cols).map_err(|e| match e {
                    Error::Parse { message, .. } => perr(off, format!("matrix {label}: {message}")),
                    other => other,
                })?;
                mats[slot] = Some(Mat::from_row_slice(rows, cols, &data));
            }
            "end" => {
                ended = true;
                break;
            }
            other => return Err(perr(off, format!("unknown key '{other}'"))),
        }
    }
    if !ended {
        return Err(perr(text.len(), "missing 'end' line (truncated file?)".into()));
    }
    let horizon = horizon.ok_or_else(|| perr(text.len(), "missing horizon".into()))?;
    let mut take = |i: usize| mats[i].take().ok_or_else(|| perr(text.len(), format!("missing matrix {}", MATRICES[i])));
    let (a, b, q, r, p) = (take(0)?, take(1)?, take(2)?, take(3)?, take(4)?);
    let vec_of = |m: Mat| Vector::from_column_slice(m.as_slice());
    let x_set = Polytope::new(take(5)?, vec_of(take(6)?))?;
    let u_set = Polytope::new(take(7)?, vec_of(take(8)?))?;
    let xf_set = Polytope::new(take(9)?, vec_of(take(10)?))?;
    let spec = LtiProblemSpec {
        name,
        model: DiscreteLti::new(a, b, tau)?,
        x_set,
        u_set,
        xf_set,
        q,
        r,
        p,
        horizon,
    };
    spec.validate()?;
    Ok(spec)
}
