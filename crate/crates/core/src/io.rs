//! File formats: matrices as JSON row lists, trajectory CSV with its meta
//! sidecar, and a small helper for writing plot-ready CSV tables.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::{Trajectory, TrajectoryMeta};

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::data(format!(
            "row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Path of the JSON sidecar that accompanies a trajectory CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `k,x1..xn[,u1..um]`, one row per time index.
///
/// The last row has no input (there is no transition out of `x[K]`), so its
/// `u` cells are left empty.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.n();
    let m = traj.inputs().map_or(0, |u| u.ncols());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for k in 0..=traj.horizon() {
        let mut rec = vec![k.to_string()];
        rec.extend(traj.states().row(k).iter().map(|v| v.to_string()));
        if let Some(u) = traj.inputs() {
            if k < traj.horizon() {
                rec.extend(u.row(k).iter().map(|v| v.to_string()));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), m));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.first() != Some(&"k") {
        return Err(Error::data(format!(
            "{}: first column must be `k`",
            path.display()
        )));
    }
    let x_idx: Vec<usize> = (0..cols.len())
        .filter(|&i| is_channel(cols[i], 'x'))
        .collect();
    let u_idx: Vec<usize> = (0..cols.len())
        .filter(|&i| is_channel(cols[i], 'u'))
        .collect();
    if x_idx.is_empty() {
        return Err(Error::data(format!("{}: no x columns", path.display())));
    }

    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 1;
        let parse = |i: usize| -> Result<f64> {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "row {row}, column {}: not a number: {cell:?}",
                    cols[i]
                ))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::data(format!(
                    "row {row}, column {}: non-finite value",
                    cols[i]
                )))
            }
        };
        states.push(
            x_idx
                .iter()
                .map(|&i| parse(i))
                .collect::<Result<Vec<_>>>()?,
        );
        if !u_idx.is_empty()
            && u_idx
                .iter()
                .any(|&i| !rec.get(i).unwrap_or("").trim().is_empty())
        {
            inputs.push(
                u_idx
                    .iter()
                    .map(|&i| parse(i))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    if states.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    let states = matrix_from_rows(&states)?;
    let inputs = if u_idx.is_empty() {
        None
    } else {
        Some(matrix_from_rows(&inputs)?)
    };
    let mut traj = Trajectory::observed(states, inputs)?;
    let meta = meta_path(path);
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        traj.meta = serde_json::from_str::<TrajectoryMeta>(&text)?;
    }
    Ok(traj)
}

fn is_channel(name: &str, prefix: char) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Writes a CSV table given a header and rows of preformatted cells.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac::FracSystem;
    use crate::sim::{gaussian_inputs, simulate_exact};
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn ragged_rows_rejected() {
        assert!(matrix_from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matrix_to_rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn trajectory_csv_roundtrip_with_inputs() {
        let sys = FracSystem::new(
            vec![0.5, 0.6],
            dmatrix![0.1, 0.0; 0.0, 0.2],
            Some(dmatrix![1.0; 0.0]),
            0.1,
        )
        .unwrap();
        let u = gaussian_inputs(1, 12, 1.0, 4).unwrap();
        let t = simulate_exact(&sys, &dvector![1.0, 0.5], 12, 4, Some(&u)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&t, File::create(&path).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k,x1,x2,u1\n"));
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.states(), t.states());
        assert_eq!(back.inputs(), t.inputs());
    }

    #[test]
    fn bad_cells_are_reported_by_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "k,x1\n0,1.0\n1,abc\n").unwrap();
        let err = read_trajectory_csv(&path).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        std::fs::write(&path, "k,x1\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
    }
}
