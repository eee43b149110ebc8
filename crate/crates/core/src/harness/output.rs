//! Trajectory and aggregate CSV files and the reference cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{AdmmError, Result};
use crate::metrics::{ExpectationCurve, ReferenceMethod, ReferenceSolution};
use crate::solvers::Trajectory;
use crate::types::Vector;

/// Column order of every per-replication trajectory file.
pub const TRAJECTORY_HEADER: [&str; 9] = [
    "k",
    "eta",
    "obj_gap_eq2",
    "feas_eq2",
    "err_rho_eq2",
    "obj_gap_eq10",
    "feas_eq10",
    "err_rho_eq10",
    "step_ms",
];

/// Column order of the aggregate file.
pub const AGGREGATE_HEADER: [&str; 13] = [
    "t",
    "mean_obj_gap_eq2",
    "stderr_obj_gap_eq2",
    "mean_feas_eq2",
    "stderr_feas_eq2",
    "mean_err_rho_eq2",
    "stderr_err_rho_eq2",
    "mean_obj_gap_eq10",
    "stderr_obj_gap_eq10",
    "mean_feas_eq10",
    "stderr_feas_eq10",
    "mean_err_rho_eq10",
    "stderr_err_rho_eq10",
];

fn io_err(path: &Path, e: impl std::fmt::Display) -> AdmmError {
    AdmmError::Io(format!("{}: {e}", path.display()))
}

/// Finite values in shortest round-trip form; `NaN` becomes an empty field.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

/// Creates `dir` and confirms a file can be written inside it.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, format!("cannot create output directory: {e}")))?;
    let probe = dir.join(".sadmm-write-probe");
    fs::write(&probe, b"").map_err(|e| io_err(dir, format!("output directory is not writable: {e}")))?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| io_err(path, e))?;
    for r in &traj.records {
        w.write_record([
            r.k.to_string(),
            fmt_num(r.eta),
            fmt_num(r.shifted.gap),
            fmt_num(r.shifted.feasibility),
            fmt_num(r.shifted.value),
            fmt_num(r.aligned.gap),
            fmt_num(r.aligned.feasibility),
            fmt_num(r.aligned.value),
            format!("{:.6}", r.step_ms),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Six curves in [`AGGREGATE_HEADER`] order: gap, feasibility and error for each averaging.
pub struct AggregateCurves<'a> {
    pub curves: [&'a ExpectationCurve; 6],
}

pub fn write_aggregate_csv(path: &Path, agg: &AggregateCurves<'_>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(AGGREGATE_HEADER).map_err(|e| io_err(path, e))?;
    let n = agg.curves[0].t.len();
    for i in 0..n {
        let mut row = vec![agg.curves[0].t[i].to_string()];
        for c in agg.curves {
            row.push(fmt_num(c.mean[i]));
            row.push(fmt_num(c.stderr[i]));
        }
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reference point cached on disk, keyed by a problem fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedReference {
    pub fingerprint: String,
    pub solution: ReferenceSolution,
}

fn vec_line(tag: &str, v: Option<&Vector>) -> String {
    match v {
        None => format!("{tag} -\n"),
        Some(v) => {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            format!("{tag} {}\n", vals.join(" "))
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of an arbitrary description of a problem instance.
pub fn fingerprint(description: &str) -> String {
    sha256_hex(description.as_bytes())
}

/// Text dump of a reference; the last line is the SHA-256 of everything above it.
pub fn encode_reference(cache: &CachedReference) -> String {
    let s = &cache.solution;
    let mut body = String::new();
    body.push_str("sadmm-reference 1\n");
    body.push_str(&format!("fingerprint {}\n", cache.fingerprint));
    body.push_str(&format!("method {}\n", s.method.name()));
    body.push_str(&format!("theta_star {:e}\n", s.theta_star));
    body.push_str(&format!("certified_tolerance {:e}\n", s.certified_tolerance));
    body.push_str(&vec_line("x", Some(&s.x)));
    body.push_str(&vec_line("y", Some(&s.y)));
    body.push_str(&vec_line("lambda", s.lambda_star.as_ref()));
    let sum = sha256_hex(body.as_bytes());
    body.push_str(&format!("sha256 {sum}\n"));
    body
}

fn parse_err(msg: impl Into<String>) -> AdmmError {
    AdmmError::Io(format!("reference cache: {}", msg.into()))
}

pub fn decode_reference(text: &str) -> Result<CachedReference> {
    let split = text
        .rfind("sha256 ")
        .ok_or_else(|| parse_err("missing checksum line"))?;
    let (body, sum_line) = text.split_at(split);
    let sum = sum_line.trim_start_matches("sha256 ").trim();
    if sha256_hex(body.as_bytes()) != sum {
        return Err(parse_err("checksum mismatch"));
    }
    let mut lines = body.lines();
    if lines.next() != Some("sadmm-reference 1") {
        return Err(parse_err("unknown format"));
    }
    let mut field = |tag: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| parse_err(format!("missing `{tag}`")))?;
        line.strip_prefix(tag)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| parse_err(format!("expected `{tag}`, found `{line}`")))
    };
    let num = |s: String| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}")));
    let vec = |s: String| -> Result<Option<Vector>> {
        if s == "-" {
            return Ok(None);
        }
        let vals: std::result::Result<Vec<f64>, _> = s.split_whitespace().map(str::parse).collect();
        vals.map(|v| Some(Vector::from_vec(v)))
            .map_err(|e| parse_err(format!("bad vector: {e}")))
    };
    let fingerprint = field("fingerprint")?;
    let method_name = field("method")?;
    let method = ReferenceMethod::from_name(&method_name)
        .ok_or_else(|| parse_err(format!("unknown method `{method_name}`")))?;
    let theta_star = num(field("theta_star")?)?;
    let certified_tolerance = num(field("certified_tolerance")?)?;
    let x = vec(field("x")?)?.ok_or_else(|| parse_err("x is required"))?;
    let y = vec(field("y")?)?.ok_or_else(|| parse_err("y is required"))?;
    let lambda_star = vec(field("lambda")?)?;
    Ok(CachedReference {
        fingerprint,
        solution: ReferenceSolution {
            x,
            y,
            theta_star,
            lambda_star,
            method,
            certified_tolerance,
        },
    })
}

pub fn write_reference(path: &Path, cache: &CachedReference) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(encode_reference(cache).as_bytes())
        .map_err(|e| io_err(path, e))
}

/// Cached reference at `path` when it exists, is intact and matches `fingerprint`.
pub fn read_reference(path: &Path, fingerprint: &str) -> Option<ReferenceSolution> {
    let text = fs::read_to_string(path).ok()?;
    let cache = decode_reference(&text).ok()?;
    (cache.fingerprint == fingerprint).then_some(cache.solution)
}

pub fn trajectory_path(dir: &Path, replication: usize, partial: bool) -> PathBuf {
    let suffix = if partial { ".partial" } else { "" };
    dir.join("trajectories")
        .join(format!("replication_{replication:04}{suffix}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CachedReference {
        CachedReference {
            fingerprint: fingerprint("abc"),
            solution: ReferenceSolution {
                x: Vector::from_vec(vec![0.1, -2.5e-17, 3.0]),
                y: Vector::from_vec(vec![1.0 / 3.0, 0.0, f64::MIN_POSITIVE]),
                theta_star: 0.123456789012345,
                lambda_star: None,
                method: ReferenceMethod::KktDirect,
                certified_tolerance: 1e-12,
            },
        }
    }

    #[test]
    fn reference_round_trips_bit_exactly() {
        let c = sample();
        let back = decode_reference(&encode_reference(&c)).unwrap();
        assert_eq!(back, c);
        let mut c2 = c.clone();
        c2.solution.lambda_star = Some(Vector::from_vec(vec![-1.0, 2.0, 1e300]));
        assert_eq!(decode_reference(&encode_reference(&c2)).unwrap(), c2);
    }

    #[test]
    fn tampered_reference_is_rejected() {
        let text = encode_reference(&sample()).replace("theta_star 1.2", "theta_star 1.3");
        assert!(decode_reference(&text).is_err());
    }

    #[test]
    fn nan_fields_are_empty() {
        assert_eq!(fmt_num(f64::NAN), "");
        assert_eq!(fmt_num(0.5), "5e-1");
        assert_eq!("5e-1".parse::<f64>().unwrap(), 0.5);
    }
}
