//! Named coefficient presets and per-cell entry tables.

use std::path::Path;

use elliptic_lab::coefficients::{operator_norm, CellPartition, CoefficientTensor};
use elliptic_lab::geometry::PolygonalDomain;
use elliptic_lab::norms::{complex_gaussian, trial_rng};
use num_complex::Complex64;

use crate::config::ConfigError;

type C64 = Complex64;

/// Stream tag for coefficient draws, kept apart from the field streams.
const TENSOR_STREAM: u64 = 0x7E45_0000;

/// Builds a tensor from a preset string.
///
/// Accepted forms: `laplacian`, `identity:<m>`, `biharmonic_rho:<rho>`,
/// `diag_real_tindep:<a1>/<b1>,<a2>/<b2>,...`, `rotationlike`,
/// `random_complex`, `random_piecewise` and `table:<path>`.
pub fn parse_tensor(spec: &str, domain: &PolygonalDomain, seed: u64) -> Result<CoefficientTensor, ConfigError> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    let bad = |msg: String| ConfigError::Invalid(format!("tensor `{spec}`: {msg}"));
    let num = |a: Option<&str>| -> Result<f64, ConfigError> {
        a.ok_or_else(|| bad("missing argument".into()))?.parse::<f64>().map_err(|e| bad(e.to_string()))
    };
    let lab = |e: elliptic_lab::LabError| bad(e.to_string());
    match name {
        "laplacian" => Ok(CoefficientTensor::laplacian()),
        "identity" => {
            let m = arg.map_or(Ok(1), |a| a.parse::<usize>().map_err(|e| bad(e.to_string())))?;
            Ok(CoefficientTensor::identity(m, 1))
        }
        "biharmonic_rho" => CoefficientTensor::biharmonic_rho(num(arg)?, 2).map_err(lab),
        "diag_real_tindep" => {
            let bb = domain.bbox();
            let bands = arg.ok_or_else(|| bad("missing band table".into()))?;
            let mut diag = Vec::new();
            for band in bands.split(',') {
                let (a, b) = band.split_once('/').ok_or_else(|| bad(format!("band `{band}` is not a/b")))?;
                let a: f64 = a.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                let b: f64 = b.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                diag.push([a, b]);
            }
            CoefficientTensor::diag_real_tindep(bb.min.x, bb.max.x, &diag).map_err(lab)
        }
        "rotationlike" => Ok(rotationlike(domain)),
        "random_complex" => Ok(random_complex(seed)),
        "random_piecewise" => Ok(random_piecewise(domain, seed)),
        "table" => {
            let path = arg.ok_or_else(|| bad("missing path".into()))?;
            read_table(Path::new(path), domain).map_err(|e| bad(e))
        }
        other => Err(bad(format!("unknown preset `{other}`"))),
    }
}

/// `sigma(x) [[0, 1], [1, 0]]` with `sigma = +-1` on a 4x4 checkerboard.
pub fn rotationlike(domain: &PolygonalDomain) -> CoefficientTensor {
    let part = CellPartition::new(domain.bbox(), 4, 4);
    let blocks = (0..part.n_cells())
        .map(|c| {
            let sign = if (c % 4 + c / 4) % 2 == 0 { 1.0 } else { -1.0 };
            vec![C64::new(0.0, 0.0), C64::new(sign, 0.0), C64::new(sign, 0.0), C64::new(0.0, 0.0)]
        })
        .collect();
    CoefficientTensor::piecewise(1, 1, part, blocks).expect("2x2 blocks")
}

/// `I + 0.4 G / |G|` with a complex Gaussian `G`; coercive with constant at least 0.6.
pub fn random_complex(seed: u64) -> CoefficientTensor {
    let mut rng = trial_rng(seed ^ TENSOR_STREAM, 0);
    let g: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
    let n = operator_norm(&g, 2);
    let e = (0..4)
        .map(|i| {
            let id = if i == 0 || i == 3 { 1.0 } else { 0.0 };
            C64::new(id, 0.0) + g[i] * (0.4 / n)
        })
        .collect();
    CoefficientTensor::constant(1, 1, e).expect("2x2 entries")
}

/// Complex Gaussian blocks on a 4x4 partition, each scaled to operator norm one.
pub fn random_piecewise(domain: &PolygonalDomain, seed: u64) -> CoefficientTensor {
    let part = CellPartition::new(domain.bbox(), 4, 4);
    let blocks = (0..part.n_cells())
        .map(|c| {
            let mut rng = trial_rng(seed ^ TENSOR_STREAM, 1 + c as u64);
            let g: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
            let n = operator_norm(&g, 2);
            g.into_iter().map(|v| v / n).collect()
        })
        .collect();
    CoefficientTensor::piecewise(1, 1, part, blocks).expect("2x2 blocks")
}

/// CSV with header `j,k,alpha,beta,re,im` (one constant block, `m = 1`) or
/// `cell,j,k,alpha,beta,re,im` on a square partition of the bounding box.
/// Indices are zero-based; `m` is read from the largest multi-index slot.
fn read_table(path: &Path, domain: &PolygonalDomain) -> Result<CoefficientTensor, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or("empty table")?.split(',').map(str::trim).collect();
    let per_cell = match header.as_slice() {
        ["j", "k", "alpha", "beta", "re", "im"] => false,
        ["cell", "j", "k", "alpha", "beta", "re", "im"] => true,
        _ => return Err(format!("unexpected header {header:?}")),
    };
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != header.len() {
            return Err(format!("row {}: expected {} fields", ln + 2, header.len()));
        }
        let off = usize::from(per_cell);
        let idx = |i: usize| f[i].parse::<usize>().map_err(|e| format!("row {}: {e}", ln + 2));
        let val = |i: usize| f[i].parse::<f64>().map_err(|e| format!("row {}: {e}", ln + 2));
        let cell = if per_cell { idx(0)? } else { 0 };
        rows.push((cell, idx(off)?, idx(off + 1)?, idx(off + 2)?, idx(off + 3)?, C64::new(val(off + 4)?, val(off + 5)?)));
    }
    let n = rows.iter().map(|r| r.1.max(r.2)).max().ok_or("no entries")? + 1;
    let slots = rows.iter().map(|r| r.3.max(r.4)).max().unwrap() + 1;
    let m = match slots {
        1 | 2 => 1,
        3 => 2,
        s => return Err(format!("{s} multi-index slots is not a supported order")),
    };
    let nm = if m == 1 { 2 } else { 3 };
    let w = n * nm;
    let cells = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let mut blocks = vec![vec![C64::new(0.0, 0.0); w * w]; cells];
    for (c, j, k, a, b, v) in rows {
        blocks[c][(j * nm + a) * w + (k * nm + b)] = v;
    }
    if !per_cell {
        return CoefficientTensor::constant(m, n, blocks.pop().unwrap()).map_err(|e| e.to_string());
    }
    let side = (cells as f64).sqrt().round() as usize;
    if side * side != cells {
        return Err(format!("{cells} cells do not form a square partition"));
    }
    CoefficientTensor::piecewise(m, n, CellPartition::new(domain.bbox(), side, side), blocks).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use elliptic_lab::geometry::Point2;

    #[test]
    fn rotationlike_has_unit_norm_and_alternates() {
        let dom = PolygonalDomain::unit_square();
        let r = rotationlike(&dom);
        let a = r.matrix_at(Point2::new(0.1, 0.1));
        let b = r.matrix_at(Point2::new(0.35, 0.1));
        assert_eq!(a[1].re, 1.0);
        assert_eq!(b[1].re, -1.0);
        assert!((operator_norm(&a, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_complex_is_coercive_and_seeded() {
        let a = random_complex(7);
        let b = random_complex(7);
        let x = Point2::new(0.5, 0.5);
        assert_eq!(a.matrix_at(x), b.matrix_at(x));
        assert!(a.pointwise_garding_bound(&[x]) >= 0.6 - 1e-12);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(parse_tensor("nope", &PolygonalDomain::unit_square(), 1).is_err());
        assert!(parse_tensor("biharmonic_rho:0.3", &PolygonalDomain::unit_square(), 1).unwrap().m() == 2);
    }
}
