//! Serialized signature length as a function of ring size.

use serde::{Deserialize, Serialize};

use super::auth::{derive_seed, generate_ring, generate_server, sign_and_initiate, RingDirectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRow {
    pub n: usize,
    pub canonical_bytes: usize,
    pub fixed_width_bytes: usize,
}

/// Least-squares line `size = a·n + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
    pub max_abs_residual: f64,
}

/// Signs once for every ring size in `ns`, using prefixes of one generated
/// ring so that member widths stay comparable across rows.
pub fn signature_sizes(ns: &[usize], p_bits: u32, q_bits: u32, seed: &[u8]) -> Result<Vec<SizeRow>> {
    let max_n = ns.iter().copied().max().unwrap_or(0);
    if ns.iter().any(|&n| n == 0) || max_n == 0 {
        return Err(Error::Domain("ring sizes must be at least 1".into()));
    }
    let (full, secrets) = generate_ring(max_n, p_bits, q_bits, seed)?;
    let server = generate_server(p_bits, q_bits, seed)?;
    ns.iter()
        .map(|&n| {
            let ring = RingDirectory::new(full.members()[..n].to_vec())?;
            let cfg = ring.combining_config()?;
            let sign_seed = derive_seed(seed, "size-sign", n as u64);
            let (sig, _) = sign_and_initiate(&ring, 0, &secrets[0], &server.public(), b"size-probe", &cfg, &sign_seed)?;
            Ok(SizeRow {
                n,
                canonical_bytes: sig.encode(&cfg)?.len(),
                fixed_width_bytes: sig.encode_fixed_width(&cfg, &ring, &server.group)?.len(),
            })
        })
        .collect()
}

/// Least squares over integer points, computed exactly: residuals of an
/// affine data set come out as exactly zero. `None` with fewer than two
/// distinct abscissae.
pub fn fit_affine(points: &[(u64, u64)]) -> Option<AffineFit> {
    let n = points.len() as i128;
    let sx: i128 = points.iter().map(|p| p.0 as i128).sum();
    let sy: i128 = points.iter().map(|p| p.1 as i128).sum();
    let sxx: i128 = points.iter().map(|p| (p.0 as i128).pow(2)).sum();
    let sxy: i128 = points.iter().map(|p| p.0 as i128 * p.1 as i128).sum();
    let d = n * sxx - sx * sx;
    if d == 0 {
        return None;
    }
    let a_num = n * sxy - sx * sy;
    let b_num = sy * sxx - sx * sxy;
    let worst = points
        .iter()
        .map(|&(x, y)| (y as i128 * d - a_num * x as i128 - b_num).abs())
        .max()
        .unwrap_or(0);
    Some(AffineFit {
        a: a_num as f64 / d as f64,
        b: b_num as f64 / d as f64,
        max_abs_residual: worst as f64 / d as f64,
    })
}
